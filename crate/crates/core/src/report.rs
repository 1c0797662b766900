//! Pass/fail reports for the inequality checks.

use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Relative slack absorbing floating-point rounding in `lhs <= rhs`.
pub const ROUNDING_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub check: String,
    pub params: Value,
    /// Largest `lhs − rhs` among violating samples, 0 when none.
    pub max_violation: f64,
    pub grid_size: usize,
    pub passed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_ratio: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counterexample: Option<Value>,
}

impl CheckReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

/// Accumulates `lhs <= rhs` samples.
#[derive(Debug, Clone)]
pub struct RatioTracker {
    check: String,
    params: Value,
    samples: usize,
    violations: usize,
    max_violation: f64,
    max_ratio: f64,
    counterexample: Option<Value>,
}

impl RatioTracker {
    pub fn new(check: impl Into<String>, params: Value) -> Self {
        Self {
            check: check.into(),
            params,
            samples: 0,
            violations: 0,
            max_violation: 0.0,
            max_ratio: f64::NEG_INFINITY,
            counterexample: None,
        }
    }

    /// Records one sample; `witness` is only built for the first violation.
    pub fn record(&mut self, lhs: f64, rhs: f64, witness: impl FnOnce() -> Value) {
        self.samples += 1;
        let ratio = if rhs == 0.0 {
            if lhs <= 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            lhs / rhs
        };
        if ratio > self.max_ratio || ratio.is_nan() {
            self.max_ratio = ratio;
        }
        let ok = lhs <= rhs + ROUNDING_SLACK * rhs.abs();
        if !ok {
            self.violations += 1;
            let excess = lhs - rhs;
            if !(excess <= self.max_violation) {
                self.max_violation = excess;
            }
            if self.counterexample.is_none() {
                let mut w = witness();
                if let Value::Object(map) = &mut w {
                    map.insert("lhs".into(), lhs.into());
                    map.insert("rhs".into(), rhs.into());
                }
                self.counterexample = Some(w);
            }
        }
    }

    pub fn violations(&self) -> usize {
        self.violations
    }

    pub fn finish(self) -> CheckReport {
        let mut params = self.params;
        if let Value::Object(map) = &mut params {
            map.insert("violations".into(), self.violations.into());
        }
        CheckReport {
            check: self.check,
            params,
            max_violation: self.max_violation,
            grid_size: self.samples,
            passed: self.violations == 0 && self.samples > 0,
            max_ratio: self.max_ratio.is_finite().then_some(self.max_ratio),
            counterexample: self.counterexample,
        }
    }
}
