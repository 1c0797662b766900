//! Deterministic evaluation of the analytic quantities behind the
//! non-Hölder lower bound.
//!
//! * `κ_t = ∫_τ^t ∫_τ^s f(u)f(s) du ds = ½(∫_τ^t f)²`.
//! * The normal functional `E[ε exp(κ|Z|^p − ε²κ exp(2κ|Z|^p))]` and its
//!   lower bound `exp(−c|ln ε|^{2/p})`, `c = pκ^{−2/p} + (√(2π)p + 1)κ + 1`.
//! * `Var ∫₀^τ g'(s)W(s) ds = ∫∫ g'(s)g'(u) min(s, u) du ds`.
//! * The pathwise envelope of `X₄` for the start `εe₄`.
//! * The comparison `exp(−c|ln r|^β) ≥ K r^α` on `(0, R]`.

use serde::Serialize;
use serde_json::json;

use crate::bump::BumpFunction;
use crate::error::{invalid, LabError, Result};
use crate::model::PERTURBED_AXIS;
use crate::paths::TimeGrid;
use crate::quad::Quadrature;
use crate::report::{CheckReport, RatioTracker};
use crate::solvers::SolutionPath;

const SQRT_2PI: f64 = 2.506_628_274_631_000_7;

/// Past this the standard normal density is below 1e-300.
const Z_CUTOFF: f64 = 12.0;

/// Relative slack for the pathwise envelope of `X₄`.
pub const SANDWICH_SLACK: f64 = 1e-3;

fn quad_f() -> Quadrature {
    Quadrature::with_tolerance(1e-15, 1e-13).panels(8)
}

/// `½(∫_τ^t f)²`.
pub fn kappa_t(f: &BumpFunction, tau: f64, t: f64) -> Result<f64> {
    if t < tau {
        return Err(LabError::Domain(format!("kappa_t needs t >= tau, got t = {t} < {tau}")));
    }
    let mass = quad_f().integrate(|s| f.value(s), tau, t)?.value;
    Ok(0.5 * mass * mass)
}

/// `κ_t` at every grid node `t ≥ τ`.
#[derive(Debug, Clone, Serialize)]
pub struct KappaSchedule {
    tau: f64,
    first_index: usize,
    values: Vec<f64>,
}

impl KappaSchedule {
    /// Evaluates `κ` at the grid nodes from the first node `≥ τ` on,
    /// accumulating `∫ f` interval by interval.
    pub fn new(f: &BumpFunction, tau: f64, grid: &TimeGrid) -> Result<Self> {
        if !(tau >= 0.0 && tau <= grid.horizon()) {
            return Err(LabError::Domain(format!("tau = {tau} outside the grid")));
        }
        let mut first_index = grid.index_at_or_before(tau);
        if grid.time(first_index) < tau {
            first_index += 1;
        }
        let mut mass = quad_f().integrate(|s| f.value(s), tau, grid.time(first_index))?.value;
        let mut values = Vec::with_capacity(grid.steps() + 1 - first_index);
        values.push(0.5 * mass * mass);
        for k in first_index..grid.steps() {
            mass += quad_f().integrate(|s| f.value(s), grid.time(k), grid.time(k + 1))?.value;
            values.push(0.5 * mass * mass);
        }
        Ok(Self {
            tau,
            first_index,
            values,
        })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn first_index(&self) -> usize {
        self.first_index
    }

    /// `κ` at grid node `k`, `None` before `τ`.
    pub fn at_index(&self, k: usize) -> Option<f64> {
        k.checked_sub(self.first_index).and_then(|i| self.values.get(i).copied())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Lemma21Params {
    pub p: f64,
    pub kappa: f64,
    pub eps: f64,
}

impl Lemma21Params {
    pub fn new(p: f64, kappa: f64, eps: f64) -> Result<Self> {
        let prm = Self { p, kappa, eps };
        prm.validate()?;
        Ok(prm)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p >= 1.0) || !self.p.is_finite() {
            return Err(invalid("p", format!("must be at least 1, got {}", self.p)));
        }
        if !(self.kappa > 0.0) || !self.kappa.is_finite() {
            return Err(invalid("kappa", format!("must be positive, got {}", self.kappa)));
        }
        if !(self.eps > 0.0 && self.eps <= (-1f64).exp()) {
            return Err(invalid("eps", format!("must lie in (0, 1/e], got {}", self.eps)));
        }
        Ok(())
    }
}

/// `c = pκ^{−2/p} + (√(2π)p + 1)κ + 1`.
pub fn lemma21_constant(p: f64, kappa: f64) -> f64 {
    p * kappa.powf(-2.0 / p) + (SQRT_2PI * p + 1.0) * kappa + 1.0
}

/// Log of `ε exp(κy − ε²κ exp(2κy))` for `y = |z|^p` (or `zⁿ`).
fn log_envelope(eps: f64, kappa: f64, y: f64) -> f64 {
    let damp_log = 2.0 * eps.ln() + kappa.ln() + 2.0 * kappa * y;
    if damp_log > 709.0 {
        return f64::NEG_INFINITY;
    }
    eps.ln() + kappa * y - damp_log.exp()
}

/// How the power of `Z` enters the functional.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PowerKind {
    /// `|Z|^p`.
    Absolute,
    /// `Zⁿ` for an integer `n`.
    Signed,
}

/// `E[ε exp(κ Y − ε²κ exp(2κY))]` with `Y = |Z|^p` or `Y = Z^p`,
/// `Z ~ N(0, 1)`, by adaptive quadrature over `|z| ≤ 12`. The integrand
/// is assembled in log space and exponentiated last.
pub fn normal_functional(eps: f64, kappa: f64, p: f64, kind: PowerKind) -> Result<f64> {
    if eps == 0.0 {
        return Ok(0.0);
    }
    let integrand = |z: f64| {
        let y = match kind {
            PowerKind::Absolute => z.abs().powf(p),
            PowerKind::Signed => z.powi(p as i32),
        };
        (log_envelope(eps, kappa, y) - 0.5 * z * z).exp() / SQRT_2PI
    };
    let q = Quadrature::with_tolerance(1e-300, 1e-11).panels(256).max_intervals(200_000);
    let value = match kind {
        PowerKind::Absolute => 2.0 * q.integrate(integrand, 0.0, Z_CUTOFF)?.value,
        PowerKind::Signed => q.integrate(integrand, -Z_CUTOFF, Z_CUTOFF)?.value,
    };
    Ok(value)
}

pub fn lemma21_lhs(prm: &Lemma21Params) -> Result<f64> {
    prm.validate()?;
    normal_functional(prm.eps, prm.kappa, prm.p, PowerKind::Absolute)
}

/// `exp(−c|ln ε|^{2/p})`.
pub fn lemma21_rhs(prm: &Lemma21Params) -> Result<f64> {
    prm.validate()?;
    let c = lemma21_constant(prm.p, prm.kappa);
    Ok((-c * prm.eps.ln().abs().powf(2.0 / prm.p)).exp())
}

pub fn check_lemma21(prm: &Lemma21Params) -> Result<CheckReport> {
    check_lemma21_grid(&[prm.p], &[prm.kappa], &[prm.eps])
}

/// Checks `lhs ≥ rhs` on the product grid `ps × kappas × epss`.
pub fn check_lemma21_grid(ps: &[f64], kappas: &[f64], epss: &[f64]) -> Result<CheckReport> {
    let mut tracker = RatioTracker::new(
        "lemma21_lower_bound",
        json!({ "p": ps, "kappa": kappas, "eps": epss }),
    );
    let mut min_margin = f64::INFINITY;
    for &p in ps {
        for &kappa in kappas {
            for &eps in epss {
                let prm = Lemma21Params::new(p, kappa, eps)?;
                let (lhs, rhs) = (lemma21_lhs(&prm)?, lemma21_rhs(&prm)?);
                min_margin = min_margin.min(lhs.ln() - rhs.ln());
                tracker.record(rhs, lhs, || json!({ "p": p, "kappa": kappa, "eps": eps }));
            }
        }
    }
    let mut report = tracker.finish();
    report.params["min_log_margin"] = json!(min_margin);
    Ok(report)
}

/// `∫₀^τ ∫₀^τ g'(s)g'(u) min(s, u) du ds`, evaluated as
/// `2 ∫₀^τ g'(s) [∫₀^s u g'(u) du] ds` with nested adaptive quadrature.
pub fn stdnorm_variance(g: &BumpFunction, tau: f64) -> Result<f64> {
    let (a, b) = g.support();
    if a < 0.0 || b > tau {
        return Err(LabError::Domain(format!(
            "g must be supported in [0, {tau}], support is ({a}, {b})"
        )));
    }
    let inner_q = Quadrature::with_tolerance(1e-14, 1e-12).panels(4);
    let mut failure = None;
    let outer = Quadrature::with_tolerance(1e-13, 1e-11).panels(8).integrate(
        |s| {
            let gs = g.deriv1(s);
            if gs == 0.0 {
                return 0.0;
            }
            match inner_q.integrate(|u| u * g.deriv1(u), 0.0, s) {
                Ok(inner) => gs * inner.value,
                Err(e) => {
                    failure.get_or_insert(e);
                    f64::NAN
                }
            }
        },
        0.0,
        tau,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(2.0 * outer?.value)
}

/// Checks `lower ≤ X₄(t) ≤ upper` at every grid node `t ≥ τ` for a cascade
/// path started at `εe₄`:
///
/// ```text
/// upper = ε exp(κ_t Zⁿ)
/// lower = ε exp(κ_t Zⁿ − ε²κ_t exp(2κ_t Zⁿ)),   Z = X₃(τ)
/// ```
///
/// Comparisons are done in log space with relative slack
/// [`SANDWICH_SLACK`].
pub fn sandwich_check(path: &SolutionPath, eps: f64, n: u32, schedule: &KappaSchedule) -> Result<CheckReport> {
    if path.dim() < 5 {
        return Err(LabError::DimensionMismatch {
            expected: 5,
            got: path.dim(),
        });
    }
    if !(eps >= 0.0) {
        return Err(invalid("eps", format!("must be nonnegative, got {eps}")));
    }
    let tau_index = schedule.first_index();
    let z = path.component(tau_index, 2);
    let zn = z.powi(n as i32);
    let steps = path.grid().steps();
    let params = json!({ "eps": eps, "n": n, "z": z, "slack": SANDWICH_SLACK });
    let mut upper_t = RatioTracker::new("sandwich_upper", params.clone());
    let mut lower_t = RatioTracker::new("sandwich_lower", params.clone());

    for k in tau_index..=steps {
        let kappa = schedule.at_index(k).expect("schedule covers t >= tau");
        let x4 = path.component(k, PERTURBED_AXIS);
        let t = path.grid().time(k);
        if eps == 0.0 {
            upper_t.record(x4.abs(), 0.0, || json!({ "t": t, "x4": x4 }));
            lower_t.record(0.0, x4.abs(), || json!({ "t": t, "x4": x4 }));
            continue;
        }
        let log_x4 = if x4 > 0.0 { x4.ln() } else { f64::NEG_INFINITY };
        let log_upper = eps.ln() + kappa * zn + SANDWICH_SLACK.ln_1p();
        let log_lower = if kappa == 0.0 {
            eps.ln()
        } else {
            log_envelope(eps, kappa, zn)
        } + (-SANDWICH_SLACK).ln_1p();
        // Record in the form lhs <= rhs on exp-shifted values so that the
        // ratios are meaningful: x4/upper <= 1 and lower/x4 <= 1.
        upper_t.record((log_x4 - log_upper).exp(), 1.0, || json!({ "t": t, "x4": x4, "kappa_t": kappa }));
        let lower_ratio = if log_lower == f64::NEG_INFINITY {
            0.0
        } else {
            (log_lower - log_x4).exp()
        };
        lower_t.record(lower_ratio, 1.0, || json!({ "t": t, "x4": x4, "kappa_t": kappa }));
    }

    let (up, lo) = (upper_t.finish(), lower_t.finish());
    let passed = up.passed && lo.passed;
    Ok(CheckReport {
        check: "sandwich".into(),
        params: json!({ "eps": eps, "n": n, "z": z, "slack": SANDWICH_SLACK, "upper": up, "lower": lo }),
        max_violation: up.max_violation.max(lo.max_violation),
        grid_size: up.grid_size,
        passed,
        max_ratio: match (up.max_ratio, lo.max_ratio) {
            (Some(a), Some(b)) => Some(a.max(b)),
            (a, b) => a.or(b),
        },
        counterexample: up.counterexample.or(lo.counterexample),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HoelderCompParams {
    pub c: f64,
    pub r_max: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl HoelderCompParams {
    pub fn new(c: f64, r_max: f64, alpha: f64, beta: f64) -> Result<Self> {
        let prm = Self { c, r_max, alpha, beta };
        prm.validate()?;
        Ok(prm)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(LabError::Domain(format!("beta must lie in (0, 1), got {}", self.beta)));
        }
        for (name, v) in [("c", self.c), ("R", self.r_max), ("alpha", self.alpha)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(LabError::Domain(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// `s* = (c/α)^{1/(1−β)}`, so the threshold is `r* = exp(−s*)`.
pub fn hoeldercomp_log_threshold(c: f64, alpha: f64, beta: f64) -> Result<f64> {
    HoelderCompParams::new(c, 1.0, alpha, beta)?;
    Ok(-(c / alpha).powf(1.0 / (1.0 - beta)))
}

/// `r* = exp(−(c/α)^{1/(1−β)})`; underflows to 0 when `s*` is large.
pub fn hoeldercomp_threshold(c: f64, alpha: f64, beta: f64) -> Result<f64> {
    Ok(hoeldercomp_log_threshold(c, alpha, beta)?.exp())
}

/// `ln(exp(−c|ln r|^β) / r^α)` written in `s = −ln r`.
fn comparison_log(prm: &HoelderCompParams, s: f64) -> f64 {
    -prm.c * s.abs().powf(prm.beta) + prm.alpha * s
}

const K_GRID: usize = 10_000;

/// `ln K` with `K = min(1, min_{r ∈ [r*, R]} exp(−c|ln r|^β)/r^α)`: dense grid
/// uniform in `ln r` followed by golden-section refinement.
pub fn hoeldercomp_log_k(prm: &HoelderCompParams) -> Result<f64> {
    hoeldercomp_log_k_with_grid(prm, K_GRID)
}

pub fn hoeldercomp_log_k_with_grid(prm: &HoelderCompParams, points: usize) -> Result<f64> {
    prm.validate()?;
    let s_hi = -hoeldercomp_log_threshold(prm.c, prm.alpha, prm.beta)?;
    let s_lo = -prm.r_max.ln();
    if s_lo > s_hi {
        return Ok(0.0);
    }
    let points = points.max(2);
    let h = (s_hi - s_lo) / (points - 1) as f64;
    let (mut best_i, mut best) = (0, f64::INFINITY);
    for i in 0..points {
        let v = comparison_log(prm, s_lo + h * i as f64);
        if v < best {
            best = v;
            best_i = i;
        }
    }
    // Golden-section search on the bracket around the grid minimum.
    let (mut a, mut b) = (
        s_lo + h * best_i.saturating_sub(1) as f64,
        (s_lo + h * (best_i + 1) as f64).min(s_hi),
    );
    let inv_phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let (mut f1, mut f2) = (comparison_log(prm, x1), comparison_log(prm, x2));
    for _ in 0..200 {
        if (b - a).abs() <= 1e-14 * (1.0 + a.abs()) {
            break;
        }
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = comparison_log(prm, x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = comparison_log(prm, x2);
        }
    }
    Ok(best.min(f1).min(f2).min(0.0))
}

pub fn hoeldercomp_k(prm: &HoelderCompParams) -> Result<f64> {
    Ok(hoeldercomp_log_k(prm)?.exp())
}

/// Checks on `points` nodes uniform in `ln r` that
/// `exp(−c|ln r|^β) ≥ K r^α` on `(0, R]` and `exp(−c|ln r|^β) ≥ r^α` for
/// `r ≤ r*`. The grid extends to `ln r = ln r* − max(10, |ln r*|)` so that
/// both regimes are sampled.
pub fn check_hoeldercomp(prm: &HoelderCompParams, points: usize) -> Result<CheckReport> {
    prm.validate()?;
    let log_k = hoeldercomp_log_k(prm)?;
    let s_star = -hoeldercomp_log_threshold(prm.c, prm.alpha, prm.beta)?;
    let s_lo = -prm.r_max.ln();
    let s_hi = s_star.max(s_lo) + s_star.abs().max(10.0);
    let points = points.max(2);
    let h = (s_hi - s_lo) / (points - 1) as f64;
    let mut global = RatioTracker::new("hoeldercomp_k", json!({}));
    let mut below = RatioTracker::new("hoeldercomp_below_threshold", json!({}));
    for i in 0..points {
        let s = s_lo + h * i as f64;
        let log_lhs = -prm.c * s.abs().powf(prm.beta);
        let log_kr = log_k - prm.alpha * s;
        // Compare as exp(log_kr - log_lhs) <= 1.
        global.record((log_kr - log_lhs).exp(), 1.0, || json!({ "ln_r": -s }));
        if s >= s_star {
            below.record((-prm.alpha * s - log_lhs).exp(), 1.0, || json!({ "ln_r": -s }));
        }
    }
    let (g, b) = (global.finish(), below.finish());
    let k = log_k.exp();
    // K itself may underflow; K ∈ (0, 1] is decided on ln K.
    let passed = g.passed && (b.passed || b.grid_size == 0) && log_k.is_finite() && log_k <= 0.0;
    Ok(CheckReport {
        check: "hoeldercomp".into(),
        params: json!({
            "c": prm.c, "R": prm.r_max, "alpha": prm.alpha, "beta": prm.beta,
            "K": k, "ln_K": log_k, "ln_r_star": -s_star, "points_below_threshold": b.grid_size,
        }),
        max_violation: g.max_violation.max(b.max_violation),
        grid_size: points,
        passed,
        max_ratio: g.max_ratio,
        counterexample: g.counterexample.or(b.counterexample),
    })
}
