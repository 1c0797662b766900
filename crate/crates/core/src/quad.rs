//! Globally adaptive Gauss–Kronrod (7/15) quadrature.
//!
//! The integrand is first split into `initial_panels` equal panels so that
//! narrow peaks are not missed by the first estimate. The panel with the
//! largest error estimate is bisected until the summed error estimate drops
//! below `max(abs_tol, rel_tol * |value|)`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{LabError, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];

// Gauss weights for the nodes XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
    pub intervals: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct Quadrature {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub initial_panels: usize,
    pub max_intervals: usize,
}

impl Default for Quadrature {
    fn default() -> Self {
        Self {
            abs_tol: 1e-12,
            rel_tol: 1e-10,
            initial_panels: 1,
            max_intervals: 20_000,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}

impl Eq for Panel {}

impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn kronrod<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> Panel {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for (j, (&x, &w)) in XGK[..7].iter().zip(&WGK[..7]).enumerate() {
        let dx = half * x;
        let pair = f(center - dx) + f(center + dx);
        kronrod += w * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    Panel {
        a,
        b,
        value: kronrod * half,
        error: ((kronrod - gauss) * half).abs(),
    }
}

impl Quadrature {
    pub fn with_tolerance(abs_tol: f64, rel_tol: f64) -> Self {
        Self {
            abs_tol,
            rel_tol,
            ..Self::default()
        }
    }

    pub fn panels(mut self, initial_panels: usize) -> Self {
        self.initial_panels = initial_panels.max(1);
        self
    }

    pub fn max_intervals(mut self, max_intervals: usize) -> Self {
        self.max_intervals = max_intervals;
        self
    }

    /// Integrates `f` over `[a, b]`. Reversed bounds flip the sign.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F, a: f64, b: f64) -> Result<Estimate> {
        if a == b {
            return Ok(Estimate {
                value: 0.0,
                error: 0.0,
                intervals: 0,
            });
        }
        if b < a {
            let est = self.integrate(f, b, a)?;
            return Ok(Estimate {
                value: -est.value,
                ..est
            });
        }

        let panels = self.initial_panels.max(1);
        let width = (b - a) / panels as f64;
        let mut heap = BinaryHeap::with_capacity(panels * 2);
        for i in 0..panels {
            let lo = a + width * i as f64;
            let hi = if i + 1 == panels { b } else { lo + width };
            heap.push(kronrod(&mut f, lo, hi));
        }

        loop {
            let (value, error) = heap
                .iter()
                .fold((0.0, 0.0), |(v, e), p| (v + p.value, e + p.error));
            if !value.is_finite() {
                return Err(LabError::Tolerance {
                    tolerance: self.abs_tol,
                    estimate: f64::INFINITY,
                    intervals: heap.len(),
                });
            }
            let target = self.abs_tol.max(self.rel_tol * value.abs());
            if error <= target {
                return Ok(Estimate {
                    value,
                    error,
                    intervals: heap.len(),
                });
            }
            let worst = heap.pop().expect("heap is never empty");
            let mid = 0.5 * (worst.a + worst.b);
            // Interval cannot be split further in floating point.
            if heap.len() + 2 > self.max_intervals || mid <= worst.a || mid >= worst.b {
                heap.push(worst);
                return Err(LabError::Tolerance {
                    tolerance: target,
                    estimate: error,
                    intervals: heap.len(),
                });
            }
            heap.push(kronrod(&mut f, worst.a, mid));
            heap.push(kronrod(&mut f, mid, worst.b));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomials_are_exact() {
        let q = Quadrature::default();
        let est = q.integrate(|x| x.powi(5) - 3.0 * x * x + 1.0, -1.0, 2.0).unwrap();
        let exact = (64.0 - 1.0) / 6.0 - (8.0 + 1.0) + 3.0;
        assert!((est.value - exact).abs() < 1e-13);
        assert_eq!(est.intervals, 1);
    }

    #[test]
    fn reversed_bounds_flip_sign() {
        let q = Quadrature::default();
        let fwd = q.integrate(f64::exp, 0.0, 1.0).unwrap().value;
        let rev = q.integrate(f64::exp, 1.0, 0.0).unwrap().value;
        assert_eq!(fwd, -rev);
        assert!((fwd - (std::f64::consts::E - 1.0)).abs() < 1e-14);
    }

    #[test]
    fn narrow_peak_found_with_panels() {
        let q = Quadrature::with_tolerance(1e-13, 1e-11).panels(64);
        let width = 1e-3_f64;
        let est = q
            .integrate(|x| (-(x - 0.7).powi(2) / (2.0 * width * width)).exp(), 0.0, 12.0)
            .unwrap();
        let exact = width * (2.0 * std::f64::consts::PI).sqrt();
        assert!((est.value - exact).abs() / exact < 1e-10);
    }

    #[test]
    fn singular_integrand_reports_tolerance_error() {
        let q = Quadrature::with_tolerance(1e-14, 0.0).max_intervals(50);
        let err = q.integrate(|x| 1.0 / x.sqrt(), 0.0, 1.0).unwrap_err();
        assert!(matches!(err, LabError::Tolerance { .. }));
    }
}
