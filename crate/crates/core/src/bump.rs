//! Smooth bump functions with prescribed open support and unit L² norm.
//!
//! Every bump is `eta * exp(phi(t))` on `(a, b)` with
//! `phi(t) = -1 / ((t - a)(b - t))`, and zero elsewhere. Writing
//! `p(t) = (t - a)(b - t)` gives `p' = a + b - 2t`, `p'' = -2` and
//!
//! ```text
//! phi'  = p' / p²
//! phi'' = (p'' p - 2 p'²) / p³
//! bump'  = bump * phi'
//! bump'' = bump * (phi'² + phi'')
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::quad::Quadrature;

/// Below this exponent `exp(phi)` is treated as exactly zero. `exp(-700)` is
/// still a normal f64, so derivative products cannot become `0 * inf`.
const PHI_CUTOFF: f64 = -700.0;

// Relative: the unscaled mass is tiny (about 1e-15 on an interval of length
// one half), so an absolute tolerance would be meaningless.
const NORMALIZATION_TOL: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Derivative {
    Value,
    First,
    Second,
}

impl TryFrom<u8> for Derivative {
    type Error = LabError;

    fn try_from(order: u8) -> Result<Self> {
        match order {
            0 => Ok(Self::Value),
            1 => Ok(Self::First),
            2 => Ok(Self::Second),
            _ => Err(LabError::Domain(format!("derivative order {order} not in {{0,1,2}}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BumpFunction {
    a: f64,
    b: f64,
    eta: f64,
}

impl BumpFunction {
    /// Bump on `(a, b)` scaled so that `∫ bump² = 1`.
    pub fn normalized(a: f64, b: f64) -> Result<Self> {
        let unit = Self::with_amplitude(a, b, 1.0)?;
        let mass = Quadrature::with_tolerance(0.0, NORMALIZATION_TOL)
            .panels(16)
            .integrate(|t| unit.value(t).powi(2), a, b)?;
        // A vanishing mass would make eta infinite; this only happens for
        // intervals so short that exp(-4/(b-a)^2) underflows.
        if !(mass.value > 0.0) || !mass.value.is_finite() {
            return Err(LabError::Tolerance {
                tolerance: NORMALIZATION_TOL,
                estimate: mass.value,
                intervals: mass.intervals,
            });
        }
        Ok(Self {
            eta: mass.value.sqrt().recip(),
            ..unit
        })
    }

    /// Bump on `(a, b)` with an explicit amplitude.
    pub fn with_amplitude(a: f64, b: f64, eta: f64) -> Result<Self> {
        if !(b > a) || !a.is_finite() || !b.is_finite() {
            return Err(LabError::InvalidInterval { a, b });
        }
        if !(eta > 0.0) || !eta.is_finite() {
            return Err(crate::error::invalid("eta", format!("must be positive, got {eta}")));
        }
        Ok(Self { a, b, eta })
    }

    pub fn support(&self) -> (f64, f64) {
        (self.a, self.b)
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.a + self.b)
    }

    pub fn eval(&self, t: f64, order: Derivative) -> f64 {
        if !(t > self.a && t < self.b) {
            return 0.0;
        }
        let p = (t - self.a) * (self.b - t);
        let phi = -p.recip();
        if phi < PHI_CUTOFF {
            return 0.0;
        }
        let value = self.eta * phi.exp();
        match order {
            Derivative::Value => value,
            Derivative::First => {
                let dp = self.a + self.b - 2.0 * t;
                value * dp / (p * p)
            }
            Derivative::Second => {
                let dp = self.a + self.b - 2.0 * t;
                let dphi = dp / (p * p);
                let ddphi = (-2.0 * p - 2.0 * dp * dp) / (p * p * p);
                value * (dphi * dphi + ddphi)
            }
        }
    }

    #[inline]
    pub fn value(&self, t: f64) -> f64 {
        self.eval(t, Derivative::Value)
    }

    #[inline]
    pub fn deriv1(&self, t: f64) -> f64 {
        self.eval(t, Derivative::First)
    }

    #[inline]
    pub fn deriv2(&self, t: f64) -> f64 {
        self.eval(t, Derivative::Second)
    }

    /// `∫ bump²` over the support.
    pub fn l2_norm_sq(&self) -> Result<f64> {
        Ok(Quadrature::with_tolerance(0.0, NORMALIZATION_TOL)
            .panels(16)
            .integrate(|t| self.value(t).powi(2), self.a, self.b)?
            .value)
    }

    /// Supremum of `|order-th derivative|` over a uniform grid on the
    /// support, doubled from 10⁴ points until the relative change is below
    /// 10⁻⁶.
    pub fn sup_abs(&self, order: Derivative) -> f64 {
        sup_on_grid(|t| self.eval(t, order).abs(), self.a, self.b, 10_000)
    }
}

fn grid_max<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, points: usize) -> f64 {
    let h = (b - a) / (points - 1) as f64;
    (0..points).map(|i| f(a + h * i as f64)).fold(0.0, f64::max)
}

pub(crate) fn sup_on_grid<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, start: usize) -> f64 {
    const MAX_POINTS: usize = 1 << 24;
    let mut points = start.max(2);
    let mut current = grid_max(&f, a, b, points);
    while points < MAX_POINTS {
        points = 2 * points - 1;
        let refined = grid_max(&f, a, b, points);
        let change = (refined - current).abs();
        current = refined;
        if change <= 1e-6 * refined.abs() {
            break;
        }
    }
    current
}

/// Sup norms of the bump terms entering the growth and Lyapunov constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupNorms {
    pub f: f64,
    pub f_prime: f64,
    pub g_prime: f64,
    pub g_second: f64,
}

impl SupNorms {
    pub fn of(f: &BumpFunction, g: &BumpFunction) -> Self {
        Self {
            f: f.sup_abs(Derivative::Value),
            f_prime: f.sup_abs(Derivative::First),
            g_prime: g.sup_abs(Derivative::First),
            g_second: g.sup_abs(Derivative::Second),
        }
    }

    /// `max{1, sup|f|, sup|f'|, sup|g'|, sup|g''|}`.
    pub fn growth_constant(&self) -> f64 {
        [1.0, self.f, self.f_prime, self.g_prime, self.g_second]
            .into_iter()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// `sup max{|f|, |g'|}`, the constant of the Lyapunov estimate.
    pub fn lyapunov_constant(&self) -> f64 {
        self.f.max(self.g_prime)
    }
}

/// `C = sup_t max{1, |f|, |f'|, |g'|, |g''|}`.
pub fn sup_bounds(f: &BumpFunction, g: &BumpFunction) -> f64 {
    SupNorms::of(f, g).growth_constant()
}
