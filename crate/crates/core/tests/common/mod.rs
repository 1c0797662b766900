//! Reference computations that share no code with the library: adaptive
//! Simpson, composite Simpson on a fixed grid and a hand-written RK4.

#![allow(dead_code)]

pub const SQRT_2PI: f64 = 2.506_628_274_631_000_7;

fn simpson_step<F: Fn(f64) -> f64>(f: &F, a: f64, fa: f64, b: f64, fb: f64, m: f64, fm: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, fa, m, fm, lm, flm, left, 0.5 * tol, depth - 1)
        + simpson_step(f, m, fm, b, fb, rm, frm, right, 0.5 * tol, depth - 1)
}

/// Adaptive Simpson with absolute tolerance `tol`, started on `panels`
/// equal pieces.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64, panels: usize) -> f64 {
    let h = (b - a) / panels as f64;
    (0..panels)
        .map(|i| {
            let (x0, x1) = (a + h * i as f64, a + h * (i + 1) as f64);
            let m = 0.5 * (x0 + x1);
            let (f0, f1, fm) = (f(x0), f(x1), f(m));
            let whole = (x1 - x0) / 6.0 * (f0 + 4.0 * fm + f1);
            simpson_step(&f, x0, f0, x1, f1, m, fm, whole, tol / panels as f64, 48)
        })
        .sum()
}

/// Composite Simpson on `2k` intervals.
pub fn composite_simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, k: usize) -> f64 {
    let n = 2 * k;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + h * i as f64) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

/// `exp(−1/((t − a)(b − t)))` on `(a, b)`, zero elsewhere.
pub fn raw_bump(a: f64, b: f64, t: f64) -> f64 {
    if t <= a || t >= b {
        0.0
    } else {
        (-1.0 / ((t - a) * (b - t))).exp()
    }
}

/// `1/‖h‖₂` for the raw bump.
pub fn eta_oracle(a: f64, b: f64) -> f64 {
    let mass = composite_simpson(|t| raw_bump(a, b, t).powi(2), a, b, 100_000);
    1.0 / mass.sqrt()
}

/// Normal density.
pub fn phi(z: f64) -> f64 {
    (-0.5 * z * z).exp() / SQRT_2PI
}

/// `E[ε exp(κ Zⁿ − ε²κ exp(2κ Zⁿ))]` by composite Simpson on `[−12, 12]`.
pub fn envelope_oracle(eps: f64, kappa: f64, n: i32) -> f64 {
    let integrand = |z: f64| {
        let y = z.powi(n);
        let damp = 2.0 * eps.ln() + kappa.ln() + 2.0 * kappa * y;
        if damp > 700.0 {
            return 0.0;
        }
        (eps.ln() + kappa * y - damp.exp() - 0.5 * z * z).exp() / SQRT_2PI
    };
    composite_simpson(integrand, -12.0, 12.0, 60_000)
}

/// Distance `‖X⁰(t) − X^{εe₄}(t)‖` given `Z = X₃(τ) = z`, for the five
/// dimensional model with `F = ∫_τ^t f`. After the change of clock
/// `s ↦ ∫_τ^s f` the pair `(X₄, X₅)` solves the autonomous system
/// `y₄' = y₄y₅`, `y₅' = zⁿ − y₄²` from `(ε, 0)` on `[0, F]`, while the
/// unperturbed solution has `X₄ = 0`, `X₅ = zⁿF`.
pub fn conditional_distance(z: f64, n: i32, eps: f64, big_f: f64) -> f64 {
    let zn = z.powi(n);
    let steps = (2000.0 * (1.0 + z.abs().powf(n as f64 / 2.0) * big_f)).ceil() as usize;
    let h = big_f / steps as f64;
    let rhs = |y4: f64, y5: f64| (y4 * y5, zn - y4 * y4);
    let (mut y4, mut y5) = (eps, 0.0);
    for _ in 0..steps {
        let k1 = rhs(y4, y5);
        let k2 = rhs(y4 + 0.5 * h * k1.0, y5 + 0.5 * h * k1.1);
        let k3 = rhs(y4 + 0.5 * h * k2.0, y5 + 0.5 * h * k2.1);
        let k4 = rhs(y4 + h * k3.0, y5 + h * k3.1);
        y4 += h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
        y5 += h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
    }
    y4.hypot(y5 - zn * big_f)
}

/// `E‖X⁰(t) − X^{εe₄}(t)‖` with `Z ~ N(0, 1)`.
pub fn distance_oracle(eps: f64, n: i32, big_f: f64) -> f64 {
    composite_simpson(|z| conditional_distance(z, n, eps, big_f) * phi(z), -7.0, 7.0, 1400)
}

/// Local slopes of `ln m` against `ln ε` on adjacent pairs.
pub fn pair_slopes(eps: &[f64], m: &[f64]) -> Vec<f64> {
    (1..eps.len())
        .map(|i| (m[i].ln() - m[i - 1].ln()) / (eps[i].ln() - eps[i - 1].ln()))
        .collect()
}
