//! The counterexample drift and its Lyapunov data.
//!
//! The core drift acts on ℝ⁵,
//!
//! ```text
//! ν(x) = (1, 0, g'(x₁)x₂, f(x₁)x₄x₅, f(x₁)(x₃ⁿ − x₄²))
//! ```
//!
//! with `g` a unit-L² bump on `(0, τ)` and `f` a bump on `(τ, T)`. It is
//! embedded in ℝᵈ by acting on the first five coordinates and returning zero
//! elsewhere, and then moved to a general base point `v` and direction `δ`
//! by the affine map `x ↦ Bx + v`, `B = ‖δ‖A`, where `A` is orthogonal with
//! `A e₄ = δ/‖δ‖`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::bump::{BumpFunction, SupNorms};
use crate::error::{invalid, LabError, Result};
use crate::report::{CheckReport, RatioTracker};

/// Index of the perturbed coordinate `x₄` (zero based).
pub const PERTURBED_AXIS: usize = 3;
/// Index of the noisy coordinate `x₂` (zero based).
pub const NOISE_AXIS: usize = 1;

pub type Vec5 = [f64; 5];
pub type Mat5 = [[f64; 5]; 5];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    /// Power `n` of `x₃` in the drift.
    pub n: u32,
    pub tau: f64,
    /// Horizon `T`.
    pub horizon: f64,
    /// State dimension `d`.
    pub dim: usize,
    /// Noise dimension `m`.
    pub noise_dim: usize,
    /// Lyapunov exponent `p`.
    pub p: f64,
    /// Lyapunov exponent `q >= 2pn`.
    pub q: f64,
    /// Base point `v`.
    pub shift: Vec<f64>,
    /// Perturbation direction `δ`.
    pub direction: Vec<f64>,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self::axis_aligned(4, 5)
    }
}

impl ModelParams {
    /// `τ = 1/2`, `T = 1`, `m = 1`, `p = 1`, `q = 2n`, `v = 0`, `δ = e₄`.
    pub fn axis_aligned(n: u32, dim: usize) -> Self {
        let mut direction = vec![0.0; dim];
        if dim > PERTURBED_AXIS {
            direction[PERTURBED_AXIS] = 1.0;
        }
        Self {
            n,
            tau: 0.5,
            horizon: 1.0,
            dim,
            noise_dim: 1,
            p: 1.0,
            q: 2.0 * n as f64,
            shift: vec![0.0; dim],
            direction,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(invalid("n", format!("must be at least 2, got {}", self.n)));
        }
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(invalid("horizon", format!("must be positive, got {}", self.horizon)));
        }
        if !(self.tau > 0.0 && self.tau < self.horizon) {
            return Err(invalid("tau", format!("must lie in (0, T), got {}", self.tau)));
        }
        if self.dim < 5 {
            return Err(invalid("dim", format!("must be at least 5, got {}", self.dim)));
        }
        if self.noise_dim < 1 {
            return Err(invalid("noise_dim", "must be at least 1"));
        }
        if !(self.p >= 1.0) {
            return Err(invalid("p", format!("must be at least 1, got {}", self.p)));
        }
        let q_min = 2.0 * self.p * self.n as f64;
        if !(self.q >= q_min) || !self.q.is_finite() {
            return Err(invalid("q", format!("must be at least 2pn = {q_min}, got {}", self.q)));
        }
        for (name, v) in [("shift", &self.shift), ("direction", &self.direction)] {
            if v.len() != self.dim {
                return Err(invalid(name, format!("expected length {}, got {}", self.dim, v.len())));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(invalid(name, "entries must be finite"));
            }
        }
        if self.direction.iter().all(|&x| x == 0.0) {
            return Err(LabError::ZeroDirection);
        }
        Ok(())
    }
}

fn norm5(x: &Vec5) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// The five-dimensional model together with its constants.
#[derive(Debug, Clone, Serialize)]
pub struct AxisAlignedModel {
    params: ModelParams,
    f: BumpFunction,
    g: BumpFunction,
    sups: SupNorms,
    /// `C = sup max{1, |f|, |f'|, |g'|, |g''|}`.
    c: f64,
    /// `κ = 2 + 8(n + 1)C`.
    kappa: f64,
}

impl AxisAlignedModel {
    pub fn build(params: ModelParams) -> Result<Self> {
        params.validate()?;
        let f = BumpFunction::normalized(params.tau, params.horizon)?;
        let g = BumpFunction::normalized(0.0, params.tau)?;
        let sups = SupNorms::of(&f, &g);
        let c = sups.growth_constant();
        let kappa = 2.0 + 8.0 * (params.n as f64 + 1.0) * c;
        Ok(Self {
            params,
            f,
            g,
            sups,
            c,
            kappa,
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn n(&self) -> u32 {
        self.params.n
    }

    pub fn f(&self) -> &BumpFunction {
        &self.f
    }

    pub fn g(&self) -> &BumpFunction {
        &self.g
    }

    pub fn sup_norms(&self) -> &SupNorms {
        &self.sups
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    /// `κ = 2 + 8(n + 1)C`; this is also the constant `ϰ` the general
    /// model is built from.
    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn rho(&self) -> Vec5 {
        [0.0, 1.0, 0.0, 0.0, 0.0]
    }

    pub fn nu(&self, x: &Vec5) -> Vec5 {
        let n = self.params.n as i32;
        let fx = self.f.value(x[0]);
        [
            1.0,
            0.0,
            self.g.deriv1(x[0]) * x[1],
            fx * x[3] * x[4],
            fx * (x[2].powi(n) - x[3] * x[3]),
        ]
    }

    /// Row-major Jacobian `ν'(x)`.
    pub fn nu_jacobian(&self, x: &Vec5) -> Mat5 {
        let n = self.params.n as i32;
        let (f0, f1) = (self.f.value(x[0]), self.f.deriv1(x[0]));
        let (g1, g2) = (self.g.deriv1(x[0]), self.g.deriv2(x[0]));
        let mut j = [[0.0; 5]; 5];
        j[2][0] = g2 * x[1];
        j[2][1] = g1;
        j[3][0] = f1 * x[3] * x[4];
        j[3][3] = f0 * x[4];
        j[3][4] = f0 * x[3];
        j[4][0] = f1 * (x[2].powi(n) - x[3] * x[3]);
        j[4][2] = n as f64 * f0 * x[2].powi(n - 1);
        j[4][3] = -2.0 * f0 * x[3];
        j
    }

    /// `V(x) = (1 + x₁² + x₄² + x₅²)^p + |x₂|^q + |x₃|^q + 1`.
    pub fn lyapunov(&self, x: &Vec5, p: f64, q: f64) -> f64 {
        let s = 1.0 + x[0] * x[0] + x[3] * x[3] + x[4] * x[4];
        s.powf(p) + x[1].abs().powf(q) + x[2].abs().powf(q) + 1.0
    }

    pub fn lyapunov_grad(&self, x: &Vec5, p: f64, q: f64) -> Vec5 {
        let s = 1.0 + x[0] * x[0] + x[3] * x[3] + x[4] * x[4];
        let outer = 2.0 * p * s.powf(p - 1.0);
        let power = |y: f64| q * y.abs().powf(q - 1.0) * y.signum();
        [outer * x[0], power(x[1]), power(x[2]), outer * x[3], outer * x[4]]
    }

    /// `U`, the `p = 1`, `q = 2n` case of [`Self::lyapunov`].
    pub fn u(&self, x: &Vec5) -> f64 {
        self.lyapunov(x, 1.0, 2.0 * self.params.n as f64)
    }

    pub fn u_grad(&self, x: &Vec5) -> Vec5 {
        self.lyapunov_grad(x, 1.0, 2.0 * self.params.n as f64)
    }

    /// `4nC(1 + ‖x‖ⁿ)`, the growth factor of `ν'`.
    pub fn growth_bound(&self, x_norm: f64) -> f64 {
        let n = self.params.n;
        4.0 * n as f64 * self.c * (1.0 + x_norm.powi(n as i32))
    }

    /// `2p + (2p + q) sup max{|f|, |g'|}`.
    pub fn lyapunov_constant(&self, p: f64, q: f64) -> f64 {
        2.0 * p + (2.0 * p + q) * self.sups.lyapunov_constant()
    }

    /// `2(1 + C + nC)`, the constant for `U`.
    pub fn u_lyapunov_constant(&self) -> f64 {
        2.0 * (1.0 + self.c + self.params.n as f64 * self.c)
    }

    pub fn embed(&self) -> Embedded<'_> {
        Embedded {
            base: self,
            dim: self.params.dim,
        }
    }
}

/// The model acting on ℝᵈ through its first five coordinates.
#[derive(Debug, Clone, Copy)]
pub struct Embedded<'a> {
    base: &'a AxisAlignedModel,
    dim: usize,
}

fn head5(x: &[f64]) -> Vec5 {
    [x[0], x[1], x[2], x[3], x[4]]
}

impl Embedded<'_> {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn drift(&self, x: &[f64]) -> DVector<f64> {
        let nu = self.base.nu(&head5(x));
        DVector::from_fn(self.dim, |i, _| if i < 5 { nu[i] } else { 0.0 })
    }

    pub fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        let j = self.base.nu_jacobian(&head5(x));
        DMatrix::from_fn(self.dim, self.dim, |r, c| if r < 5 && c < 5 { j[r][c] } else { 0.0 })
    }

    /// `U(x₁..₅) + Σ_{i>5} xᵢ² + 1`.
    pub fn lyapunov(&self, x: &[f64]) -> f64 {
        self.base.u(&head5(x)) + x[5..].iter().map(|v| v * v).sum::<f64>() + 1.0
    }

    pub fn lyapunov_grad(&self, x: &[f64]) -> DVector<f64> {
        let gu = self.base.u_grad(&head5(x));
        DVector::from_fn(self.dim, |i, _| if i < 5 { gu[i] } else { 2.0 * x[i] })
    }

    /// `(0, 1, 0, …, 0)`.
    pub fn sigma0(&self) -> DVector<f64> {
        let mut s = DVector::zeros(self.dim);
        s[NOISE_AXIS] = 1.0;
        s
    }
}

/// Householder reflection `I − 2nnᵀ` mapping `e₄` to `target/‖target‖`.
pub fn reflection_to(target: &DVector<f64>) -> Result<DMatrix<f64>> {
    let d = target.len();
    let norm = target.norm();
    if norm == 0.0 {
        return Err(LabError::ZeroDirection);
    }
    let w = target / norm;
    let mut diff = -w;
    diff[PERTURBED_AXIS] += 1.0;
    let len = diff.norm();
    if len < 1e-12 {
        return Ok(DMatrix::identity(d, d));
    }
    let unit = diff / len;
    Ok(DMatrix::identity(d, d) - 2.0 * &unit * unit.transpose())
}

/// The model moved to base point `v` and direction `δ`.
#[derive(Debug, Clone)]
pub struct GeneralModel {
    base: AxisAlignedModel,
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    b_inv: DMatrix<f64>,
    sigma: DMatrix<f64>,
    shift: DVector<f64>,
    direction: DVector<f64>,
    delta_norm: f64,
    kappa: f64,
}

impl GeneralModel {
    pub fn build(base: AxisAlignedModel) -> Result<Self> {
        let params = base.params();
        let (d, m) = (params.dim, params.noise_dim);
        let shift = DVector::from_column_slice(&params.shift);
        let direction = DVector::from_column_slice(&params.direction);
        let delta_norm = direction.norm();
        if delta_norm == 0.0 {
            return Err(LabError::ZeroDirection);
        }
        let a = reflection_to(&direction)?;
        let b = &a * delta_norm;
        let b_inv = a.transpose() / delta_norm;
        let sigma0 = base.embed().sigma0();
        let column = &b * sigma0;
        let sigma = DMatrix::from_fn(d, m, |i, j| if j == 0 { column[i] } else { 0.0 });

        let varkappa = base.kappa();
        let kappa = 2.0
            * varkappa
            * (1.0 + 2f64.powf(varkappa) / delta_norm * shift.norm().powf(varkappa).max(1.0));
        Ok(Self {
            base,
            a,
            b,
            b_inv,
            sigma,
            shift,
            direction,
            delta_norm,
            kappa,
        })
    }

    pub fn from_params(params: ModelParams) -> Result<Self> {
        Self::build(AxisAlignedModel::build(params)?)
    }

    pub fn base(&self) -> &AxisAlignedModel {
        &self.base
    }

    pub fn dim(&self) -> usize {
        self.base.params().dim
    }

    pub fn noise_dim(&self) -> usize {
        self.base.params().noise_dim
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn b_inv(&self) -> &DMatrix<f64> {
        &self.b_inv
    }

    /// `d x m`; only the first column is nonzero.
    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn shift(&self) -> &DVector<f64> {
        &self.shift
    }

    pub fn direction(&self) -> &DVector<f64> {
        &self.direction
    }

    pub fn delta_norm(&self) -> f64 {
        self.delta_norm
    }

    /// `κ = 2ϰ(1 + ‖δ‖⁻¹ 2^ϰ max{1, ‖v‖^ϰ})`. For realistic bumps `ϰ` is in
    /// the thousands and this is `+inf` in f64.
    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// `B⁻¹(x − v)`.
    pub fn to_base(&self, x: &[f64]) -> DVector<f64> {
        &self.b_inv * (DVector::from_column_slice(x) - &self.shift)
    }

    /// `By + v`.
    pub fn from_base(&self, y: &[f64]) -> DVector<f64> {
        &self.b * DVector::from_column_slice(y) + &self.shift
    }

    /// `μ(x) = Bν̃(B⁻¹(x − v))`.
    pub fn drift(&self, x: &[f64]) -> DVector<f64> {
        let y = self.to_base(x);
        &self.b * self.base.embed().drift(y.as_slice())
    }

    /// `μ'(x) = Bν̃'(B⁻¹(x − v))B⁻¹`.
    pub fn drift_jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        let y = self.to_base(x);
        &self.b * self.base.embed().jacobian(y.as_slice()) * &self.b_inv
    }

    /// `V(x) = ‖δ‖Ṽ(B⁻¹(x − v)) + ‖v‖`.
    pub fn lyapunov(&self, x: &[f64]) -> f64 {
        let y = self.to_base(x);
        self.delta_norm * self.base.embed().lyapunov(y.as_slice()) + self.shift.norm()
    }

    pub fn lyapunov_grad(&self, x: &[f64]) -> DVector<f64> {
        let y = self.to_base(x);
        self.b_inv.transpose() * self.base.embed().lyapunov_grad(y.as_slice()) * self.delta_norm
    }

    pub fn constants_json(&self) -> serde_json::Value {
        json!({
            "n": self.base.n(),
            "C": self.base.c(),
            "kappa_axis": self.base.kappa(),
            "kappa_general": finite_or_string(self.kappa),
            "delta_norm": self.delta_norm,
            "sup_f": self.base.sups.f,
            "sup_f_prime": self.base.sups.f_prime,
            "sup_g_prime": self.base.sups.g_prime,
            "sup_g_second": self.base.sups.g_second,
        })
    }
}

pub(crate) fn finite_or_string(x: f64) -> serde_json::Value {
    if x.is_finite() {
        json!(x)
    } else {
        json!(x.to_string())
    }
}

fn uniform_box<R: Rng>(rng: &mut R, dim: usize, radius: f64) -> Vec<f64> {
    (0..dim).map(|_| rng.random_range(-radius..=radius)).collect()
}

fn uniform_sphere<R: Rng>(rng: &mut R, dim: usize, radius: f64) -> Vec<f64> {
    let mut normals = crate::paths::NormalSampler::new(rng);
    loop {
        let v: Vec<f64> = (0..dim).map(|_| normals.sample()).collect();
        let len = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if len > 1e-12 {
            return v.into_iter().map(|x| radius * x / len).collect();
        }
    }
}

fn uniform_ball<R: Rng>(rng: &mut R, dim: usize, radius: f64) -> Vec<f64> {
    let r = radius * rng.random::<f64>().powf(1.0 / dim as f64);
    uniform_sphere(rng, dim, r.max(0.0))
}

fn to5(v: &[f64]) -> Vec5 {
    head5(v)
}

/// Samples `x` in `[−R, R]^k` and unit `h` and checks the derivative growth
/// bounds: `‖ν'(x)h‖ ≤ 4nC(1 + ‖x‖ⁿ)‖h‖` on ℝ⁵, and for the general model
/// both `‖μ'(x)h‖ ≤ κ(1 + ‖x‖^κ)‖h‖` and the pulled-back form
/// `‖μ'(x)h‖ ≤ 4nC(1 + ‖B⁻¹(x − v)‖ⁿ)‖h‖`.
pub fn verify_jacobian_growth(
    model: &GeneralModel,
    trials: usize,
    box_radius: f64,
    seed: u64,
) -> Result<Vec<CheckReport>> {
    if trials == 0 {
        return Err(invalid("trials", "must be at least 1"));
    }
    let base = model.base();
    let d = model.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = json!({ "trials": trials, "box_radius": box_radius, "seed": seed });

    let mut axis = RatioTracker::new("jacobian_growth_axis_aligned", params.clone());
    let mut general = RatioTracker::new("jacobian_growth_general", params.clone());
    let mut pulled = RatioTracker::new("jacobian_growth_general_pulled_back", params);

    for _ in 0..trials {
        let x = to5(&uniform_box(&mut rng, 5, box_radius));
        let h = to5(&uniform_sphere(&mut rng, 5, 1.0));
        let j = base.nu_jacobian(&x);
        let jh: Vec<f64> = j.iter().map(|row| row.iter().zip(&h).map(|(a, b)| a * b).sum()).collect();
        let lhs = jh.iter().map(|v| v * v).sum::<f64>().sqrt();
        let rhs = base.growth_bound(norm5(&x)) * norm5(&h);
        axis.record(lhs, rhs, || json!({ "x": x, "h": h }));

        let xg = uniform_box(&mut rng, d, box_radius);
        let hg = DVector::from_vec(uniform_sphere(&mut rng, d, 1.0));
        let lhs = (model.drift_jacobian(&xg) * &hg).norm();
        let xn = DVector::from_column_slice(&xg).norm();
        let rhs = if model.kappa().is_infinite() {
            f64::INFINITY
        } else {
            model.kappa() * (1.0 + xn.powf(model.kappa())) * hg.norm()
        };
        general.record(lhs, rhs, || json!({ "x": xg, "h": hg.as_slice() }));
        let y = model.to_base(&xg);
        let rhs = base.growth_bound(y.norm()) * hg.norm();
        pulled.record(lhs, rhs, || json!({ "x": xg, "h": hg.as_slice() }));
    }
    Ok(vec![axis.finish(), general.finish(), pulled.finish()])
}

/// Samples `(x, z)` and checks the Lyapunov inequalities together with
/// `‖x‖ ≤ V(x)`:
///
/// * ℝ⁵, exponents `(p, q)`: `V'(x)ν(x + ρz) ≤ (2p + (2p + q)c)(1 + |z|)V(x)`
///   with `c = sup max{|f|, |g'|}`;
/// * `U`: the same with constant `2(1 + C + nC)`, and `≤ κ(1 + |z|)U(x)`;
/// * embedded ℝᵈ: `V'(x)μ(x + σ₀z) ≤ κ(1 + |z|)V(x)`;
/// * general: `V'(x)μ(x + σz) ≤ ϰ(1 + ‖z‖)V(x)` for `z ∈ ℝᵐ`.
pub fn verify_lyapunov(
    model: &GeneralModel,
    trials: usize,
    box_radius: f64,
    z_radius: f64,
    seed: u64,
) -> Result<Vec<CheckReport>> {
    if trials == 0 {
        return Err(invalid("trials", "must be at least 1"));
    }
    let base = model.base();
    let embedded = base.embed();
    let (p, q) = (base.params().p, base.params().q);
    let (d, m) = (model.dim(), model.noise_dim());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = json!({
        "trials": trials, "box_radius": box_radius, "z_radius": z_radius, "seed": seed, "p": p, "q": q,
    });

    let mut general_pq = RatioTracker::new("lyapunov_axis_aligned_pq", params.clone());
    let mut u_sharp = RatioTracker::new("lyapunov_u", params.clone());
    let mut u_kappa = RatioTracker::new("lyapunov_u_kappa", params.clone());
    let mut emb = RatioTracker::new("lyapunov_embedded", params.clone());
    let mut gen = RatioTracker::new("lyapunov_general", params.clone());
    let mut dominates = RatioTracker::new("lyapunov_dominates_norm", params);

    let dot5 = |a: &Vec5, b: &Vec5| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let sigma0 = embedded.sigma0();

    for _ in 0..trials {
        let x = to5(&uniform_box(&mut rng, 5, box_radius));
        let z: f64 = rng.random_range(-z_radius..=z_radius);
        let mut shifted = x;
        shifted[NOISE_AXIS] += z;
        let nu = base.nu(&shifted);
        let factor = 1.0 + z.abs();

        let v = base.lyapunov(&x, p, q);
        let lhs = dot5(&base.lyapunov_grad(&x, p, q), &nu);
        general_pq.record(lhs, base.lyapunov_constant(p, q) * factor * v, || json!({ "x": x, "z": z }));
        dominates.record(norm5(&x), v, || json!({ "x": x, "space": "R5 (p, q)" }));

        let u = base.u(&x);
        let lhs = dot5(&base.u_grad(&x), &nu);
        u_sharp.record(lhs, base.u_lyapunov_constant() * factor * u, || json!({ "x": x, "z": z }));
        u_kappa.record(lhs, base.kappa() * factor * u, || json!({ "x": x, "z": z }));
        dominates.record(norm5(&x), u, || json!({ "x": x, "space": "R5 U" }));

        let xd = uniform_box(&mut rng, d, box_radius);
        let xs = DVector::from_column_slice(&xd) + &sigma0 * z;
        let lhs = embedded.lyapunov_grad(&xd).dot(&embedded.drift(xs.as_slice()));
        let vd = embedded.lyapunov(&xd);
        emb.record(lhs, base.kappa() * factor * vd, || json!({ "x": xd, "z": z }));
        dominates.record(DVector::from_column_slice(&xd).norm(), vd, || {
            json!({ "x": xd, "space": "Rd embedded" })
        });

        let zg = DVector::from_vec(uniform_ball(&mut rng, m, z_radius));
        let xs = DVector::from_column_slice(&xd) + model.sigma() * &zg;
        let lhs = model.lyapunov_grad(&xd).dot(&model.drift(xs.as_slice()));
        let vg = model.lyapunov(&xd);
        gen.record(lhs, base.kappa() * (1.0 + zg.norm()) * vg, || {
            json!({ "x": xd, "z": zg.as_slice() })
        });
        dominates.record(DVector::from_column_slice(&xd).norm(), vg, || {
            json!({ "x": xd, "space": "Rd general" })
        });
    }
    Ok(vec![
        general_pq.finish(),
        u_sharp.finish(),
        u_kappa.finish(),
        emb.finish(),
        gen.finish(),
        dominates.finish(),
    ])
}

/// Compares `ν'(x)` and `μ'(x)` with central differences at `points` samples
/// in `[−R, R]^k`. The error is `‖J − J_fd‖_F / max(‖J‖_F, 1)`.
pub fn jacobian_fd_check(
    model: &GeneralModel,
    points: usize,
    box_radius: f64,
    seed: u64,
    tolerance: f64,
) -> Result<Vec<CheckReport>> {
    if points == 0 {
        return Err(invalid("points", "must be at least 1"));
    }
    let base = model.base();
    let d = model.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = json!({ "points": points, "box_radius": box_radius, "seed": seed, "tolerance": tolerance });
    let mut axis = RatioTracker::new("jacobian_fd_axis_aligned", params.clone());
    let mut general = RatioTracker::new("jacobian_fd_general", params);

    let fd = |x: &[f64], eval: &dyn Fn(&[f64]) -> Vec<f64>| -> DMatrix<f64> {
        let k = x.len();
        let mut m = DMatrix::zeros(k, k);
        let mut xp = x.to_vec();
        for j in 0..k {
            let h = 1e-6 * x[j].abs().max(1.0);
            xp[j] = x[j] + h;
            let up = eval(&xp);
            xp[j] = x[j] - h;
            let down = eval(&xp);
            xp[j] = x[j];
            for i in 0..k {
                m[(i, j)] = (up[i] - down[i]) / (2.0 * h);
            }
        }
        m
    };

    for _ in 0..points {
        let x = uniform_box(&mut rng, 5, box_radius);
        let exact = DMatrix::from_fn(5, 5, |i, j| base.nu_jacobian(&to5(&x))[i][j]);
        let approx = fd(&x, &|y: &[f64]| base.nu(&to5(y)).to_vec());
        let err = (&exact - &approx).norm() / exact.norm().max(1.0);
        axis.record(err, tolerance, || json!({ "x": x }));

        let xg = uniform_box(&mut rng, d, box_radius);
        let exact = model.drift_jacobian(&xg);
        let approx = fd(&xg, &|y: &[f64]| model.drift(y).as_slice().to_vec());
        let err = (&exact - &approx).norm() / exact.norm().max(1.0);
        general.record(err, tolerance, || json!({ "x": xg }));
    }
    Ok(vec![axis.finish(), general.finish()])
}


/// Checks `‖Mx‖ ≤ ‖M‖_F ‖x‖` on random `x`.
pub fn frobenius_bound_check(matrix: &DMatrix<f64>, trials: usize, seed: u64) -> Result<CheckReport> {
    if matrix.iter().any(|v| !v.is_finite()) {
        return Err(invalid("matrix", "entries must be finite"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let frob = matrix.norm();
    let mut tracker = RatioTracker::new(
        "frobenius_operator_bound",
        json!({ "rows": matrix.nrows(), "cols": matrix.ncols(), "trials": trials, "seed": seed }),
    );
    for _ in 0..trials {
        let x = DVector::from_vec(uniform_box(&mut rng, matrix.ncols(), 1.0));
        let lhs = (matrix * &x).norm();
        tracker.record(lhs, frob * x.norm(), || json!({ "x": x.as_slice() }));
    }
    Ok(tracker.finish())
}
