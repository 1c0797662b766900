//! Pathwise solvers.
//!
//! * [`solve_cascade`] exploits the triangular structure of the axis-aligned
//!   drift: `X₁`, `X₂` are exact, `X₃` is a trapezoidal integral of the
//!   Brownian path, and `(X₄, X₅)` solve a two-dimensional ODE with RK4.
//! * [`solve_em`] is a generic (optionally tamed) Euler–Maruyama scheme.
//! * [`solve_variation`] integrates the first-variation equation
//!   `J' = μ'(X(t))J` along a computed path.
//! * [`transform_solution`] applies `X = BY + v` pointwise.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{LabError, Result};
use crate::model::{AxisAlignedModel, GeneralModel, Vec5};
use crate::paths::{sample_brownian, substream_seed, BrownianPath, TimeGrid};
use crate::report::{CheckReport, RatioTracker};

/// A discretized solution: `(steps + 1) x d` states, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionPath {
    grid: TimeGrid,
    dim: usize,
    states: Vec<f64>,
}

impl SolutionPath {
    fn with_capacity(grid: TimeGrid, dim: usize) -> Self {
        Self {
            grid,
            dim,
            states: Vec::with_capacity((grid.steps() + 1) * dim),
        }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn initial(&self) -> &[f64] {
        self.state(0)
    }

    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k * self.dim..(k + 1) * self.dim]
    }

    pub fn final_state(&self) -> &[f64] {
        self.state(self.grid.steps())
    }

    pub fn component(&self, k: usize, i: usize) -> f64 {
        self.states[k * self.dim + i]
    }

    pub fn states(&self) -> impl Iterator<Item = &[f64]> {
        self.states.chunks_exact(self.dim)
    }

    /// Largest Euclidean distance between the two paths over the grid.
    pub fn max_distance(&self, other: &SolutionPath) -> Result<f64> {
        if self.dim != other.dim || self.grid.steps() != other.grid.steps() {
            return Err(LabError::DimensionMismatch {
                expected: self.states.len(),
                got: other.states.len(),
            });
        }
        Ok(self
            .states()
            .zip(other.states())
            .map(|(a, b)| euclid(a, b))
            .fold(0.0, f64::max))
    }

    /// The path restricted to every `stride`-th grid node.
    pub fn subsample(&self, stride: usize) -> Result<SolutionPath> {
        if stride == 0 || self.grid.steps() % stride != 0 {
            return Err(crate::error::invalid("stride", "must divide the step count"));
        }
        let grid = TimeGrid::new(self.grid.horizon(), self.grid.steps() / stride)?;
        let states = (0..=grid.steps())
            .flat_map(|k| self.state(k * stride).iter().copied())
            .collect();
        Ok(SolutionPath {
            grid,
            dim: self.dim,
            states,
        })
    }

    fn push(&mut self, state: &[f64], step: usize) -> Result<()> {
        debug_assert_eq!(state.len(), self.dim);
        if state.iter().any(|v| !v.is_finite()) {
            return Err(LabError::Explosion {
                step,
                time: self.grid.time(step),
            });
        }
        self.states.extend_from_slice(state);
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        write!(out, "t")?;
        for i in 1..=self.dim {
            write!(out, ",x{i}")?;
        }
        writeln!(out)?;
        for (k, t) in self.grid.times().enumerate() {
            write!(out, "{t}")?;
            for x in self.state(k) {
                write!(out, ",{x}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

pub(crate) fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// `dX = μ(X)dt + σdW` with constant `σ ∈ ℝ^{d×m}`.
pub trait SdeSystem: Sync {
    fn dim(&self) -> usize;
    fn noise_dim(&self) -> usize;
    fn drift(&self, x: &[f64]) -> DVector<f64>;
    fn diffusion(&self) -> &DMatrix<f64>;
}

pub trait LinearizedSystem: SdeSystem {
    fn drift_jacobian(&self, x: &[f64]) -> DMatrix<f64>;
}

impl SdeSystem for GeneralModel {
    fn dim(&self) -> usize {
        GeneralModel::dim(self)
    }

    fn noise_dim(&self) -> usize {
        GeneralModel::noise_dim(self)
    }

    fn drift(&self, x: &[f64]) -> DVector<f64> {
        GeneralModel::drift(self, x)
    }

    fn diffusion(&self) -> &DMatrix<f64> {
        self.sigma()
    }
}

impl LinearizedSystem for GeneralModel {
    fn drift_jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        GeneralModel::drift_jacobian(self, x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EulerScheme {
    Explicit,
    /// Drift increment `μ dt / (1 + dt‖μ‖)`.
    #[default]
    Tamed,
}

fn check_dims(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(LabError::DimensionMismatch { expected, got });
    }
    Ok(())
}

/// Structure-exploiting solver for the five-dimensional model, driven by the
/// first component of `w`.
pub fn solve_cascade(model: &AxisAlignedModel, w: &BrownianPath, x0: &Vec5) -> Result<SolutionPath> {
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(crate::error::invalid("x0", "entries must be finite"));
    }
    let grid = *w.grid();
    let dt = grid.dt();
    let n = model.n() as i32;
    let (f, g) = (model.f(), model.g());
    let mut path = SolutionPath::with_capacity(grid, 5);

    let mut state = *x0;
    path.push(&state, 0)?;
    let mut integrand = g.deriv1(x0[0]) * x0[1];
    for k in 0..grid.steps() {
        let (t0, t1) = (grid.time(k), grid.time(k + 1));
        let x1_next = x0[0] + t1;
        let x2_next = x0[1] + w.component(k + 1, 0);
        let next_integrand = g.deriv1(x1_next) * x2_next;
        let x3_next = state[2] + 0.5 * (t1 - t0) * (integrand + next_integrand);

        // RK4 for (X₄, X₅) with X₃ linear on [t0, t1].
        let x3_mid = 0.5 * (state[2] + x3_next);
        let rhs = |t: f64, x3: f64, y4: f64, y5: f64| {
            let ft = f.value(x0[0] + t);
            (ft * y4 * y5, ft * (x3.powi(n) - y4 * y4))
        };
        let (y4, y5) = (state[3], state[4]);
        let tm = t0 + 0.5 * dt;
        let k1 = rhs(t0, state[2], y4, y5);
        let k2 = rhs(tm, x3_mid, y4 + 0.5 * dt * k1.0, y5 + 0.5 * dt * k1.1);
        let k3 = rhs(tm, x3_mid, y4 + 0.5 * dt * k2.0, y5 + 0.5 * dt * k2.1);
        let k4 = rhs(t1, x3_next, y4 + dt * k3.0, y5 + dt * k3.1);

        state = [
            x1_next,
            x2_next,
            x3_next,
            y4 + dt / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0),
            y5 + dt / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1),
        ];
        integrand = next_integrand;
        path.push(&state, k + 1)?;
    }
    Ok(path)
}

/// Euler–Maruyama: `X_{k+1} = X_k + drift increment + σΔW_k`.
pub fn solve_em<S: SdeSystem + ?Sized>(
    system: &S,
    w: &BrownianPath,
    x0: &[f64],
    scheme: EulerScheme,
) -> Result<SolutionPath> {
    check_dims(system.dim(), x0.len())?;
    check_dims(system.noise_dim(), w.noise_dim())?;
    let grid = *w.grid();
    let dt = grid.dt();
    let sigma = system.diffusion();
    let mut path = SolutionPath::with_capacity(grid, x0.len());
    let mut x = DVector::from_column_slice(x0);
    path.push(x.as_slice(), 0)?;
    for k in 0..grid.steps() {
        let mu = system.drift(x.as_slice());
        let scale = match scheme {
            EulerScheme::Explicit => dt,
            EulerScheme::Tamed => dt / (1.0 + dt * mu.norm()),
        };
        let dw = DVector::from_iterator(w.noise_dim(), w.increment(k));
        x += mu * scale + sigma * dw;
        path.push(x.as_slice(), k + 1)?;
    }
    Ok(path)
}

/// First variation `J(t) = ∂X^x(t)/∂x · h` along `x_path`, by RK4 with the
/// path interpolated linearly between grid nodes.
pub fn solve_variation<S: LinearizedSystem + ?Sized>(
    system: &S,
    x_path: &SolutionPath,
    h: &[f64],
) -> Result<SolutionPath> {
    check_dims(system.dim(), x_path.dim())?;
    check_dims(system.dim(), h.len())?;
    let grid = *x_path.grid();
    let dt = grid.dt();
    let mut path = SolutionPath::with_capacity(grid, h.len());
    let mut j = DVector::from_column_slice(h);
    path.push(j.as_slice(), 0)?;
    let mut jac0 = system.drift_jacobian(x_path.state(0));
    for k in 0..grid.steps() {
        let (a, b) = (x_path.state(k), x_path.state(k + 1));
        let mid: Vec<f64> = a.iter().zip(b).map(|(p, q)| 0.5 * (p + q)).collect();
        let jac_mid = system.drift_jacobian(&mid);
        let jac1 = system.drift_jacobian(b);
        let k1 = &jac0 * &j;
        let k2 = &jac_mid * (&j + &k1 * (0.5 * dt));
        let k3 = &jac_mid * (&j + &k2 * (0.5 * dt));
        let k4 = &jac1 * (&j + &k3 * dt);
        j += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        path.push(j.as_slice(), k + 1)?;
        jac0 = jac1;
    }
    Ok(path)
}

/// Pointwise `X(t) = BY(t) + v`.
pub fn transform_solution(y: &SolutionPath, b: &DMatrix<f64>, v: &DVector<f64>) -> Result<SolutionPath> {
    check_dims(b.ncols(), y.dim())?;
    check_dims(b.nrows(), v.len())?;
    let mut path = SolutionPath::with_capacity(*y.grid(), b.nrows());
    for (k, state) in y.states().enumerate() {
        let x = b * DVector::from_column_slice(state) + v;
        path.push(x.as_slice(), k)?;
    }
    Ok(path)
}

/// Solution of the general model from `x0`, obtained by solving the
/// axis-aligned model from `B⁻¹(x0 − v)` with [`solve_cascade`] and mapping
/// back with `B`, `v`. Coordinates beyond the fifth are constant in the
/// embedded model.
pub fn solve_general_cascade(model: &GeneralModel, w: &BrownianPath, x0: &[f64]) -> Result<SolutionPath> {
    check_dims(model.dim(), x0.len())?;
    let y0 = model.to_base(x0);
    let head = [y0[0], y0[1], y0[2], y0[3], y0[4]];
    let core = solve_cascade(model.base(), w, &head)?;
    let d = model.dim();
    let mut embedded = SolutionPath::with_capacity(*w.grid(), d);
    let mut row = y0.as_slice().to_vec();
    for (k, state) in core.states().enumerate() {
        row[..5].copy_from_slice(state);
        embedded.push(&row, k)?;
    }
    transform_solution(&embedded, model.b(), model.shift())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Solver {
    /// [`solve_general_cascade`].
    #[default]
    Cascade,
    /// [`solve_em`] on the general model.
    EulerMaruyama(EulerScheme),
}

impl Solver {
    pub fn solve(&self, model: &GeneralModel, w: &BrownianPath, x0: &[f64]) -> Result<SolutionPath> {
        match *self {
            Solver::Cascade => solve_general_cascade(model, w, x0),
            Solver::EulerMaruyama(scheme) => solve_em(model, w, x0, scheme),
        }
    }
}

/// Compares [`solve_variation`] with central differences of the flow
/// `x ↦ X^x` computed by [`solve_general_cascade`]. For each path a start
/// `x = v + By`, `y ∈ [−1, 1]^d`, and a unit direction `h` are drawn; the
/// error is `max_t ‖J(t) − FD(t)‖ / max_t ‖J(t)‖`.
pub fn variation_fd_check(
    model: &GeneralModel,
    steps: usize,
    n_paths: usize,
    seed: u64,
    tolerance: f64,
) -> Result<CheckReport> {
    use rand::{Rng, SeedableRng};
    let grid = TimeGrid::new(model.base().params().horizon, steps)?;
    let d = model.dim();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(substream_seed(seed, u64::MAX));
    let mut tracker = RatioTracker::new(
        "variation_fd",
        json!({ "steps": steps, "n_paths": n_paths, "seed": seed, "tolerance": tolerance, "fd_step": VARIATION_FD_STEP }),
    );
    for i in 0..n_paths as u64 {
        let y: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let x0 = model.from_base(&y);
        let mut h = DVector::from_fn(d, |_, _| rng.random_range(-1.0..=1.0));
        h /= h.norm();
        let w = sample_brownian(grid, model.noise_dim(), seed, i)?;
        let x_path = solve_general_cascade(model, &w, x0.as_slice())?;
        let j = solve_variation(model, &x_path, h.as_slice())?;
        let eta = VARIATION_FD_STEP;
        let up = solve_general_cascade(model, &w, (&x0 + &h * eta).as_slice())?;
        let down = solve_general_cascade(model, &w, (&x0 - &h * eta).as_slice())?;
        let (mut err, mut scale) = (0.0f64, 0.0f64);
        for k in 0..=steps {
            let fd = up.state(k).iter().zip(down.state(k)).map(|(a, b)| (a - b) / (2.0 * eta));
            let diff = j.state(k).iter().zip(fd).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            err = err.max(diff);
            scale = scale.max(euclid(j.state(k), &vec![0.0; d]));
        }
        tracker.record(err / scale, tolerance, || json!({ "path": i, "x0": x0.as_slice(), "h": h.as_slice() }));
    }
    Ok(tracker.finish())
}

/// Step of the central differences in [`variation_fd_check`].
pub const VARIATION_FD_STEP: f64 = 1e-5;

/// Maximum over paths and grid nodes of `‖X_cascade − X_em‖` for the
/// general model from `x0`, on `n_paths` Brownian paths at `steps` steps and
/// on the same paths coarsened to `steps / 2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TransformDiscrepancy {
    pub steps: usize,
    pub fine: f64,
    pub coarse: f64,
}

impl TransformDiscrepancy {
    /// `coarse / fine`, close to 2 for a first-order discrepancy.
    pub fn ratio(&self) -> f64 {
        self.coarse / self.fine
    }
}

pub fn transform_discrepancy(
    model: &GeneralModel,
    x0: &[f64],
    fine_steps: usize,
    n_paths: usize,
    seed: u64,
    scheme: EulerScheme,
) -> Result<TransformDiscrepancy> {
    let grid = TimeGrid::new(model.base().params().horizon, fine_steps)?;
    let (mut fine, mut coarse) = (0.0f64, 0.0f64);
    for i in 0..n_paths as u64 {
        let w = sample_brownian(grid, model.noise_dim(), seed, i)?;
        let wc = w.coarsened()?;
        fine = fine.max(solve_general_cascade(model, &w, x0)?.max_distance(&solve_em(model, &w, x0, scheme)?)?);
        coarse = coarse.max(solve_general_cascade(model, &wc, x0)?.max_distance(&solve_em(model, &wc, x0, scheme)?)?);
    }
    Ok(TransformDiscrepancy {
        steps: fine_steps,
        fine,
        coarse,
    })
}

/// Checks `coarse ≤ tolerance` and `coarse / fine ∈ [1.5, 2.5]` for the
/// discrepancy between the transformed cascade and Euler–Maruyama on the
/// general model, started at `x0`.
pub fn transform_check(
    model: &GeneralModel,
    x0: &[f64],
    coarse_steps: usize,
    n_paths: usize,
    seed: u64,
    tolerance: f64,
) -> Result<CheckReport> {
    let scheme = EulerScheme::Explicit;
    let disc = transform_discrepancy(model, x0, 2 * coarse_steps, n_paths, seed, scheme)?;
    let ratio = disc.ratio();
    let ratio_ok = (1.5..=2.5).contains(&ratio);
    let violation = (disc.coarse - tolerance).max(0.0);
    Ok(CheckReport {
        check: "transform_consistency".into(),
        params: json!({
            "dim": model.dim(), "x0": x0, "coarse_steps": coarse_steps, "n_paths": n_paths, "seed": seed,
            "tolerance": tolerance, "scheme": scheme, "max_distance_coarse": disc.coarse,
            "max_distance_fine": disc.fine, "ratio": ratio, "ratio_in_range": ratio_ok,
            "shift": model.shift().as_slice(), "direction": model.direction().as_slice(),
        }),
        max_violation: violation,
        grid_size: n_paths,
        passed: violation == 0.0 && ratio_ok,
        max_ratio: Some(disc.coarse / tolerance),
        counterexample: None,
    })
}
