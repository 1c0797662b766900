//! Monte Carlo estimates of `E‖X^x(t) − X^y(t)‖` under synchronous
//! coupling, ε-sweeps along `v + εδ` and local exponent fits.
//!
//! Path `i` is always driven by `sample_brownian(.., master_seed, i)`, and
//! per-path results are reduced in index order in fixed-size chunks, so
//! every estimate is a pure function of its inputs and the seed.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::bounds::{kappa_t, lemma21_constant};
use crate::error::{invalid, LabError, Result};
use crate::model::{AxisAlignedModel, GeneralModel};
use crate::paths::{sample_brownian, TimeGrid};
use crate::report::CheckReport;
use crate::solvers::{euclid, solve_cascade, Solver};

/// Default step size of the simulation grid.
pub const DEFAULT_DT: f64 = 1.0 / 2048.0;

/// Paths per reduction chunk.
pub const CHUNK: usize = 256;

/// Simulation settings shared by all estimators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MonteCarlo {
    /// Target step; the grid on `[0, t]` uses `⌈t/dt⌉` steps.
    pub dt: f64,
    pub solver: Solver,
}

impl Default for MonteCarlo {
    fn default() -> Self {
        Self {
            dt: DEFAULT_DT,
            solver: Solver::Cascade,
        }
    }
}

impl MonteCarlo {
    pub fn new(dt: f64, solver: Solver) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(invalid("dt", format!("must be positive, got {dt}")));
        }
        Ok(Self { dt, solver })
    }

    pub fn grid(&self, t: f64) -> Result<TimeGrid> {
        let steps = (t / self.dt - 1e-9).ceil().max(1.0) as usize;
        TimeGrid::new(t, steps)
    }

    fn check_time(&self, model: &GeneralModel, t: f64) -> Result<()> {
        let horizon = model.base().params().horizon;
        if !(t > 0.0 && t <= horizon) {
            return Err(invalid("t", format!("must lie in (0, {horizon}], got {t}")));
        }
        Ok(())
    }

    /// Runs `per_path` for every index. `Ok(None)` marks an aborted path.
    fn run_paths<F>(&self, n_paths: usize, per_path: F) -> Result<Vec<Option<Vec<f64>>>>
    where
        F: Fn(u64) -> Result<Option<Vec<f64>>> + Sync,
    {
        (0..n_paths as u64).into_par_iter().map(&per_path).collect()
    }

    /// Mean of `‖X^x(t) − X^y(t)‖` with both solutions driven by the same
    /// Brownian path.
    pub fn estimate_distance(
        &self,
        model: &GeneralModel,
        x: &[f64],
        y: &[f64],
        t: f64,
        n_paths: usize,
        master_seed: u64,
    ) -> Result<DistanceEstimate> {
        self.check_time(model, t)?;
        check_paths(n_paths)?;
        let grid = self.grid(t)?;
        let per_path = self.run_paths(n_paths, |i| {
            let w = sample_brownian(grid, model.noise_dim(), master_seed, i)?;
            let end = |x0: &[f64]| -> Result<Option<Vec<f64>>> {
                match self.solver.solve(model, &w, x0) {
                    Ok(path) => Ok(Some(path.final_state().to_vec())),
                    Err(LabError::Explosion { .. }) => Ok(None),
                    Err(e) => Err(e),
                }
            };
            let (a, b) = (end(x)?, if x == y { None } else { end(y)? });
            Ok(match (a, b) {
                (Some(_), None) if x == y => Some(vec![0.0]),
                (Some(a), Some(b)) => Some(vec![euclid(&a, &b)]),
                _ => None,
            })
        })?;
        let column: Vec<Option<f64>> = per_path.into_iter().map(|r| r.map(|v| v[0])).collect();
        DistanceEstimate::reduce(x, y, t, &column)
    }

    /// Estimates `E‖X^v(t) − X^{v+εδ}(t)‖` for every `ε` in the grid. The
    /// path from `v` is solved once per Brownian path and shared by all `ε`,
    /// which gives the same numbers as separate [`Self::estimate_distance`]
    /// calls with the same seed.
    pub fn sweep_epsilon(
        &self,
        model: &GeneralModel,
        t: f64,
        eps_grid: &[f64],
        n_paths: usize,
        master_seed: u64,
        q_upper: f64,
    ) -> Result<SweepResult> {
        let tau = model.base().params().tau;
        let horizon = model.base().params().horizon;
        if !(t > tau && t < horizon) {
            return Err(invalid("t", format!("must lie in ({tau}, {horizon}), got {t}")));
        }
        check_eps_grid(eps_grid)?;
        check_paths(n_paths)?;
        if !(q_upper > 0.0) || !q_upper.is_finite() {
            return Err(invalid("q", format!("must be positive, got {q_upper}")));
        }
        let grid = self.grid(t)?;
        let v = model.shift().as_slice().to_vec();
        let starts: Vec<Vec<f64>> = eps_grid
            .iter()
            .map(|&e| (model.shift() + model.direction() * e).as_slice().to_vec())
            .collect();

        let per_path = self.run_paths(n_paths, |i| {
            let w = sample_brownian(grid, model.noise_dim(), master_seed, i)?;
            let base = match self.solver.solve(model, &w, &v) {
                Ok(p) => p.final_state().to_vec(),
                Err(LabError::Explosion { .. }) => return Ok(Some(vec![f64::NAN; starts.len()])),
                Err(e) => return Err(e),
            };
            let mut row = Vec::with_capacity(starts.len());
            for x0 in &starts {
                row.push(match self.solver.solve(model, &w, x0) {
                    Ok(p) => euclid(&base, p.final_state()),
                    Err(LabError::Explosion { .. }) => f64::NAN,
                    Err(e) => return Err(e),
                });
            }
            Ok(Some(row))
        })?;

        let mut estimates = Vec::with_capacity(eps_grid.len());
        for (j, x0) in starts.iter().enumerate() {
            let column: Vec<Option<f64>> = per_path
                .iter()
                .map(|r| r.as_ref().map(|row| row[j]).filter(|d| !d.is_nan()))
                .collect();
            estimates.push(DistanceEstimate::reduce(&v, x0, t, &column)?);
        }

        let constants = SweepConstants::compute(model, t, q_upper)?;
        let lower_bound_curve = eps_grid.iter().map(|&e| constants.lower_bound(e)).collect();
        let upper_bound_curve = eps_grid.iter().map(|&e| e.ln().abs().powf(-q_upper)).collect();
        let local_slopes = local_slopes(eps_grid, &estimates);
        let slope_std_errors = paired_slope_errors(eps_grid, &estimates, &per_path);
        Ok(SweepResult {
            eps_grid: eps_grid.to_vec(),
            estimates,
            local_slopes,
            slope_std_errors,
            lower_bound_curve,
            upper_bound_curve,
            constants,
        })
    }
}

fn check_paths(n_paths: usize) -> Result<()> {
    if n_paths < 2 {
        return Err(invalid("n_paths", format!("must be at least 2, got {n_paths}")));
    }
    Ok(())
}

pub fn check_eps_grid(eps_grid: &[f64]) -> Result<()> {
    let cap = (-1f64).exp();
    if eps_grid.is_empty() {
        return Err(invalid("eps_grid", "must not be empty"));
    }
    if let Some(e) = eps_grid.iter().find(|&&e| !(e > 0.0 && e <= cap * (1.0 + 1e-12))) {
        return Err(invalid("eps_grid", format!("entries must lie in (0, 1/e], got {e}")));
    }
    if eps_grid.windows(2).any(|w| w[1] >= w[0]) {
        return Err(invalid("eps_grid", "must be strictly decreasing"));
    }
    Ok(())
}

/// [`MonteCarlo::estimate_distance`] with default settings.
pub fn estimate_distance(
    model: &GeneralModel,
    x: &[f64],
    y: &[f64],
    t: f64,
    n_paths: usize,
    master_seed: u64,
) -> Result<DistanceEstimate> {
    MonteCarlo::default().estimate_distance(model, x, y, t, n_paths, master_seed)
}

/// [`MonteCarlo::sweep_epsilon`] with default settings.
pub fn sweep_epsilon(
    model: &GeneralModel,
    t: f64,
    eps_grid: &[f64],
    n_paths: usize,
    master_seed: u64,
    q_upper: f64,
) -> Result<SweepResult> {
    MonteCarlo::default().sweep_epsilon(model, t, eps_grid, n_paths, master_seed, q_upper)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistanceEstimate {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub t: f64,
    pub n_paths: usize,
    pub mean: f64,
    pub std_error: f64,
    pub aborted: usize,
}

impl DistanceEstimate {
    /// Chunked two-pass reduction in index order. `None` entries are aborts.
    fn reduce(x: &[f64], y: &[f64], t: f64, samples: &[Option<f64>]) -> Result<Self> {
        let n_paths = samples.len();
        let (sum, count) = samples
            .chunks(CHUNK)
            .map(|c| c.iter().flatten().fold((0.0, 0usize), |(s, k), d| (s + d, k + 1)))
            .fold((0.0, 0usize), |(s, k), (cs, ck)| (s + cs, k + ck));
        if count == 0 {
            return Err(LabError::EstimationFailed { paths: n_paths });
        }
        let mean = sum / count as f64;
        let ss: f64 = samples
            .chunks(CHUNK)
            .map(|c| c.iter().flatten().map(|d| (d - mean) * (d - mean)).sum::<f64>())
            .sum();
        let std_error = if count > 1 {
            (ss / (count - 1) as f64 / count as f64).sqrt()
        } else {
            0.0
        };
        Ok(Self {
            x: x.to_vec(),
            y: y.to_vec(),
            t,
            n_paths,
            mean,
            std_error,
            aborted: n_paths - count,
        })
    }

    pub fn abort_fraction(&self) -> f64 {
        self.aborted as f64 / self.n_paths as f64
    }
}

/// Constants entering the bound curves of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepConstants {
    pub n: u32,
    pub t: f64,
    #[serde(rename = "C")]
    pub c_model: f64,
    pub kappa: f64,
    pub kappa_t: f64,
    /// Lemma constant `pκ^{−2/p} + (√(2π)p + 1)κ + 1` at `p = n`, `κ = κ_t`.
    pub c: f64,
    /// Prefactor `‖δ‖` of the lower bound.
    #[serde(rename = "K")]
    pub k: f64,
    pub q: f64,
}

impl SweepConstants {
    pub fn compute(model: &GeneralModel, t: f64, q: f64) -> Result<Self> {
        let base = model.base();
        let n = base.n();
        let kt = kappa_t(base.f(), base.params().tau, t)?;
        Ok(Self {
            n,
            t,
            c_model: base.c(),
            kappa: base.kappa(),
            kappa_t: kt,
            c: lemma21_constant(n as f64, kt),
            k: model.delta_norm(),
            q,
        })
    }

    /// `K exp(−c|ln ε|^{2/n})`.
    pub fn lower_bound(&self, eps: f64) -> f64 {
        self.k * (-self.c * eps.ln().abs().powf(2.0 / self.n as f64)).exp()
    }

    /// `"non-hoelder"` for `n ≥ 3`, where the lower bound beats every power
    /// of `ε`; `"hoelder-consistent"` for `n = 2`.
    pub fn regime(&self) -> &'static str {
        if self.n >= 3 {
            "non-hoelder"
        } else {
            "hoelder-consistent"
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub eps_grid: Vec<f64>,
    pub estimates: Vec<DistanceEstimate>,
    pub local_slopes: Vec<f64>,
    /// Standard errors of `local_slopes` under the shared-noise coupling.
    pub slope_std_errors: Vec<f64>,
    pub lower_bound_curve: Vec<f64>,
    pub upper_bound_curve: Vec<f64>,
    pub constants: SweepConstants,
}

fn local_slopes(eps: &[f64], est: &[DistanceEstimate]) -> Vec<f64> {
    (1..eps.len())
        .map(|i| (est[i].mean.ln() - est[i - 1].mean.ln()) / (eps[i].ln() - eps[i - 1].ln()))
        .collect()
}

/// Delta-method errors of the local slopes. All `ε` share each path, so the
/// error of `ln(m_{i+1}/m_i)` is estimated from the per-path values
/// `D_{i+1}/m_{i+1} − D_i/m_i` over paths where both solves finished.
fn paired_slope_errors(eps: &[f64], est: &[DistanceEstimate], rows: &[Option<Vec<f64>>]) -> Vec<f64> {
    (1..eps.len())
        .map(|i| {
            let (ma, mb) = (est[i - 1].mean, est[i].mean);
            let u: Vec<f64> = rows
                .iter()
                .flatten()
                .filter(|r| !r[i - 1].is_nan() && !r[i].is_nan())
                .map(|r| r[i] / mb - r[i - 1] / ma)
                .collect();
            let k = u.len() as f64;
            if k < 2.0 {
                return f64::NAN;
            }
            let mu = u.chunks(CHUNK).map(|c| c.iter().sum::<f64>()).sum::<f64>() / k;
            let ss = u
                .chunks(CHUNK)
                .map(|c| c.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>())
                .sum::<f64>();
            (ss / (k - 1.0) / k).sqrt() / (eps[i].ln() - eps[i - 1].ln()).abs()
        })
        .collect()
}

impl SweepResult {
    pub fn means(&self) -> Vec<f64> {
        self.estimates.iter().map(|e| e.mean).collect()
    }

    /// Checks `mean + 4 SE ≥ K exp(−c|ln ε|^{2/n})` at every `ε`.
    pub fn lower_bound_check(&self) -> CheckReport {
        let mut tracker = crate::report::RatioTracker::new(
            "sweep_lower_bound",
            json!({ "K": self.constants.k, "c": self.constants.c, "n": self.constants.n }),
        );
        for ((e, est), lb) in self.eps_grid.iter().zip(&self.estimates).zip(&self.lower_bound_curve) {
            tracker.record(*lb, est.mean + 4.0 * est.std_error, || json!({ "eps": e, "mean": est.mean }));
        }
        tracker.finish()
    }

    /// Smallest `c` with `mean ≤ c|ln ε|^{−q}` over the grid.
    pub fn upper_bound_constant(&self) -> f64 {
        self.eps_grid
            .iter()
            .zip(&self.estimates)
            .map(|(e, est)| est.mean * e.ln().abs().powf(self.constants.q))
            .fold(0.0, f64::max)
    }

    /// `eps,mean,stderr,aborted,lower_bound,upper_bound,local_slope`; the
    /// slope in row `i` is the one between `ε_i` and `ε_{i+1}`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "eps,mean,stderr,aborted,lower_bound,upper_bound,local_slope")?;
        for (i, est) in self.estimates.iter().enumerate() {
            write!(
                out,
                "{:e},{:e},{:e},{},{:e},{:e},",
                self.eps_grid[i],
                est.mean,
                est.std_error,
                est.aborted,
                self.lower_bound_curve[i],
                self.upper_bound_curve[i]
            )?;
            match self.local_slopes.get(i) {
                Some(s) => writeln!(out, "{s:e}")?,
                None => writeln!(out)?,
            }
        }
        Ok(())
    }

    pub fn summary_json(&self) -> serde_json::Value {
        json!({
            "constants": self.constants,
            "regime": self.constants.regime(),
            "n_paths": self.estimates.first().map(|e| e.n_paths),
            "aborted_total": self.estimates.iter().map(|e| e.aborted).sum::<usize>(),
            "local_slopes": self.local_slopes,
            "slope_std_errors": self.slope_std_errors,
            "upper_bound_constant": self.upper_bound_constant(),
            "lower_bound": self.lower_bound_check(),
        })
    }
}

/// Least-squares slope of `ln(mean)` against `ln(ε)` on every window of
/// `window` consecutive points.
pub fn fit_exponent(result: &SweepResult, window: usize) -> Result<Vec<f64>> {
    fit_exponent_raw(&result.eps_grid, &result.means(), window)
}

pub fn fit_exponent_raw(eps: &[f64], means: &[f64], window: usize) -> Result<Vec<f64>> {
    if window < 2 {
        return Err(invalid("window", format!("must be at least 2, got {window}")));
    }
    if eps.len() != means.len() {
        return Err(LabError::DimensionMismatch {
            expected: eps.len(),
            got: means.len(),
        });
    }
    if let Some(m) = means.iter().find(|&&m| !(m > 0.0)) {
        return Err(LabError::Domain(format!("means must be positive to take logs, got {m}")));
    }
    if let Some(e) = eps.iter().find(|&&e| !(e > 0.0)) {
        return Err(LabError::Domain(format!("eps must be positive to take logs, got {e}")));
    }
    let xs: Vec<f64> = eps.iter().map(|e| e.ln()).collect();
    let ys: Vec<f64> = means.iter().map(|m| m.ln()).collect();
    (0..(xs.len() + 1).saturating_sub(window))
        .map(|start| {
            let (x, y) = (&xs[start..start + window], &ys[start..start + window]);
            let k = window as f64;
            let (mx, my) = (x.iter().sum::<f64>() / k, y.iter().sum::<f64>() / k);
            let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
            let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
            if sxx <= f64::EPSILON * mx.abs().max(1.0) * k {
                return Err(LabError::DegenerateFit { start });
            }
            Ok(sxy / sxx)
        })
        .collect()
}

/// Steps used on `[0, τ]` by [`stdnormality_test`].
pub const STDNORM_STEPS: usize = 1024;

/// Simulates `X₃(τ)` from the origin over `n_paths` paths and checks
/// `|mean| ≤ 4/√N`, `|var − 1| ≤ 8/√N` and the Kolmogorov–Smirnov distance
/// to `N(0, 1)` below `1.63/√N`.
pub fn stdnormality_test(model: &AxisAlignedModel, n_paths: usize, master_seed: u64) -> Result<CheckReport> {
    stdnormality_test_with_steps(model, n_paths, master_seed, STDNORM_STEPS)
}

pub fn stdnormality_test_with_steps(
    model: &AxisAlignedModel,
    n_paths: usize,
    master_seed: u64,
    steps: usize,
) -> Result<CheckReport> {
    if n_paths < 1000 {
        return Err(invalid("n_paths", format!("must be at least 1000, got {n_paths}")));
    }
    let grid = TimeGrid::new(model.params().tau, steps)?;
    let mut samples: Vec<f64> = (0..n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let w = sample_brownian(grid, model.params().noise_dim, master_seed, i)?;
            Ok(solve_cascade(model, &w, &[0.0; 5])?.final_state()[2])
        })
        .collect::<Result<_>>()?;

    let n = n_paths as f64;
    let mean = samples.chunks(CHUNK).map(|c| c.iter().sum::<f64>()).sum::<f64>() / n;
    let var = samples
        .chunks(CHUNK)
        .map(|c| c.iter().map(|z| (z - mean) * (z - mean)).sum::<f64>())
        .sum::<f64>()
        / (n - 1.0);
    samples.sort_by(f64::total_cmp);
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let ks = samples
        .iter()
        .enumerate()
        .map(|(i, &z)| {
            let cdf = normal.cdf(z);
            ((i + 1) as f64 / n - cdf).max(cdf - i as f64 / n)
        })
        .fold(0.0, f64::max);

    let (mean_tol, var_tol, ks_crit) = (4.0 / n.sqrt(), 8.0 / n.sqrt(), 1.63 / n.sqrt());
    let violation = (mean.abs() - mean_tol)
        .max((var - 1.0).abs() - var_tol)
        .max(ks - ks_crit)
        .max(0.0);
    Ok(CheckReport {
        check: "stdnormality".into(),
        params: json!({
            "n_paths": n_paths, "seed": master_seed, "steps": steps, "tau": model.params().tau,
            "mean": mean, "variance": var, "ks_distance": ks,
            "mean_tol": mean_tol, "variance_tol": var_tol, "ks_critical": ks_crit,
        }),
        max_violation: violation,
        grid_size: n_paths,
        passed: violation == 0.0,
        max_ratio: Some((mean.abs() / mean_tol).max((var - 1.0).abs() / var_tol).max(ks / ks_crit)),
        counterexample: None,
    })
}
