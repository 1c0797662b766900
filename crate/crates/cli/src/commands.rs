use std::fs::{self, File};
use std::io::BufWriter;
use std::path::PathBuf;

use anyhow::Context as _;
use serde_json::json;

use sde_lab_core::bounds::{check_lemma21_grid, sandwich_check, stdnorm_variance, KappaSchedule};
use sde_lab_core::model::{jacobian_fd_check, verify_jacobian_growth, verify_lyapunov, GeneralModel, ModelParams};
use sde_lab_core::montecarlo::{fit_exponent, stdnormality_test, MonteCarlo};
use sde_lab_core::paths::sample_brownian;
use sde_lab_core::report::CheckReport;
use sde_lab_core::solvers::{self, Solver};

use crate::config::ExperimentConfig;
use crate::Outcome;

/// Validated configuration shared by all commands.
pub struct Context {
    pub config: ExperimentConfig,
    pub seed: u64,
    pub params: ModelParams,
    pub mc: MonteCarlo,
}

impl Context {
    pub fn new(config: ExperimentConfig, seed: u64) -> anyhow::Result<Self> {
        let params = config.model_params()?;
        let mc = MonteCarlo::new(config.dt(), config.solver())?;
        Ok(Self {
            config,
            seed,
            params,
            mc,
        })
    }

    fn model(&self) -> anyhow::Result<GeneralModel> {
        Ok(GeneralModel::from_params(self.params.clone())?)
    }

    fn output_file(&self, name: &str) -> anyhow::Result<(PathBuf, BufWriter<File>)> {
        let dir = self.config.output_dir();
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        let path = dir.join(name);
        let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        Ok((path, BufWriter::new(file)))
    }
}

fn outcome(checks: &[CheckReport], extra: serde_json::Value) -> Outcome {
    let passed = checks.iter().all(|c| c.passed);
    let mut report = json!({ "passed": passed, "checks": checks });
    if let (Some(r), Some(e)) = (report.as_object_mut(), extra.as_object()) {
        r.extend(e.clone());
    }
    Outcome { passed, report }
}

pub fn verify_bounds(ctx: &Context, trials: usize, radius: f64, z_radius: f64) -> anyhow::Result<Outcome> {
    let model = ctx.model()?;
    let mut checks = verify_jacobian_growth(&model, trials, radius, ctx.seed)?;
    let lyapunov = verify_lyapunov(&model, trials, radius, z_radius, ctx.seed.wrapping_add(1))?;
    let max_lyapunov_ratio = lyapunov
        .iter()
        .filter(|c| c.check != "dominates_norm")
        .filter_map(|c| c.max_ratio)
        .fold(0.0, f64::max);
    checks.extend(lyapunov);
    Ok(outcome(
        &checks,
        json!({ "constants": model.constants_json(), "max_lyapunov_ratio": max_lyapunov_ratio }),
    ))
}

pub fn lemma21(ps: &[f64], kappas: &[f64], eps_max: f64, eps_count: usize) -> anyhow::Result<Outcome> {
    let eps: Vec<f64> = (0..eps_count).map(|k| eps_max * (-(k as f64)).exp()).collect();
    let report = check_lemma21_grid(ps, kappas, &eps)?;
    Ok(outcome(&[report], json!({})))
}

/// Quadrature tolerance on the variance of `∫ g'(s)W(s) ds`.
const VARIANCE_TOLERANCE: f64 = 1e-6;

pub fn stdnorm_check(ctx: &Context, samples: usize) -> anyhow::Result<Outcome> {
    let model = ctx.model()?;
    let base = model.base();
    let variance = stdnorm_variance(base.g(), base.params().tau)?;
    let deviation = (variance - 1.0).abs();
    let quad = CheckReport {
        check: "stdnorm_variance".into(),
        params: json!({ "variance": variance, "tolerance": VARIANCE_TOLERANCE }),
        max_violation: (deviation - VARIANCE_TOLERANCE).max(0.0),
        grid_size: 1,
        passed: deviation <= VARIANCE_TOLERANCE,
        max_ratio: Some(deviation / VARIANCE_TOLERANCE),
        counterexample: None,
    };
    let stats = stdnormality_test(base, samples, ctx.seed)?;
    Ok(outcome(&[quad, stats], json!({})))
}

fn is_axis_aligned(p: &ModelParams) -> bool {
    p.dim == 5 && p.shift.iter().all(|&v| v == 0.0) && p.direction == ModelParams::axis_aligned(p.n, 5).direction
}

pub fn simulate(ctx: &Context, x0: Option<Vec<f64>>, eps: Option<f64>, index: u64) -> anyhow::Result<Outcome> {
    let model = ctx.model()?;
    let x0 = match (x0, eps) {
        (Some(x), _) => x,
        (None, Some(e)) => (model.shift() + model.direction() * e).as_slice().to_vec(),
        (None, None) => model.shift().as_slice().to_vec(),
    };
    let grid = ctx.mc.grid(ctx.params.horizon)?;
    let w = sample_brownian(grid, model.noise_dim(), ctx.seed, index)?;
    let path = ctx.mc.solver.solve(&model, &w, &x0)?;

    let (w_file, out) = ctx.output_file(&format!("brownian_{index}.csv"))?;
    w.write_csv(out)?;
    let (x_file, out) = ctx.output_file(&format!("solution_{index}.csv"))?;
    path.write_csv(out)?;

    let mut checks = Vec::new();
    if let (Some(e), true) = (eps, is_axis_aligned(&ctx.params)) {
        let schedule = KappaSchedule::new(model.base().f(), ctx.params.tau, &grid)?;
        checks.push(sandwich_check(&path, e, ctx.params.n, &schedule)?);
    }
    Ok(outcome(
        &checks,
        json!({
            "x0": x0,
            "final_state": path.final_state(),
            "steps": grid.steps(),
            "brownian_csv": w_file,
            "solution_csv": x_file,
        }),
    ))
}

/// Largest abort fraction accepted in a sweep.
pub const MAX_ABORT_FRACTION: f64 = 1e-3;

pub fn sweep(ctx: &Context, window: usize) -> anyhow::Result<Outcome> {
    let model = ctx.model()?;
    let eps = ctx.config.eps_grid()?;
    let result = ctx.mc.sweep_epsilon(
        &model,
        ctx.config.t_eval(),
        &eps,
        ctx.config.n_paths(),
        ctx.seed,
        ctx.config.q_upper(),
    )?;
    let (csv_file, out) = ctx.output_file("sweep.csv")?;
    result.write_csv(out)?;

    let fits = if eps.len() >= window { Some(fit_exponent(&result, window)?) } else { None };
    let mut summary = result.summary_json();
    summary["seed"] = json!(ctx.seed);
    summary["solver"] = json!(ctx.mc.solver);
    summary["dt"] = json!(ctx.mc.dt);
    summary["fitted_exponents"] = json!({ "window": window, "values": fits });
    let (json_file, out) = ctx.output_file("sweep.json")?;
    serde_json::to_writer_pretty(out, &summary)?;

    let lower = result.lower_bound_check();
    let worst_abort = result.estimates.iter().map(|e| e.abort_fraction()).fold(0.0, f64::max);
    let aborts_ok = worst_abort < MAX_ABORT_FRACTION;
    let mut report = outcome(
        &[lower],
        json!({ "sweep_csv": csv_file, "sweep_json": json_file, "max_abort_fraction": worst_abort, "summary": summary }),
    );
    report.passed &= aborts_ok;
    report.report["passed"] = json!(report.passed);
    Ok(report)
}

pub fn transform_check(ctx: &Context, paths: usize, steps: usize, tolerance: f64, eps: Option<f64>) -> anyhow::Result<Outcome> {
    let model = ctx.model()?;
    let x0 = (model.shift() + model.direction() * eps.unwrap_or(0.0)).as_slice().to_vec();
    let report = solvers::transform_check(&model, &x0, steps, paths, ctx.seed, tolerance)?;
    Ok(outcome(&[report], json!({})))
}

pub fn variation_check(ctx: &Context, points: usize, paths: usize, steps: usize, radius: f64) -> anyhow::Result<Outcome> {
    let model = ctx.model()?;
    let mut checks = jacobian_fd_check(&model, points, radius, ctx.seed, 1e-5)?;
    checks.push(solvers::variation_fd_check(&model, steps, paths, ctx.seed, 1e-3)?);
    Ok(outcome(&checks, json!({ "solver": Solver::Cascade })))
}
