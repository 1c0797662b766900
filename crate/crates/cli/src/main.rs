use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sde_lab_cli::config::{parse_real, ExperimentConfig, SolverKind};
use sde_lab_cli::{commands, Outcome};

#[derive(Parser)]
#[command(name = "sde-lab", version, about = "Experiments on initial-value regularity of additive-noise SDEs")]
struct Cli {
    /// JSON configuration file with flat keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; falls back to the config file, then SDE_LAB_SEED.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads. Results do not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

/// Flags that override config file values.
#[derive(Args)]
struct Overrides {
    #[arg(long, global = true)]
    n: Option<u32>,
    #[arg(long, global = true)]
    tau: Option<f64>,
    #[arg(long, global = true)]
    horizon: Option<f64>,
    #[arg(long, global = true)]
    dim: Option<usize>,
    #[arg(long, global = true)]
    dt: Option<f64>,
    #[arg(long, global = true)]
    n_paths: Option<usize>,
    #[arg(long, global = true)]
    t_eval: Option<f64>,
    #[arg(long, global = true, value_delimiter = ',', value_parser = parse_real)]
    eps_grid: Option<Vec<f64>>,
    #[arg(long, global = true)]
    q_upper: Option<f64>,
    #[arg(long, global = true, value_enum)]
    solver: Option<SolverKind>,
    /// Plain (untamed) Euler–Maruyama steps.
    #[arg(long, global = true)]
    no_taming: bool,
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
}

impl Overrides {
    fn apply(self, c: &mut ExperimentConfig) {
        macro_rules! set {
            ($($f:ident),*) => { $( if self.$f.is_some() { c.$f = self.$f; } )* };
        }
        set!(n, tau, horizon, dim, dt, n_paths, t_eval, q_upper, solver, output_dir);
        if let Some(g) = self.eps_grid {
            c.eps_grid = Some(sde_lab_cli::config::EpsGrid::List(g));
        }
        if self.no_taming {
            c.tamed = Some(false);
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Sampling checks of the derivative growth and Lyapunov bounds.
    VerifyBounds {
        #[arg(long, default_value_t = 100_000)]
        trials: usize,
        #[arg(long, default_value_t = 5.0)]
        radius: f64,
        #[arg(long, default_value_t = 5.0)]
        z_radius: f64,
    },
    /// Normal-functional lower bound on a (p, κ, ε) grid.
    Lemma21 {
        #[arg(long, value_delimiter = ',', default_value = "1,2,4", value_parser = parse_real)]
        p: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "0.1,1,10", value_parser = parse_real)]
        kappa: Vec<f64>,
        #[arg(long, default_value = "1/e", value_parser = parse_real)]
        eps_max: f64,
        #[arg(long, default_value_t = 8)]
        eps_count: usize,
    },
    /// Variance of the Gaussian integral and a normality test of X₃(τ).
    StdnormCheck {
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
    },
    /// Solves one path and writes the Brownian path and solution as CSV.
    Simulate {
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        x0: Option<Vec<f64>>,
        /// Start from v + εδ instead; for the axis-aligned model also checks
        /// the envelope of X₄.
        #[arg(long, value_parser = parse_real)]
        eps: Option<f64>,
        #[arg(long, default_value_t = 0)]
        path_index: u64,
    },
    /// Distance estimates along v + εδ and local exponent fits.
    Sweep {
        #[arg(long, default_value_t = 2)]
        window: usize,
    },
    /// Transformed cascade solution against Euler–Maruyama on the general model.
    TransformCheck {
        #[arg(long, default_value_t = 50)]
        paths: usize,
        /// Coarse step count; the fine run uses twice as many.
        #[arg(long, default_value_t = 4096)]
        steps: usize,
        #[arg(long, default_value_t = 5e-3)]
        tolerance: f64,
        /// Start from v + εδ instead of v.
        #[arg(long, value_parser = parse_real)]
        eps: Option<f64>,
    },
    /// Jacobian and first-variation checks against finite differences.
    VariationCheck {
        #[arg(long, default_value_t = 1000)]
        points: usize,
        #[arg(long, default_value_t = 20)]
        paths: usize,
        #[arg(long, default_value_t = 2048)]
        steps: usize,
        #[arg(long, default_value_t = 5.0)]
        radius: f64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut config = match &cli.config {
        Some(path) => match ExperimentConfig::load(path) {
            Ok(c) => c,
            Err(e) => return config_error(e),
        },
        None => ExperimentConfig::default(),
    };
    cli.overrides.apply(&mut config);
    let seed = match config.resolve_seed(cli.seed) {
        Ok(s) => s,
        Err(e) => return config_error(e),
    };
    if let Some(k) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(k).build_global() {
            return config_error(e.into());
        }
    }
    let ctx = match commands::Context::new(config, seed) {
        Ok(c) => c,
        Err(e) => return config_error(e),
    };

    let result = match cli.command {
        Command::VerifyBounds { trials, radius, z_radius } => commands::verify_bounds(&ctx, trials, radius, z_radius),
        Command::Lemma21 { p, kappa, eps_max, eps_count } => commands::lemma21(&p, &kappa, eps_max, eps_count),
        Command::StdnormCheck { samples } => commands::stdnorm_check(&ctx, samples),
        Command::Simulate { x0, eps, path_index } => commands::simulate(&ctx, x0, eps, path_index),
        Command::Sweep { window } => commands::sweep(&ctx, window),
        Command::TransformCheck { paths, steps, tolerance, eps } => {
            commands::transform_check(&ctx, paths, steps, tolerance, eps)
        }
        Command::VariationCheck { points, paths, steps, radius } => {
            commands::variation_check(&ctx, points, paths, steps, radius)
        }
    };
    match result {
        Ok(Outcome { passed, report }) => {
            emit(&serde_json::to_string_pretty(&report).expect("report serializes"));
            if passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) if e.is::<sde_lab_core::LabError>() && is_parameter_error(&e) => config_error(e),
        Err(e) => {
            emit(&serde_json::json!({ "passed": false, "error": format!("{e:#}") }).to_string());
            ExitCode::from(1)
        }
    }
}

fn is_parameter_error(e: &anyhow::Error) -> bool {
    use sde_lab_core::LabError::*;
    matches!(
        e.downcast_ref::<sde_lab_core::LabError>(),
        Some(InvalidParameter { .. } | InvalidInterval { .. } | ZeroDirection | DimensionMismatch { .. })
    )
}

/// Writes to stdout, ignoring a closed pipe.
fn emit(text: &str) {
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

fn config_error(e: anyhow::Error) -> ExitCode {
    eprintln!("sde-lab: configuration error: {e:#}");
    ExitCode::from(2)
}
