use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::Deserialize;

use sde_lab_core::model::ModelParams;
use sde_lab_core::montecarlo::{check_eps_grid, DEFAULT_DT};
use sde_lab_core::solvers::{EulerScheme, Solver};

/// `ε = exp(−k)` for `k` from `start_exponent` to `stop_exponent` in steps of
/// `1/per_decade`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum EpsGrid {
    List(Vec<f64>),
    Spec {
        start_exponent: f64,
        stop_exponent: f64,
        per_decade: u32,
    },
}

impl Default for EpsGrid {
    fn default() -> Self {
        EpsGrid::Spec {
            start_exponent: 1.0,
            stop_exponent: 6.0,
            per_decade: 1,
        }
    }
}

impl EpsGrid {
    pub fn values(&self) -> anyhow::Result<Vec<f64>> {
        let values = match self {
            EpsGrid::List(v) => v.clone(),
            &EpsGrid::Spec {
                start_exponent,
                stop_exponent,
                per_decade,
            } => {
                if per_decade == 0 || !(stop_exponent >= start_exponent) {
                    bail!("eps_grid: need per_decade >= 1 and stop_exponent >= start_exponent");
                }
                let count = ((stop_exponent - start_exponent) * per_decade as f64 + 1e-9).floor() as usize + 1;
                (0..count)
                    .map(|k| (-(start_exponent + k as f64 / per_decade as f64)).exp())
                    .collect()
            }
        };
        check_eps_grid(&values)?;
        Ok(values)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SolverKind {
    #[default]
    Cascade,
    EulerMaruyama,
}

/// Flat experiment configuration. Unset model fields take the defaults of
/// [`ModelParams::axis_aligned`].
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n: Option<u32>,
    pub tau: Option<f64>,
    pub horizon: Option<f64>,
    pub dim: Option<usize>,
    pub noise_dim: Option<usize>,
    pub p: Option<f64>,
    pub q: Option<f64>,
    pub shift: Option<Vec<f64>>,
    pub direction: Option<Vec<f64>>,
    pub dt: Option<f64>,
    pub n_paths: Option<usize>,
    pub eps_grid: Option<EpsGrid>,
    pub t_eval: Option<f64>,
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub tamed: Option<bool>,
    pub solver: Option<SolverKind>,
    /// Exponent of the logarithmic upper-bound curve.
    pub q_upper: Option<f64>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn model_params(&self) -> anyhow::Result<ModelParams> {
        let n = self.n.unwrap_or(4);
        let dim = self.dim.unwrap_or(5);
        let mut prm = ModelParams::axis_aligned(n, dim);
        if let Some(tau) = self.tau {
            prm.tau = tau;
        }
        if let Some(horizon) = self.horizon {
            prm.horizon = horizon;
        }
        if let Some(m) = self.noise_dim {
            prm.noise_dim = m;
        }
        if let Some(p) = self.p {
            prm.p = p;
            prm.q = 2.0 * p * n as f64;
        }
        if let Some(q) = self.q {
            prm.q = q;
        }
        if let Some(v) = &self.shift {
            prm.shift = v.clone();
        }
        if let Some(d) = &self.direction {
            prm.direction = d.clone();
        }
        prm.validate()?;
        Ok(prm)
    }

    pub fn dt(&self) -> f64 {
        self.dt.unwrap_or(DEFAULT_DT)
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths.unwrap_or(10_000)
    }

    pub fn t_eval(&self) -> f64 {
        self.t_eval.unwrap_or(0.9)
    }

    pub fn q_upper(&self) -> f64 {
        self.q_upper.unwrap_or(1.0)
    }

    pub fn eps_grid(&self) -> anyhow::Result<Vec<f64>> {
        self.eps_grid.clone().unwrap_or_default().values()
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output_dir.clone().unwrap_or_else(|| PathBuf::from("."))
    }

    pub fn solver(&self) -> Solver {
        match self.solver.unwrap_or_default() {
            SolverKind::Cascade => Solver::Cascade,
            SolverKind::EulerMaruyama if self.tamed.unwrap_or(true) => Solver::EulerMaruyama(EulerScheme::Tamed),
            SolverKind::EulerMaruyama => Solver::EulerMaruyama(EulerScheme::Explicit),
        }
    }

    /// Flag, then config file, then `SDE_LAB_SEED`, then 0.
    pub fn resolve_seed(&self, flag: Option<u64>) -> anyhow::Result<u64> {
        if let Some(s) = flag.or(self.seed) {
            return Ok(s);
        }
        match std::env::var("SDE_LAB_SEED") {
            Ok(s) => s.trim().parse().with_context(|| format!("SDE_LAB_SEED={s:?} is not an integer")),
            Err(_) => Ok(0),
        }
    }
}

/// Parses `1/e`, `e^-k`, `exp(-k)` or a plain number.
pub fn parse_real(s: &str) -> Result<f64, String> {
    let t: String = s.chars().filter(|c| !c.is_whitespace()).collect();
    let e = std::f64::consts::E;
    let v = if t == "e" {
        e
    } else if let Some(den) = t.strip_prefix("1/") {
        1.0 / parse_real(den)?
    } else if let Some(k) = t.strip_prefix("e^") {
        e.powf(k.trim_matches(|c| c == '(' || c == ')').parse::<f64>().map_err(|x| x.to_string())?)
    } else if let Some(k) = t.strip_prefix("exp(").and_then(|r| r.strip_suffix(')')) {
        k.parse::<f64>().map_err(|x| x.to_string())?.exp()
    } else {
        t.parse::<f64>().map_err(|x| format!("{s:?}: {x}"))?
    };
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eps_spec_is_powers_of_e() {
        let g = EpsGrid::default().values().unwrap();
        assert_eq!(g.len(), 6);
        assert!((g[0] - (-1f64).exp()).abs() < 1e-16);
        assert!((g[5] - (-6f64).exp()).abs() < 1e-18);
        let half = EpsGrid::Spec { start_exponent: 1.0, stop_exponent: 2.0, per_decade: 2 };
        assert_eq!(half.values().unwrap().len(), 3);
    }

    #[test]
    fn eps_list_is_validated() {
        assert!(EpsGrid::List(vec![0.1, 0.2]).values().is_err());
        assert!(EpsGrid::List(vec![0.5]).values().is_err());
    }

    #[test]
    fn reals() {
        assert!((parse_real("1/e").unwrap() - (-1f64).exp()).abs() < 1e-16);
        assert!((parse_real("e^-2").unwrap() - (-2f64).exp()).abs() < 1e-16);
        assert!((parse_real("exp(-3)").unwrap() - (-3f64).exp()).abs() < 1e-16);
        assert_eq!(parse_real("0.25").unwrap(), 0.25);
        assert!(parse_real("x").is_err());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"nn": 3}"#).is_err());
        let c: ExperimentConfig =
            serde_json::from_str(r#"{"eps_grid": [0.3, 0.1], "p": 2}"#).unwrap();
        assert_eq!(c.model_params().unwrap().q, 16.0);
        assert_eq!(c.eps_grid().unwrap(), vec![0.3, 0.1]);
    }
}
