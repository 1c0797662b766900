//! Numerical laboratory for additive-noise SDEs whose solutions depend on
//! the initial value only logarithmically.
//!
//! The drift is a smooth, polynomially growing vector field on ℝᵈ built
//! from two bump functions. Solutions started at `v` and `v + εδ` and driven
//! by the same Brownian path separate like `exp(−c|ln ε|^{2/n})`, which is
//! eventually larger than every power `ε^α`.
//!
//! * [`bump`]: smooth compactly supported bumps with closed-form derivatives.
//! * [`model`]: the drift, its Jacobian, Lyapunov functions, and the affine
//!   transform to a general base point and direction.
//! * [`paths`]: reproducible Brownian paths.
//! * [`solvers`]: cascade, Euler–Maruyama and first-variation solvers.
//! * [`bounds`]: deterministic quadrature checks of the analytic bounds.
//! * [`montecarlo`]: coupled distance estimates and ε-sweeps.

pub mod bounds;
pub mod bump;
pub mod error;
pub mod model;
pub mod montecarlo;
pub mod paths;
pub mod quad;
pub mod report;
pub mod solvers;

pub use bump::{BumpFunction, Derivative};
pub use error::{LabError, Result};
pub use model::{AxisAlignedModel, GeneralModel, ModelParams};
pub use paths::{sample_brownian, BrownianPath, TimeGrid};
pub use report::CheckReport;
pub use solvers::SolutionPath;
