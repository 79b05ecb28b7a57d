//! Multilevel Stein variational gradient descent.
//!
//! The crate is organised bottom-up:
//!
//! - [`kernel`]: the preconditioned Gaussian kernel and its gradient.
//! - [`fem`]: piecewise-linear finite elements for `-u'' + u = f` on `(0, 1)`,
//!   used as the level hierarchy of forward models.
//! - [`targets`]: level-indexed posterior scores, plus a conjugate-Gaussian
//!   oracle.
//! - [`svgd`]: the interacting-particle update and empirical estimators.
//! - [`multilevel`]: tolerance-driven schedules, coupled level pairs, the
//!   telescoping estimator and cost accounting.
//! - [`experiment`]: reference generation, error-vs-cost sweeps and rate fits.

pub mod error;
pub mod experiment;
pub mod fem;
pub mod kernel;
pub mod multilevel;
pub mod rng;
pub mod stats;
pub mod svgd;
pub mod targets;

pub use error::{Error, Result};
pub use kernel::KernelSpec;
pub use multilevel::{CostLedger, MLSchedule};
pub use svgd::{Ensemble, Functional, RunConfig};
pub use targets::{LevelTarget, LevelTargetSpec, NoiseSpec, PriorSpec};
