//! Strong approximation of scalar SDEs driven by a single Brownian motion.
//!
//! * [`model`]: coefficient fields, the bracket `𝒢`, hypothesis checks,
//!   the built-in equations and coefficient localization.
//! * [`oracle`]: a cost-counted Brownian path with exact bridge refinement.
//! * [`schemes`]: equidistant one-step schemes sharing one path.
//! * [`method`]: sequential methods `(ψ, χ, φ)` with cost accounting.
//! * [`proof`]: weight processes and auxiliary schemes used in lower-bound
//!   arguments, as executable diagnostics.
//! * [`localization`]: coupled runs of an equation and its localization.
//! * [`stats`]: intervals, tests, log-log fits and Gaussian tail checks.
//! * [`error_lab`]: Monte Carlo error estimation and rate experiments.

pub mod error;
pub mod error_lab;
pub mod localization;
pub mod method;
pub mod proof;
pub mod model;
pub mod oracle;
pub mod rng;
pub mod schemes;
pub mod stats;

pub use error::{LabError, Result};
