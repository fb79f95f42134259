//! Robust structured regression under the L2E (integrated squared error)
//! criterion.
//!
//! The estimator minimizes
//!
//! ```text
//! h(β, τ) = τ / (2√π) − (τ / n) √(2/π) Σ exp(−τ² r_i² / 2) + φ(β),   r = y − Xβ
//! ```
//!
//! by block descent: β is updated by a sharp quadratic majorization (a
//! weighted least squares problem under the penalty φ) and the log-precision
//! η = ln τ by a modified Newton method with Armijo backtracking. A proximal
//! gradient baseline and a simulation harness are included for comparison.
//!
//! Module map:
//! - [`model`]: loss, residuals, case weights and block derivatives.
//! - [`projections`]: Euclidean projections and fusion (difference) matrices.
//! - [`majorize`]: the β surrogate and its penalized solvers.
//! - [`newton`]: the η update.
//! - [`fit`]: the outer block-descent driver.
//! - [`pg`]: proximal gradient baseline.
//! - [`experiments`]: data generators, metrics, cross-validation, replicates.

pub mod error;
pub mod experiments;
pub mod fit;
pub mod linalg;
pub mod majorize;
pub mod model;
pub mod newton;
pub mod pg;
pub mod projections;

pub use error::{L2eError, Result};
pub use fit::{
    fit_l2e, init_default, FitOptions, FitReport, InitialGuess, ReportRecord, RhoContinuation,
};
pub use majorize::{mm_beta_update, Penalty, WeightedSystem};
pub use model::{Dataset, Design, FitState, LossValue, ETA_CAP, WEIGHT_FLOOR};
pub use newton::{eta_update, NewtonOptions};
pub use pg::{fit_pg, PgOptions};
pub use projections::{ConstraintSet, FusionMatrix};
