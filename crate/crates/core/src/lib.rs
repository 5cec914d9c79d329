//! Exact lasso regularization paths with degrees-of-freedom tools.
//!
//! The lasso here minimizes `‖y − Xβ‖² + λ·Σ|βⱼ|` on a standardized design
//! (centered, unit-norm columns; centered response). The path is piecewise
//! linear in `λ`; [`path::LassoPath`] stores it exactly as a list of
//! transition points. The number of nonzero coefficients is an unbiased
//! estimate of the fit's degrees of freedom, which makes Cp, AIC and BIC
//! cheap to minimize: the optimum always sits at a transition point.

pub mod cli;
pub mod dataset;
pub mod error;
pub mod linalg;
pub mod mc;
pub mod oracle;
pub mod parallel;
pub mod path;
pub mod selection;

pub use dataset::{diabetes, expand_quadratic, load_csv, standardize, RawDataset, Response, StandardizedDataset};
pub use error::{Error, Result};
pub use parallel::Execution;
pub use path::{compute_path, Design, FitResult, LassoPath, PathEvent};
pub use selection::{estimate_sigma2, select_optimal, Criterion, SelectionReport};
