//! Quantile regression with lagged, dummy and interaction features.
//!
//! Interaction columns are products of standardized parents, so the
//! objective stays linear in the coefficients and the fit is an exact linear
//! program. Standardization always uses the rows being fitted.

pub mod cv;
pub mod features;
pub mod model;
pub mod solver;

pub use cv::{expanding_window_cv, CvFold, CvReport};
pub use features::{engineer_features, ColumnKind, DesignMatrix, EventDummy, FeatureId, FeatureSchema};
pub use model::{fit_quantile, pseudo_r2, QuantileModel};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum QregError {
    #[error("quantile level {0} outside (0, 1)")]
    InvalidTau(f64),
    #[error("`{0}` is equity-derived and rejected by the endogeneity guard")]
    EndogenousFeature(String),
    #[error("invalid feature schema: {0}")]
    InvalidSchema(String),
    #[error("series `{0}` referenced by the schema is not in the panel")]
    MissingSeries(String),
    #[error("dummy `{name}` takes value {value} at {month}; expected 0 or 1")]
    NonBinaryDummy { name: String, month: crate::Month, value: f64 },
    #[error("need at least {min} rows, got {rows}")]
    TooFewRows { rows: usize, min: usize },
    #[error("target is constant; quantile fit is degenerate")]
    ConstantTarget,
    #[error("design has {rows} rows but target has {target}")]
    ShapeMismatch { rows: usize, target: usize },
    #[error("simplex did not converge after {pivots} pivots")]
    NonConvergence { pivots: usize },
    #[error("{rows} rows allow fewer than 2 folds (initial window {initial_window}, step {step})")]
    InsufficientFolds { rows: usize, initial_window: usize, step: usize },
}

/// `rho_tau(u) = u * (tau - 1[u < 0])`.
pub fn check_loss(u: f64, tau: f64) -> Result<f64, QregError> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(QregError::InvalidTau(tau));
    }
    Ok(if u < 0.0 { u * (tau - 1.0) } else { u * tau })
}
