//! Column imputers (constant, federated mean, federated mode, federated
//! closed-form ridge regression) fitted from sufficient statistics that
//! aggregate exactly across silos.
//!
//! Each silo computes [`local_stats`] over its own rows; [`merge_stats`]
//! combines the per-silo summaries by componentwise addition, and [`fit`]
//! turns the merged summary into a usable imputer. Because the statistics are
//! additive, the federated fit equals the fit over the pooled rows.

mod fitted;
mod spec;
mod stats;

pub use fitted::{fit, FittedImputer, FittedParams};
pub use spec::{ColumnRef, ImputerKind, ImputerSpec};
pub use stats::{local_stats, merge_stats, FeatureKey, SufficientStats};

use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ImputeError {
    #[error("type mismatch: {0}")]
    TypeMismatch(String),
    #[error("cannot merge sufficient statistics of different kinds")]
    KindMismatch,
    #[error("no sufficient statistics to merge")]
    NoParts,
    #[error("statistics are empty; imputer '{0}' cannot be fitted")]
    EmptyStats(String),
    #[error("ridge system is singular (lambda = 0 with rank-deficient features)")]
    SingularSystem,
    #[error("feature '{0}' is missing or null at imputation time")]
    MissingFeature(String),
    #[error("imputer spec '{0}' is invalid: {1}")]
    InvalidSpec(String, String),
}
