//! Chase-style materialization of the global schema from source relations via
//! mapping rules (with normalization and imputation hooks), and conjunctive
//! query evaluation in certain-answers or impute mode.
//!
//! Materialization applies every rule by nested-loop join with unification,
//! issuing one fresh labeled null per existential variable per satisfying
//! binding. In certain-answers mode, imputation predicates behave like
//! existentials and produce skolems, which query evaluation then discards;
//! in impute mode they produce concrete values from fitted imputers, and a
//! second materialization pass fills any remaining missing cells whose column
//! has a registered imputer.

mod eval;
mod exchange;
mod query;
mod registry;

pub use exchange::{apply_rule, materialize, QueryMode, TargetInstance};
pub use query::evaluate_query;
pub use registry::{FunctionRegistry, ImputeFunction, ImputeOutput, NormalizationTable};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExchangeError {
    #[error("normalization table '{table}' has no entry for '{value}'")]
    MissingNormalizationEntry { table: String, value: String },
    #[error("imputer '{0}' is not fitted")]
    ImputerNotFitted(String),
    #[error("unknown relation '{0}'")]
    UnknownRelation(String),
    #[error("unknown function '{0}'")]
    UnknownFunction(String),
    #[error("function '{function}': {message}")]
    FunctionType { function: String, message: String },
    #[error("body is unsafe: {0}")]
    UnsafeBody(String),
    #[error("invalid impute function '{function}': {message}")]
    InvalidImputeFunction { function: String, message: String },
    #[error(transparent)]
    Impute(#[from] imputation::ImputeError),
    #[error(transparent)]
    Relational(#[from] relational_core::RelationalError),
}
