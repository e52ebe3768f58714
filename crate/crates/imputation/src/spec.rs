use relational_core::{ColumnType, Value};
use serde::{Deserialize, Serialize};

use crate::ImputeError;

/// A (relation, column) pair in the global schema.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ColumnRef {
    pub relation: String,
    pub column: String,
}

impl ColumnRef {
    pub fn new(relation: impl Into<String>, column: impl Into<String>) -> Self {
        ColumnRef {
            relation: relation.into(),
            column: column.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ImputerKind {
    /// Always impute a fixed value; no fitting required.
    Constant {
        value: Value,
    },
    Mean,
    Mode,
    Ridge {
        /// Feature column names. Categorical features require `one_hot`.
        features: Vec<String>,
        lambda: f64,
        one_hot: bool,
    },
}

/// Declaration of one column imputer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputerSpec {
    pub name: String,
    pub target: ColumnRef,
    /// Declared type of the target column; imputed values are produced in
    /// this type.
    pub target_type: ColumnType,
    pub kind: ImputerKind,
}

impl ImputerSpec {
    pub fn new(
        name: impl Into<String>,
        target: ColumnRef,
        target_type: ColumnType,
        kind: ImputerKind,
    ) -> Result<Self, ImputeError> {
        let name = name.into();
        match &kind {
            ImputerKind::Ridge {
                features, lambda, ..
            } => {
                if features.iter().any(|f| *f == target.column) {
                    return Err(ImputeError::InvalidSpec(
                        name,
                        format!(
                            "ridge features must exclude the target column '{}'",
                            target.column
                        ),
                    ));
                }
                if features.is_empty() {
                    return Err(ImputeError::InvalidSpec(
                        name,
                        "ridge requires at least one feature".into(),
                    ));
                }
                if !(*lambda >= 0.0) {
                    return Err(ImputeError::InvalidSpec(
                        name,
                        format!("lambda must be nonnegative, got {lambda}"),
                    ));
                }
            }
            ImputerKind::Constant { value } => {
                if value.is_null_like() {
                    return Err(ImputeError::InvalidSpec(
                        name,
                        "constant imputer value cannot be missing or a labeled null".into(),
                    ));
                }
                if !value.matches_type(target_type) {
                    return Err(ImputeError::InvalidSpec(
                        name,
                        format!("constant value {value} does not match target type {target_type}"),
                    ));
                }
            }
            ImputerKind::Mean => {
                if !matches!(target_type, ColumnType::Int | ColumnType::Float) {
                    return Err(ImputeError::InvalidSpec(
                        name,
                        format!("mean imputation needs a numeric target, got {target_type}"),
                    ));
                }
            }
            ImputerKind::Mode => {
                if matches!(target_type, ColumnType::Float) {
                    return Err(ImputeError::InvalidSpec(
                        name,
                        "mode imputation over floats is not supported".into(),
                    ));
                }
            }
        }
        Ok(ImputerSpec {
            name,
            target,
            target_type,
            kind,
        })
    }
}
