use std::collections::BTreeMap;

use relational_core::{ColumnType, NaiveDate, Value};
use serde::{Deserialize, Serialize};

use crate::spec::{ImputerKind, ImputerSpec};
use crate::stats::{FeatureKey, SufficientStats};
use crate::ImputeError;

/// Fitted parameters, by kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "params")]
pub enum FittedParams {
    Constant {
        value: Value,
    },
    Mean {
        value: f64,
    },
    Mode {
        value: String,
    },
    Ridge {
        /// Design-space coordinates in solve order; `weights[i]` belongs to
        /// `keys[i]`. Category keys double as the one-hot vocabulary.
        keys: Vec<FeatureKey>,
        weights: Vec<f64>,
    },
}

/// A trained imputation function for one target column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedImputer {
    pub spec: ImputerSpec,
    pub params: FittedParams,
}

/// Fit an imputer from (merged) sufficient statistics.
///
/// Mean is the running average; mode is the most frequent category with ties
/// broken toward the lexicographically smallest; ridge solves
/// `(X^T X + lambda I) w = X^T y` directly.
pub fn fit(spec: &ImputerSpec, stats: &SufficientStats) -> Result<FittedImputer, ImputeError> {
    let params = match (&spec.kind, stats) {
        (ImputerKind::Constant { value }, _) => FittedParams::Constant {
            value: value.clone(),
        },
        (ImputerKind::Mean, SufficientStats::Mean { sum, count }) => {
            if *count == 0 {
                return Err(ImputeError::EmptyStats(spec.name.clone()));
            }
            FittedParams::Mean {
                value: sum / *count as f64,
            }
        }
        (ImputerKind::Mode, SufficientStats::Mode { counts }) => {
            // BTreeMap iterates lexicographically, so keeping a strict
            // maximum realizes the documented tie-break
            let mut best: Option<(&String, u64)> = None;
            for (category, n) in counts {
                if best.map(|(_, m)| *n > m).unwrap_or(true) {
                    best = Some((category, *n));
                }
            }
            match best {
                Some((category, _)) => FittedParams::Mode {
                    value: category.clone(),
                },
                None => return Err(ImputeError::EmptyStats(spec.name.clone())),
            }
        }
        (ImputerKind::Ridge { lambda, .. }, SufficientStats::Ridge { xtx, xty, count }) => {
            if *count == 0 {
                return Err(ImputeError::EmptyStats(spec.name.clone()));
            }
            let keys: Vec<FeatureKey> = xty.keys().cloned().collect();
            let d = keys.len();
            let mut a = vec![vec![0.0; d]; d];
            let mut b = vec![0.0; d];
            for (i, ki) in keys.iter().enumerate() {
                b[i] = xty[ki];
                for (j, kj) in keys.iter().enumerate() {
                    a[i][j] = xtx.get(&(ki.clone(), kj.clone())).copied().unwrap_or(0.0);
                }
                a[i][i] += lambda;
            }
            let weights = solve_dense(a, b)?;
            FittedParams::Ridge { keys, weights }
        }
        _ => return Err(ImputeError::KindMismatch),
    };
    Ok(FittedImputer {
        spec: spec.clone(),
        params,
    })
}

/// Gaussian elimination with partial pivoting.
fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<Vec<f64>, ImputeError> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        if a[pivot][col].abs() < 1e-12 {
            return Err(ImputeError::SingularSystem);
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in row + 1..n {
            acc -= a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    Ok(x)
}

impl FittedImputer {
    /// Impute one value from a feature assignment (column name -> value).
    /// Mean, mode, and constant imputers need no features; ridge requires
    /// every feature present and non-null. The result carries the target
    /// column's declared type and is never missing or a labeled null.
    pub fn impute(&self, features: &BTreeMap<String, Value>) -> Result<Value, ImputeError> {
        match &self.params {
            FittedParams::Constant { value } => Ok(value.clone()),
            FittedParams::Mean { value } => Ok(numeric_as(self.spec.target_type, *value)),
            FittedParams::Mode { value } => category_as(self.spec.target_type, value),
            FittedParams::Ridge { keys, weights } => {
                let mut acc = 0.0;
                for (key, w) in keys.iter().zip(weights) {
                    let coord = match key {
                        FeatureKey::Intercept => 1.0,
                        FeatureKey::Numeric(name) => self
                            .feature_value(features, name)?
                            .as_f64()
                            .ok_or_else(|| {
                            ImputeError::TypeMismatch(format!("feature '{name}' must be numeric"))
                        })?,
                        FeatureKey::Category(name, category) => {
                            match self.feature_value(features, name)? {
                                // unseen categories simply contribute zero
                                Value::Str(s) => {
                                    if s == category {
                                        1.0
                                    } else {
                                        0.0
                                    }
                                }
                                other => {
                                    return Err(ImputeError::TypeMismatch(format!(
                                        "feature '{name}' must be a string, got {other}"
                                    )))
                                }
                            }
                        }
                    };
                    acc += w * coord;
                }
                Ok(numeric_as(self.spec.target_type, acc))
            }
        }
    }

    fn feature_value<'a>(
        &self,
        features: &'a BTreeMap<String, Value>,
        name: &str,
    ) -> Result<&'a Value, ImputeError> {
        match features.get(name) {
            Some(v) if !v.is_null_like() => Ok(v),
            _ => Err(ImputeError::MissingFeature(name.to_string())),
        }
    }
}

fn numeric_as(ty: ColumnType, v: f64) -> Value {
    match ty {
        ColumnType::Int => Value::Int(v.round() as i64),
        _ => Value::Float(v),
    }
}

fn category_as(ty: ColumnType, category: &str) -> Result<Value, ImputeError> {
    match ty {
        ColumnType::Str => Ok(Value::Str(category.to_string())),
        ColumnType::Int => category.parse::<i64>().map(Value::Int).map_err(|_| {
            ImputeError::TypeMismatch(format!("modal category '{category}' is not an int"))
        }),
        ColumnType::Date => NaiveDate::parse_from_str(category, "%Y-%m-%d")
            .map(Value::Date)
            .map_err(|_| {
                ImputeError::TypeMismatch(format!("modal category '{category}' is not a date"))
            }),
        ColumnType::Float => Err(ImputeError::TypeMismatch(
            "mode imputation over floats is not supported".into(),
        )),
    }
}
