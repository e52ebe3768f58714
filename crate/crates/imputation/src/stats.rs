use std::collections::BTreeMap;

use relational_core::{ColumnType, Relation, Value};
use serde::{Deserialize, Serialize};

use crate::spec::{ImputerKind, ImputerSpec};
use crate::ImputeError;

/// One coordinate of the ridge design space. Keys are labeled rather than
/// positional so that Gram matrices computed against different locally
/// observed category vocabularies merge by plain map addition.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FeatureKey {
    Intercept,
    Numeric(String),
    /// One-hot coordinate `(feature column, category)`.
    Category(String, String),
}

/// Additive per-silo summaries. Merging is componentwise and therefore
/// commutative and associative; the merged summary carries exactly the
/// information of the pooled rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "stats")]
pub enum SufficientStats {
    /// Constant imputers carry no data.
    Constant,
    Mean {
        sum: f64,
        count: u64,
    },
    Mode {
        counts: BTreeMap<String, u64>,
    },
    Ridge {
        /// Labeled Gram matrix X^T X, both (i, j) and (j, i) stored.
        xtx: BTreeMap<(FeatureKey, FeatureKey), f64>,
        /// Labeled X^T y.
        xty: BTreeMap<FeatureKey, f64>,
        count: u64,
    },
}

impl SufficientStats {
    pub fn zero_for(kind: &ImputerKind) -> SufficientStats {
        match kind {
            ImputerKind::Constant { .. } => SufficientStats::Constant,
            ImputerKind::Mean => SufficientStats::Mean { sum: 0.0, count: 0 },
            ImputerKind::Mode => SufficientStats::Mode {
                counts: BTreeMap::new(),
            },
            ImputerKind::Ridge { .. } => SufficientStats::Ridge {
                xtx: BTreeMap::new(),
                xty: BTreeMap::new(),
                count: 0,
            },
        }
    }

    pub fn count(&self) -> u64 {
        match self {
            SufficientStats::Constant => 0,
            SufficientStats::Mean { count, .. } => *count,
            SufficientStats::Mode { counts } => counts.values().sum(),
            SufficientStats::Ridge { count, .. } => *count,
        }
    }
}

/// Canonical category string for mode counting and one-hot encoding.
fn category_of(value: &Value) -> String {
    value.to_string()
}

/// Compute this silo's contribution for one imputer. Only rows where the
/// target (and, for ridge, every feature) is non-missing and not a labeled
/// null contribute; an empty contribution yields zero stats.
pub fn local_stats(rows: &Relation, spec: &ImputerSpec) -> Result<SufficientStats, ImputeError> {
    let target_idx = rows
        .schema()
        .column_index(&spec.target.column)
        .ok_or_else(|| {
            ImputeError::TypeMismatch(format!(
                "relation '{}' has no column '{}'",
                rows.schema().name(),
                spec.target.column
            ))
        })?;

    match &spec.kind {
        ImputerKind::Constant { .. } => Ok(SufficientStats::Constant),
        ImputerKind::Mean => {
            let ty = rows.schema().column_type(&spec.target.column).unwrap();
            if !matches!(ty, ColumnType::Int | ColumnType::Float) {
                return Err(ImputeError::TypeMismatch(format!(
                    "mean over non-numeric column '{}' ({ty})",
                    spec.target.column
                )));
            }
            let mut sum = 0.0;
            let mut count = 0;
            for row in rows.rows() {
                if let Some(v) = row[target_idx].as_f64() {
                    sum += v;
                    count += 1;
                }
            }
            Ok(SufficientStats::Mean { sum, count })
        }
        ImputerKind::Mode => {
            let mut counts: BTreeMap<String, u64> = BTreeMap::new();
            for row in rows.rows() {
                let v = &row[target_idx];
                if v.is_null_like() {
                    continue;
                }
                *counts.entry(category_of(v)).or_insert(0) += 1;
            }
            Ok(SufficientStats::Mode { counts })
        }
        ImputerKind::Ridge {
            features, one_hot, ..
        } => {
            let mut feature_idx = Vec::with_capacity(features.len());
            for f in features {
                let idx = rows.schema().column_index(f).ok_or_else(|| {
                    ImputeError::TypeMismatch(format!(
                        "relation '{}' has no feature column '{f}'",
                        rows.schema().name()
                    ))
                })?;
                feature_idx.push((f.clone(), idx));
            }

            let mut xtx: BTreeMap<(FeatureKey, FeatureKey), f64> = BTreeMap::new();
            let mut xty: BTreeMap<FeatureKey, f64> = BTreeMap::new();
            let mut count = 0;
            'rows: for row in rows.rows() {
                let y = match row[target_idx].as_f64() {
                    Some(y) => y,
                    None => continue,
                };
                let mut coords: Vec<(FeatureKey, f64)> = vec![(FeatureKey::Intercept, 1.0)];
                for (name, idx) in &feature_idx {
                    match &row[*idx] {
                        Value::Int(i) => {
                            coords.push((FeatureKey::Numeric(name.clone()), *i as f64))
                        }
                        Value::Float(f) => coords.push((FeatureKey::Numeric(name.clone()), *f)),
                        Value::Str(s) if *one_hot => {
                            coords.push((FeatureKey::Category(name.clone(), s.clone()), 1.0))
                        }
                        Value::Str(_) => {
                            return Err(ImputeError::TypeMismatch(format!(
                                "categorical feature '{name}' requires one-hot encoding"
                            )))
                        }
                        Value::Missing | Value::LabeledNull(_) => continue 'rows,
                        Value::Date(_) => {
                            return Err(ImputeError::TypeMismatch(format!(
                                "date column '{name}' cannot be a ridge feature"
                            )))
                        }
                    }
                }
                for (ka, va) in &coords {
                    for (kb, vb) in &coords {
                        *xtx.entry((ka.clone(), kb.clone())).or_insert(0.0) += va * vb;
                    }
                    *xty.entry(ka.clone()).or_insert(0.0) += va * y;
                }
                count += 1;
            }
            Ok(SufficientStats::Ridge { xtx, xty, count })
        }
    }
}

/// Componentwise sum of per-silo summaries. All parts must be the same kind.
pub fn merge_stats(parts: &[SufficientStats]) -> Result<SufficientStats, ImputeError> {
    let mut iter = parts.iter();
    let first = iter.next().ok_or(ImputeError::NoParts)?;
    let mut acc = first.clone();
    for part in iter {
        match (&mut acc, part) {
            (SufficientStats::Constant, SufficientStats::Constant) => {}
            (
                SufficientStats::Mean { sum, count },
                SufficientStats::Mean { sum: s2, count: c2 },
            ) => {
                *sum += s2;
                *count += c2;
            }
            (SufficientStats::Mode { counts }, SufficientStats::Mode { counts: c2 }) => {
                for (k, v) in c2 {
                    *counts.entry(k.clone()).or_insert(0) += v;
                }
            }
            (
                SufficientStats::Ridge { xtx, xty, count },
                SufficientStats::Ridge {
                    xtx: x2,
                    xty: y2,
                    count: c2,
                },
            ) => {
                for (k, v) in x2 {
                    *xtx.entry(k.clone()).or_insert(0.0) += v;
                }
                for (k, v) in y2 {
                    *xty.entry(k.clone()).or_insert(0.0) += v;
                }
                *count += c2;
            }
            _ => return Err(ImputeError::KindMismatch),
        }
    }
    Ok(acc)
}
