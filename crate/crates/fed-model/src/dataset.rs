use std::collections::{BTreeMap, BTreeSet};

use relational_core::{ColumnType, NaiveDate, Relation, Value};
use serde::{Deserialize, Serialize};

use crate::ModelError;

/// Which query-result columns feed the model and which one is the label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub feature_columns: Vec<String>,
    pub label_column: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Labels {
    /// Regression targets.
    Values(Vec<f64>),
    /// Class indices into the encoding's class list.
    Classes(Vec<usize>),
}

impl Labels {
    pub fn len(&self) -> usize {
        match self {
            Labels::Values(v) => v.len(),
            Labels::Classes(c) => c.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// An encoded training set: an n x d float matrix plus labels. Encoders
/// guarantee no missing or labeled-null values make it into a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    d: usize,
    features: Vec<f64>,
    labels: Labels,
    pub feature_names: Vec<String>,
    /// Class labels in index order; empty for regression.
    pub class_names: Vec<String>,
}

impl Dataset {
    pub fn from_parts(
        d: usize,
        features: Vec<f64>,
        labels: Labels,
        feature_names: Vec<String>,
        class_names: Vec<String>,
    ) -> Result<Self, ModelError> {
        if d == 0 && !labels.is_empty() {
            return Err(ModelError::InvalidSpec("dataset with zero columns".into()));
        }
        if labels.len() * d != features.len() {
            return Err(ModelError::ShapeMismatch(format!(
                "{} features for {} rows of width {d}",
                features.len(),
                labels.len()
            )));
        }
        Ok(Dataset {
            d,
            features,
            labels,
            feature_names,
            class_names,
        })
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.d..(i + 1) * self.d]
    }

    pub fn labels(&self) -> &Labels {
        &self.labels
    }

    pub fn class_count(&self) -> usize {
        self.class_names.len()
    }

    /// A new dataset containing the given rows, in order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut features = Vec::with_capacity(indices.len() * self.d);
        for &i in indices {
            features.extend_from_slice(self.row(i));
        }
        let labels = match &self.labels {
            Labels::Values(v) => Labels::Values(indices.iter().map(|&i| v[i]).collect()),
            Labels::Classes(c) => Labels::Classes(indices.iter().map(|&i| c[i]).collect()),
        };
        Dataset {
            d: self.d,
            features,
            labels,
            feature_names: self.feature_names.clone(),
            class_names: self.class_names.clone(),
        }
    }

    /// Float label of row `i` (class index as float for classification).
    pub fn label_f64(&self, i: usize) -> f64 {
        match &self.labels {
            Labels::Values(v) => v[i],
            Labels::Classes(c) => c[i] as f64,
        }
    }
}

/// Label vocabulary: regression, or sorted class values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LabelVocab {
    Regression,
    IntClasses(BTreeSet<i64>),
    StrClasses(BTreeSet<String>),
}

/// A deterministic feature/label encoding. Categorical features one-hot
/// encode with a lexicographically sorted vocabulary; silos scan their own
/// rows and merge encodings so every learner produces identically shaped
/// datasets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Encoding {
    pub spec: FeatureSpec,
    /// Categorical feature column -> observed categories.
    pub categories: BTreeMap<String, BTreeSet<String>>,
    pub labels: LabelVocab,
}

/// Collect the category and label vocabularies of one relation.
pub fn scan_encoding(rows: &Relation, spec: &FeatureSpec) -> Result<Encoding, ModelError> {
    if spec.feature_columns.contains(&spec.label_column) {
        return Err(ModelError::InvalidSpec(format!(
            "label column '{}' cannot also be a feature",
            spec.label_column
        )));
    }
    let mut categories: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for column in &spec.feature_columns {
        let ty = rows
            .schema()
            .column_type(column)
            .ok_or_else(|| ModelError::InvalidSpec(format!("no feature column '{column}'")))?;
        if ty == ColumnType::Str {
            let mut seen = BTreeSet::new();
            for value in rows.column(column).unwrap() {
                if let Value::Str(s) = value {
                    seen.insert(s);
                }
            }
            categories.insert(column.clone(), seen);
        }
    }

    let label_ty = rows
        .schema()
        .column_type(&spec.label_column)
        .ok_or_else(|| {
            ModelError::InvalidSpec(format!("no label column '{}'", spec.label_column))
        })?;
    let labels = match label_ty {
        ColumnType::Float => LabelVocab::Regression,
        ColumnType::Int => {
            let mut seen = BTreeSet::new();
            for value in rows.column(&spec.label_column).unwrap() {
                if let Value::Int(i) = value {
                    seen.insert(i);
                }
            }
            LabelVocab::IntClasses(seen)
        }
        ColumnType::Str => {
            let mut seen = BTreeSet::new();
            for value in rows.column(&spec.label_column).unwrap() {
                if let Value::Str(s) = value {
                    seen.insert(s);
                }
            }
            LabelVocab::StrClasses(seen)
        }
        ColumnType::Date => {
            return Err(ModelError::UnknownLabel(
                "date-typed label columns are not supported".into(),
            ))
        }
    };

    Ok(Encoding {
        spec: spec.clone(),
        categories,
        labels,
    })
}

/// Union the vocabularies of per-silo scans.
pub fn merge_encodings(parts: &[Encoding]) -> Result<Encoding, ModelError> {
    let mut iter = parts.iter();
    let first = iter
        .next()
        .ok_or_else(|| ModelError::InvalidSpec("no encodings to merge".into()))?;
    let mut merged = first.clone();
    for part in iter {
        if part.spec != merged.spec {
            return Err(ModelError::InvalidSpec(
                "encodings disagree on feature spec".into(),
            ));
        }
        for (column, categories) in &part.categories {
            merged
                .categories
                .entry(column.clone())
                .or_default()
                .extend(categories.iter().cloned());
        }
        merged.labels = match (merged.labels, &part.labels) {
            (LabelVocab::Regression, LabelVocab::Regression) => LabelVocab::Regression,
            (LabelVocab::IntClasses(mut a), LabelVocab::IntClasses(b)) => {
                a.extend(b.iter().copied());
                LabelVocab::IntClasses(a)
            }
            (LabelVocab::StrClasses(mut a), LabelVocab::StrClasses(b)) => {
                a.extend(b.iter().cloned());
                LabelVocab::StrClasses(a)
            }
            _ => {
                return Err(ModelError::InvalidSpec(
                    "encodings disagree on label kind".into(),
                ))
            }
        };
    }
    Ok(merged)
}

/// Encode rows against a fixed encoding (column order deterministic: feature
/// columns in spec order, categorical columns expanded in sorted category
/// order). Rows must be free of missing and labeled-null values in the
/// selected columns.
pub fn encode_with(rows: &Relation, encoding: &Encoding) -> Result<Dataset, ModelError> {
    let spec = &encoding.spec;
    let mut layout: Vec<(usize, Option<String>, String)> = Vec::new(); // (col idx, category, name)
    for column in &spec.feature_columns {
        let idx = rows
            .schema()
            .column_index(column)
            .ok_or_else(|| ModelError::InvalidSpec(format!("no feature column '{column}'")))?;
        match encoding.categories.get(column) {
            Some(categories) => {
                for category in categories {
                    layout.push((idx, Some(category.clone()), format!("{column}={category}")));
                }
            }
            None => layout.push((idx, None, column.clone())),
        }
    }
    let label_idx = rows
        .schema()
        .column_index(&spec.label_column)
        .ok_or_else(|| {
            ModelError::InvalidSpec(format!("no label column '{}'", spec.label_column))
        })?;

    let d = layout.len();
    let mut features = Vec::with_capacity(rows.len() * d);
    let mut class_labels = Vec::new();
    let mut value_labels = Vec::new();
    for (row_idx, row) in rows.rows().iter().enumerate() {
        for (col_idx, category, name) in &layout {
            let value = &row[*col_idx];
            if value.is_null_like() {
                return Err(ModelError::ResidualNull {
                    column: name.clone(),
                    row: row_idx,
                });
            }
            let encoded = match (value, category) {
                (Value::Str(s), Some(cat)) => {
                    if s == cat {
                        1.0
                    } else {
                        0.0
                    }
                }
                (Value::Str(s), None) => {
                    return Err(ModelError::InvalidSpec(format!(
                        "string value '{s}' in numeric feature '{name}'"
                    )))
                }
                (Value::Int(i), None) => *i as f64,
                (Value::Float(f), None) => *f,
                // days since the Unix epoch; dates are orderable magnitudes
                (Value::Date(dt), None) => {
                    (*dt - NaiveDate::from_ymd_opt(1970, 1, 1).unwrap()).num_days() as f64
                }
                (v, Some(_)) => {
                    return Err(ModelError::InvalidSpec(format!(
                        "non-string value '{v}' in categorical feature '{name}'"
                    )))
                }
                (Value::Missing | Value::LabeledNull(_), None) => unreachable!("null-checked"),
            };
            features.push(encoded);
        }

        let label = &row[label_idx];
        if label.is_null_like() {
            return Err(ModelError::ResidualNull {
                column: spec.label_column.clone(),
                row: row_idx,
            });
        }
        match (&encoding.labels, label) {
            (LabelVocab::Regression, v) => match v.as_f64() {
                Some(f) => value_labels.push(f),
                None => return Err(ModelError::UnknownLabel(v.to_string())),
            },
            (LabelVocab::IntClasses(classes), Value::Int(i)) => {
                match classes.iter().position(|c| c == i) {
                    Some(pos) => class_labels.push(pos),
                    None => return Err(ModelError::UnknownLabel(i.to_string())),
                }
            }
            (LabelVocab::StrClasses(classes), Value::Str(s)) => {
                match classes.iter().position(|c| c == s) {
                    Some(pos) => class_labels.push(pos),
                    None => return Err(ModelError::UnknownLabel(s.clone())),
                }
            }
            (_, v) => return Err(ModelError::UnknownLabel(v.to_string())),
        }
    }

    let feature_names = layout.into_iter().map(|(_, _, name)| name).collect();
    let (labels, class_names) = match &encoding.labels {
        LabelVocab::Regression => (Labels::Values(value_labels), Vec::new()),
        LabelVocab::IntClasses(classes) => (
            Labels::Classes(class_labels),
            classes.iter().map(|c| c.to_string()).collect(),
        ),
        LabelVocab::StrClasses(classes) => (
            Labels::Classes(class_labels),
            classes.iter().cloned().collect(),
        ),
    };
    Dataset::from_parts(d, features, labels, feature_names, class_names)
}

/// Scan and encode in one step (single-silo convenience).
pub fn encode_training_data(rows: &Relation, spec: &FeatureSpec) -> Result<Dataset, ModelError> {
    encode_with(rows, &scan_encoding(rows, spec)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use relational_core::parse_schema;

    fn spec() -> FeatureSpec {
        FeatureSpec {
            feature_columns: vec!["sex".into(), "age".into()],
            label_column: "dx".into(),
        }
    }

    fn rel(rows: Vec<Vec<Value>>) -> Relation {
        Relation::from_rows(parse_schema("q(sex:str, age:float, dx:str)").unwrap(), rows).unwrap()
    }

    #[test]
    fn one_hot_vocabulary_is_sorted() {
        let rows = rel(vec![
            vec![
                Value::Str("M".into()),
                Value::Float(70.0),
                Value::Str("CT".into()),
            ],
            vec![
                Value::Str("F".into()),
                Value::Float(64.0),
                Value::Str("AD".into()),
            ],
        ]);
        let data = encode_training_data(&rows, &spec()).unwrap();
        assert_eq!(data.feature_names, vec!["sex=F", "sex=M", "age"]);
        assert_eq!(data.row(0), &[0.0, 1.0, 70.0]);
        assert_eq!(data.row(1), &[1.0, 0.0, 64.0]);
    }

    #[test]
    fn class_indices_follow_sorted_labels() {
        let rows = rel(vec![
            vec![
                Value::Str("F".into()),
                Value::Float(1.0),
                Value::Str("CT".into()),
            ],
            vec![
                Value::Str("F".into()),
                Value::Float(2.0),
                Value::Str("MCI".into()),
            ],
            vec![
                Value::Str("F".into()),
                Value::Float(3.0),
                Value::Str("AD".into()),
            ],
        ]);
        let data = encode_training_data(&rows, &spec()).unwrap();
        assert_eq!(data.class_names, vec!["AD", "CT", "MCI"]);
        assert_eq!(data.labels(), &Labels::Classes(vec![1, 2, 0]));
    }

    #[test]
    fn empty_relation_encodes_to_empty_dataset() {
        let data = encode_training_data(&rel(vec![]), &spec()).unwrap();
        assert_eq!(data.n(), 0);
        assert_eq!(data.d(), 1); // age only: no categories observed
    }

    #[test]
    fn residual_nulls_are_rejected() {
        let rows = rel(vec![vec![
            Value::Str("F".into()),
            Value::Missing,
            Value::Str("CT".into()),
        ]]);
        assert_eq!(
            encode_training_data(&rows, &spec()).unwrap_err(),
            ModelError::ResidualNull {
                column: "age".into(),
                row: 0
            }
        );
    }

    #[test]
    fn merged_encoding_aligns_silos() {
        let rows_a = rel(vec![vec![
            Value::Str("F".into()),
            Value::Float(1.0),
            Value::Str("CT".into()),
        ]]);
        let rows_b = rel(vec![vec![
            Value::Str("M".into()),
            Value::Float(2.0),
            Value::Str("AD".into()),
        ]]);
        let merged = merge_encodings(&[
            scan_encoding(&rows_a, &spec()).unwrap(),
            scan_encoding(&rows_b, &spec()).unwrap(),
        ])
        .unwrap();
        let a = encode_with(&rows_a, &merged).unwrap();
        let b = encode_with(&rows_b, &merged).unwrap();
        assert_eq!(a.feature_names, b.feature_names);
        assert_eq!(a.class_names, b.class_names);
        assert_eq!(a.d(), b.d());
    }

    #[test]
    fn label_outside_the_fixed_vocabulary_is_rejected() {
        let seen = rel(vec![vec![
            Value::Str("F".into()),
            Value::Float(1.0),
            Value::Str("CT".into()),
        ]]);
        let encoding = scan_encoding(&seen, &spec()).unwrap();
        let unseen = rel(vec![vec![
            Value::Str("F".into()),
            Value::Float(2.0),
            Value::Str("HD".into()),
        ]]);
        assert_eq!(
            encode_with(&unseen, &encoding).unwrap_err(),
            ModelError::UnknownLabel("HD".into())
        );
    }

    #[test]
    fn one_hot_is_a_bijection_on_the_vocabulary() {
        let rows = rel(vec![
            vec![
                Value::Str("F".into()),
                Value::Float(1.0),
                Value::Str("CT".into()),
            ],
            vec![
                Value::Str("M".into()),
                Value::Float(2.0),
                Value::Str("AD".into()),
            ],
            vec![
                Value::Str("X".into()),
                Value::Float(3.0),
                Value::Str("AD".into()),
            ],
        ]);
        let data = encode_training_data(&rows, &spec()).unwrap();
        // each row has exactly one hot coordinate among the sex columns, and
        // distinct categories map to distinct coordinates
        let sex_cols: Vec<usize> = data
            .feature_names
            .iter()
            .enumerate()
            .filter(|(_, n)| n.starts_with("sex="))
            .map(|(i, _)| i)
            .collect();
        let mut hot_places = Vec::new();
        for i in 0..data.n() {
            let hots: Vec<usize> = sex_cols
                .iter()
                .copied()
                .filter(|&c| data.row(i)[c] == 1.0)
                .collect();
            assert_eq!(hots.len(), 1);
            hot_places.push(hots[0]);
        }
        hot_places.sort_unstable();
        hot_places.dedup();
        assert_eq!(hot_places.len(), 3);
    }
}
