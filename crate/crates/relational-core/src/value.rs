use std::fmt;
use std::hash::{Hash, Hasher};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

/// Column types a relation schema can declare.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnType {
    Int,
    Float,
    Str,
    Date,
}

impl fmt::Display for ColumnType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ColumnType::Int => write!(f, "int"),
            ColumnType::Float => write!(f, "float"),
            ColumnType::Str => write!(f, "str"),
            ColumnType::Date => write!(f, "date"),
        }
    }
}

impl ColumnType {
    pub fn parse_name(s: &str) -> Option<ColumnType> {
        match s {
            "int" => Some(ColumnType::Int),
            "float" => Some(ColumnType::Float),
            "str" => Some(ColumnType::Str),
            "date" => Some(ColumnType::Date),
            _ => None,
        }
    }
}

/// A single relational value.
///
/// `Missing` marks a value absent in the source data; `LabeledNull` is a
/// skolem generated for an existential variable during data exchange. The two
/// are deliberately distinct variants: source missings are filled by column
/// imputers, skolems by the query-time imputation hook.
///
/// Two equality notions apply:
/// - [`PartialEq`]/[`Eq`]/[`Hash`] are *storage* equality, used for
///   deduplication and multiset comparison. Floats compare by bit pattern and
///   `Missing == Missing` holds structurally.
/// - [`Value::unifies_with`] is *semantic* equality, used by join
///   unification: labeled nulls are equal iff their ids are equal, and
///   `Missing` never equals anything, including itself.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum Value {
    Int(i64),
    Float(f64),
    Str(String),
    Date(NaiveDate),
    Missing,
    LabeledNull(u64),
}

impl Value {
    /// Semantic equality for joins and comparisons.
    pub fn unifies_with(&self, other: &Value) -> bool {
        match (self, other) {
            (Value::Missing, _) | (_, Value::Missing) => false,
            (Value::LabeledNull(a), Value::LabeledNull(b)) => a == b,
            (Value::LabeledNull(_), _) | (_, Value::LabeledNull(_)) => false,
            (Value::Int(a), Value::Int(b)) => a == b,
            (Value::Float(a), Value::Float(b)) => a == b,
            (Value::Int(a), Value::Float(b)) | (Value::Float(b), Value::Int(a)) => *a as f64 == *b,
            (Value::Str(a), Value::Str(b)) => a == b,
            (Value::Date(a), Value::Date(b)) => a == b,
            _ => false,
        }
    }

    pub fn is_missing(&self) -> bool {
        matches!(self, Value::Missing)
    }

    pub fn is_labeled_null(&self) -> bool {
        matches!(self, Value::LabeledNull(_))
    }

    /// True for `Missing` or `LabeledNull`.
    pub fn is_null_like(&self) -> bool {
        matches!(self, Value::Missing | Value::LabeledNull(_))
    }

    /// Numeric view for `Int` and `Float` values.
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Int(i) => Some(*i as f64),
            Value::Float(f) => Some(*f),
            _ => None,
        }
    }

    /// True when the value may be stored in a column of type `ty`.
    /// `Missing` and `LabeledNull` are storable in any column.
    pub fn matches_type(&self, ty: ColumnType) -> bool {
        match (self, ty) {
            (Value::Missing | Value::LabeledNull(_), _) => true,
            (Value::Int(_), ColumnType::Int) => true,
            (Value::Float(_), ColumnType::Float) => true,
            (Value::Str(_), ColumnType::Str) => true,
            (Value::Date(_), ColumnType::Date) => true,
            _ => false,
        }
    }

    /// Parse a cell per column type. Used by the CSV reader.
    pub fn parse_cell(cell: &str, ty: ColumnType) -> Option<Value> {
        match ty {
            ColumnType::Int => cell.trim().parse::<i64>().ok().map(Value::Int),
            ColumnType::Float => cell.trim().parse::<f64>().ok().map(Value::Float),
            ColumnType::Str => Some(Value::Str(cell.to_string())),
            ColumnType::Date => NaiveDate::parse_from_str(cell.trim(), "%Y-%m-%d")
                .ok()
                .map(Value::Date),
        }
    }
}

impl PartialEq for Value {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Value::Int(a), Value::Int(b)) => a == b,
            (Value::Float(a), Value::Float(b)) => a.to_bits() == b.to_bits(),
            (Value::Str(a), Value::Str(b)) => a == b,
            (Value::Date(a), Value::Date(b)) => a == b,
            (Value::Missing, Value::Missing) => true,
            (Value::LabeledNull(a), Value::LabeledNull(b)) => a == b,
            _ => false,
        }
    }
}

impl Eq for Value {}

impl Hash for Value {
    fn hash<H: Hasher>(&self, state: &mut H) {
        match self {
            Value::Int(i) => {
                0u8.hash(state);
                i.hash(state);
            }
            Value::Float(f) => {
                1u8.hash(state);
                f.to_bits().hash(state);
            }
            Value::Str(s) => {
                2u8.hash(state);
                s.hash(state);
            }
            Value::Date(d) => {
                3u8.hash(state);
                d.hash(state);
            }
            Value::Missing => 4u8.hash(state),
            Value::LabeledNull(id) => {
                5u8.hash(state);
                id.hash(state);
            }
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(i) => write!(f, "{i}"),
            Value::Float(v) => write!(f, "{v:?}"),
            Value::Str(s) => write!(f, "{s}"),
            Value::Date(d) => write!(f, "{}", d.format("%Y-%m-%d")),
            Value::Missing => write!(f, ""),
            Value::LabeledNull(id) => write!(f, "_N{id}"),
        }
    }
}
