//! Typed relational values, schemas, relations, and CSV ingestion shared by
//! the integration and learning layers.
//!
//! Relations are immutable after construction and safe to share across
//! threads. The labeled-null counter is the only mutable state and serializes
//! its increments internally.

mod csv_io;
mod nulls;
mod schema;
mod value;

pub use csv_io::{load_csv, write_csv};
pub use nulls::NullCounter;
pub use schema::{parse_schema, Relation, RelationSchema};
pub use value::{ColumnType, Value};

pub use chrono::NaiveDate;

use thiserror::Error;

/// Errors produced by relation construction and CSV ingestion.
#[derive(Debug, Error)]
pub enum RelationalError {
    #[error("header mismatch: expected columns {expected:?}, found {found:?}")]
    HeaderMismatch {
        expected: Vec<String>,
        found: Vec<String>,
    },
    #[error("parse error at row {row}, column '{column}': cannot read '{cell}' as {expected}")]
    ParseError {
        row: usize,
        column: String,
        cell: String,
        expected: ColumnType,
    },
    #[error("row has arity {found}, schema '{relation}' expects {expected}")]
    ArityMismatch {
        relation: String,
        expected: usize,
        found: usize,
    },
    #[error("value {value} does not match type {expected} of column '{column}' in '{relation}'")]
    TypeViolation {
        relation: String,
        column: String,
        expected: ColumnType,
        value: String,
    },
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}
