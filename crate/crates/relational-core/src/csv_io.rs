//! RFC-4180-style CSV ingestion and export. Header row required, UTF-8,
//! configurable null token (default empty string), dates as YYYY-MM-DD.

use std::path::Path;

use crate::{Relation, RelationSchema, RelationalError, Value};

/// Load a CSV file against a declared schema.
///
/// Cells equal to `null_token` become [`Value::Missing`]; everything else is
/// parsed per the column's declared type. The header row must match the
/// schema's column names in order.
pub fn load_csv(
    path: impl AsRef<Path>,
    schema: &RelationSchema,
    null_token: &str,
) -> Result<Relation, RelationalError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_path(path.as_ref())?;

    let header: Vec<String> = reader
        .headers()?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let expected = schema.column_names();
    if header != expected {
        return Err(RelationalError::HeaderMismatch {
            expected,
            found: header,
        });
    }

    let mut relation = Relation::empty(schema.clone());
    for (row_idx, record) in reader.records().enumerate() {
        let record = record?;
        let mut row = Vec::with_capacity(schema.arity());
        for (cell, (col, ty)) in record.iter().zip(schema.columns()) {
            if cell == null_token {
                row.push(Value::Missing);
                continue;
            }
            match Value::parse_cell(cell, *ty) {
                Some(v) => row.push(v),
                None => {
                    return Err(RelationalError::ParseError {
                        row: row_idx + 1,
                        column: col.clone(),
                        cell: cell.to_string(),
                        expected: *ty,
                    })
                }
            }
        }
        relation.push_row(row)?;
    }
    Ok(relation)
}

/// Write a relation as CSV. `Missing` serializes as the null token and
/// labeled nulls as `_N<id>`.
pub fn write_csv(
    relation: &Relation,
    path: impl AsRef<Path>,
    null_token: &str,
) -> Result<(), RelationalError> {
    let mut writer = csv::Writer::from_path(path.as_ref())?;
    writer.write_record(relation.schema().column_names())?;
    for row in relation.rows() {
        let record: Vec<String> = row
            .iter()
            .map(|v| match v {
                Value::Missing => null_token.to_string(),
                other => other.to_string(),
            })
            .collect();
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}
