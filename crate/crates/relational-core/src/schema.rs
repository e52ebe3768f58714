use crate::{ColumnType, RelationalError, Value};

/// Named, ordered column layout of a relation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelationSchema {
    name: String,
    columns: Vec<(String, ColumnType)>,
}

impl RelationSchema {
    pub fn new(
        name: impl Into<String>,
        columns: Vec<(String, ColumnType)>,
    ) -> Result<Self, RelationalError> {
        let name = name.into();
        if name.is_empty() {
            return Err(RelationalError::InvalidSchema(
                "relation name must be nonempty".into(),
            ));
        }
        for (i, (col, _)) in columns.iter().enumerate() {
            if columns[..i].iter().any(|(c, _)| c == col) {
                return Err(RelationalError::InvalidSchema(format!(
                    "duplicate column '{col}' in relation '{name}'"
                )));
            }
        }
        Ok(RelationSchema { name, columns })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn columns(&self) -> &[(String, ColumnType)] {
        &self.columns
    }

    pub fn arity(&self) -> usize {
        self.columns.len()
    }

    pub fn column_names(&self) -> Vec<String> {
        self.columns.iter().map(|(c, _)| c.clone()).collect()
    }

    pub fn column_index(&self, column: &str) -> Option<usize> {
        self.columns.iter().position(|(c, _)| c == column)
    }

    pub fn column_type(&self, column: &str) -> Option<ColumnType> {
        self.columns
            .iter()
            .find(|(c, _)| c == column)
            .map(|(_, t)| *t)
    }
}

/// Parse a compact schema literal like `clinical(id:int, visit:date, age:float)`.
pub fn parse_schema(text: &str) -> Result<RelationSchema, RelationalError> {
    let text = text.trim();
    let open = text
        .find('(')
        .ok_or_else(|| RelationalError::InvalidSchema(format!("missing '(' in '{text}'")))?;
    if !text.ends_with(')') {
        return Err(RelationalError::InvalidSchema(format!(
            "missing ')' in '{text}'"
        )));
    }
    let name = text[..open].trim().to_string();
    let inner = &text[open + 1..text.len() - 1];
    let mut columns = Vec::new();
    for part in inner.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let (col, ty) = part.split_once(':').ok_or_else(|| {
            RelationalError::InvalidSchema(format!("column '{part}' must be name:type"))
        })?;
        let ty = ColumnType::parse_name(ty.trim()).ok_or_else(|| {
            RelationalError::InvalidSchema(format!("unknown type '{}' in '{part}'", ty.trim()))
        })?;
        columns.push((col.trim().to_string(), ty));
    }
    RelationSchema::new(name, columns)
}

/// A schema plus an ordered multiset of rows.
///
/// Every row has the schema's arity and every non-null-like value matches its
/// column's declared type (checked on insertion).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Relation {
    schema: RelationSchema,
    rows: Vec<Vec<Value>>,
}

impl Relation {
    pub fn empty(schema: RelationSchema) -> Self {
        Relation {
            schema,
            rows: Vec::new(),
        }
    }

    pub fn from_rows(
        schema: RelationSchema,
        rows: Vec<Vec<Value>>,
    ) -> Result<Self, RelationalError> {
        let mut rel = Relation::empty(schema);
        for row in rows {
            rel.push_row(row)?;
        }
        Ok(rel)
    }

    pub fn push_row(&mut self, row: Vec<Value>) -> Result<(), RelationalError> {
        if row.len() != self.schema.arity() {
            return Err(RelationalError::ArityMismatch {
                relation: self.schema.name().to_string(),
                expected: self.schema.arity(),
                found: row.len(),
            });
        }
        for (value, (col, ty)) in row.iter().zip(self.schema.columns()) {
            if !value.matches_type(*ty) {
                return Err(RelationalError::TypeViolation {
                    relation: self.schema.name().to_string(),
                    column: col.clone(),
                    expected: *ty,
                    value: value.to_string(),
                });
            }
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn schema(&self) -> &RelationSchema {
        &self.schema
    }

    pub fn rows(&self) -> &[Vec<Value>] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Values of one column, in row order.
    pub fn column(&self, column: &str) -> Option<Vec<Value>> {
        let idx = self.schema.column_index(column)?;
        Some(self.rows.iter().map(|r| r[idx].clone()).collect())
    }
}
