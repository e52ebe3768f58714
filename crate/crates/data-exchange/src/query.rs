use std::collections::BTreeMap;

use mapping_lang::{Atom, QueryDef};
use relational_core::{ColumnType, NullCounter, Relation, RelationSchema, Value};

use crate::eval::{enumerate_bindings, function_output_types};
use crate::exchange::{QueryMode, TargetInstance};
use crate::registry::FunctionRegistry;
use crate::ExchangeError;

/// Evaluate a conjunctive query over a materialized instance. Labeled nulls
/// join only with the identical null id and comparisons involving null-likes
/// are false. In certain-answers mode every answer tuple containing a
/// null-like value is discarded; in impute mode, null answer cells whose
/// originating column has a fitted imputer are imputed, and tuples that still
/// contain null-likes afterwards are discarded. Output column order follows
/// the query head.
pub fn evaluate_query(
    query: &QueryDef,
    instance: &TargetInstance,
    mode: QueryMode,
    registry: &FunctionRegistry,
) -> Result<Relation, ExchangeError> {
    // continue the id space of the instance so query-time skolems never
    // collide with materialized ones
    let nulls = NullCounter::starting_at(instance.null_count());
    let bindings =
        enumerate_bindings(&query.body, instance.relation_map(), registry, mode, &nulls)?;

    let schema = answer_schema(query, instance, registry)?;
    let mut relation = Relation::empty(schema);
    'answers: for env in &bindings {
        let mut row = Vec::with_capacity(query.head_vars.len());
        let mut origins = Vec::with_capacity(query.head_vars.len());
        for var in &query.head_vars {
            let bound = env.get(var).ok_or_else(|| {
                ExchangeError::UnsafeBody(format!("head variable '{var}' unbound"))
            })?;
            row.push(bound.value.clone());
            origins.push(bound.origin.clone());
        }
        match mode {
            QueryMode::CertainAnswers => {
                if row.iter().any(Value::is_null_like) {
                    continue 'answers;
                }
            }
            QueryMode::Impute => {
                impute_answer_cells(&mut row, &origins, instance, registry)?;
                if row.iter().any(Value::is_null_like) {
                    continue 'answers;
                }
            }
        }
        relation.push_row(coerce_row(row, relation.schema().clone()))?;
    }
    Ok(relation)
}

/// Fill null-like answer cells from the column imputer of the cell's
/// originating relation column, using that whole row (named by the
/// relation's schema) as the feature assignment.
fn impute_answer_cells(
    row: &mut [Value],
    origins: &[Option<crate::eval::Origin>],
    instance: &TargetInstance,
    registry: &FunctionRegistry,
) -> Result<(), ExchangeError> {
    for (cell, origin) in row.iter_mut().zip(origins) {
        if !cell.is_null_like() {
            continue;
        }
        let origin = match origin {
            Some(o) => o,
            None => continue,
        };
        let fitted = match registry.column_imputer(&origin.relation, &origin.column) {
            Some(f) => f,
            None => continue,
        };
        let schema = match instance.relation(&origin.relation) {
            Some(r) => r.schema(),
            None => continue,
        };
        let features: BTreeMap<String, Value> = schema
            .column_names()
            .into_iter()
            .zip(origin.row.iter().cloned())
            .collect();
        match fitted.impute(&features) {
            Ok(value) => *cell = value,
            Err(imputation::ImputeError::MissingFeature(_)) => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(())
}

/// Resolve the answer schema statically: a head variable takes the type of
/// the first relation column or function output that binds it.
fn answer_schema(
    query: &QueryDef,
    instance: &TargetInstance,
    registry: &FunctionRegistry,
) -> Result<RelationSchema, ExchangeError> {
    let mut columns = Vec::with_capacity(query.head_vars.len());
    for var in &query.head_vars {
        let ty = head_var_type(var, query, instance, registry).unwrap_or(ColumnType::Str);
        columns.push((var.clone(), ty));
    }
    RelationSchema::new(query.name.clone(), columns).map_err(ExchangeError::from)
}

fn head_var_type(
    var: &str,
    query: &QueryDef,
    instance: &TargetInstance,
    registry: &FunctionRegistry,
) -> Option<ColumnType> {
    for atom in &query.body {
        match atom {
            Atom::Rel { name, terms } => {
                if let Some(position) = terms.iter().position(|t| t.var_name() == Some(var)) {
                    let relation = instance.relation(name)?;
                    return Some(relation.schema().columns()[position].1);
                }
            }
            Atom::Func { name, outputs, .. } => {
                if let Some(position) = outputs.iter().position(|t| t.var_name() == Some(var)) {
                    return function_output_types(name, registry)
                        .and_then(|types| types.get(position).copied());
                }
            }
            _ => {}
        }
    }
    None
}

fn coerce_row(row: Vec<Value>, schema: RelationSchema) -> Vec<Value> {
    row.into_iter()
        .zip(schema.columns())
        .map(|(v, (_, ty))| match (v, ty) {
            (Value::Int(i), ColumnType::Float) => Value::Float(i as f64),
            (v, _) => v,
        })
        .collect()
}
