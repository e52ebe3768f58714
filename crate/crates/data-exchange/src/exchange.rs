use std::collections::{BTreeMap, HashSet};

use mapping_lang::{Atom, MappingProgram, MappingRule, Term};
use relational_core::{ColumnType, NullCounter, Relation, RelationSchema, Value};

use crate::eval::enumerate_bindings;
use crate::registry::FunctionRegistry;
use crate::ExchangeError;

/// How null-like values are treated during materialization and querying.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum QueryMode {
    /// Imputed positions become skolems; answers containing nulls are
    /// discarded (true in all possible worlds).
    CertainAnswers,
    /// Imputed positions are filled by fitted imputers and nulls are
    /// preserved for imputation rather than discarded.
    Impute,
}

/// The materialized global-schema instance of one silo.
#[derive(Debug, Clone)]
pub struct TargetInstance {
    relations: BTreeMap<String, Relation>,
    null_count: u64,
}

impl TargetInstance {
    /// Wrap already-materialized relations. `null_count` must dominate every
    /// labeled-null id appearing in the rows.
    pub fn from_relations(relations: BTreeMap<String, Relation>, null_count: u64) -> Self {
        TargetInstance {
            relations,
            null_count,
        }
    }

    pub fn relation(&self, name: &str) -> Option<&Relation> {
        self.relations.get(name)
    }

    pub fn relations(&self) -> impl Iterator<Item = (&String, &Relation)> {
        self.relations.iter()
    }

    pub fn relation_map(&self) -> &BTreeMap<String, Relation> {
        &self.relations
    }

    /// Number of labeled nulls issued while materializing.
    pub fn null_count(&self) -> u64 {
        self.null_count
    }
}

/// Apply one rule against the sources: for every binding of body variables
/// satisfying the relation atoms (nested-loop join with unification), the
/// interpreted filters, and the function atoms in a safe order, emit one
/// tuple per head atom. Existential variables receive one fresh labeled null
/// per satisfying binding, shared across that binding's head atoms.
pub fn apply_rule(
    rule: &MappingRule,
    sources: &BTreeMap<String, Relation>,
    registry: &FunctionRegistry,
    mode: QueryMode,
    nulls: &NullCounter,
) -> Result<Vec<(String, Vec<Value>)>, ExchangeError> {
    let bindings = enumerate_bindings(&rule.body, sources, registry, mode, nulls)?;
    let existential = rule.existential_vars();

    let mut out = Vec::new();
    for env in bindings {
        let mut fresh: BTreeMap<&str, Value> = BTreeMap::new();
        for var in &existential {
            fresh.insert(var.as_str(), nulls.fresh());
        }
        for atom in &rule.head {
            if let Atom::Rel { name, terms } = atom {
                let tuple: Vec<Value> = terms
                    .iter()
                    .map(|term| match term {
                        Term::Lit(v) => v.clone(),
                        Term::Var(var) => match env.get(var) {
                            Some(bound) => bound.value.clone(),
                            None => fresh.get(var.as_str()).cloned().unwrap_or(Value::Missing),
                        },
                    })
                    .collect();
                out.push((name.clone(), tuple));
            }
        }
    }
    Ok(out)
}

/// Materialize the global schema: the union of `apply_rule` over all rules,
/// deduplicated per relation by exact tuple equality (labeled nulls equal
/// only by id). In impute mode a second pass replaces every remaining
/// null-like cell in a column with a registered imputer by its imputed value,
/// leaving other cells in place.
pub fn materialize(
    program: &MappingProgram,
    sources: &BTreeMap<String, Relation>,
    global: &[RelationSchema],
    registry: &FunctionRegistry,
    mode: QueryMode,
) -> Result<TargetInstance, ExchangeError> {
    let nulls = NullCounter::new();
    let mut buckets: BTreeMap<String, Vec<Vec<Value>>> = BTreeMap::new();
    let mut seen: BTreeMap<String, HashSet<Vec<Value>>> = BTreeMap::new();
    for schema in global {
        buckets.insert(schema.name().to_string(), Vec::new());
        seen.insert(schema.name().to_string(), HashSet::new());
    }

    for rule in &program.rules {
        for (name, tuple) in apply_rule(rule, sources, registry, mode, &nulls)? {
            let schema = global
                .iter()
                .find(|s| s.name() == name)
                .ok_or_else(|| ExchangeError::UnknownRelation(name.clone()))?;
            let tuple = coerce_tuple(tuple, schema);
            if seen.get_mut(&name).unwrap().insert(tuple.clone()) {
                buckets.get_mut(&name).unwrap().push(tuple);
            }
        }
    }

    if mode == QueryMode::Impute {
        for schema in global {
            let rows = buckets.get_mut(schema.name()).unwrap();
            impute_pass(rows, schema, registry)?;
            dedup_rows(rows);
        }
    }

    let mut relations = BTreeMap::new();
    for schema in global {
        let rows = buckets.remove(schema.name()).unwrap();
        relations.insert(
            schema.name().to_string(),
            Relation::from_rows(schema.clone(), rows)?,
        );
    }
    Ok(TargetInstance {
        relations,
        null_count: nulls.issued(),
    })
}

/// Column-level fill: impute null-like cells whose column has a registered
/// imputer, using the rest of the row as the feature assignment. Cells whose
/// imputer cannot run (e.g. ridge with a missing feature) stay in place.
fn impute_pass(
    rows: &mut [Vec<Value>],
    schema: &RelationSchema,
    registry: &FunctionRegistry,
) -> Result<(), ExchangeError> {
    let imputable: Vec<(usize, &str)> = schema
        .columns()
        .iter()
        .enumerate()
        .filter(|(_, (col, _))| registry.column_imputer_name(schema.name(), col).is_some())
        .map(|(i, (col, _))| (i, col.as_str()))
        .collect();
    if imputable.is_empty() {
        return Ok(());
    }

    for row in rows.iter_mut() {
        let features: BTreeMap<String, Value> = schema
            .columns()
            .iter()
            .enumerate()
            .map(|(i, (col, _))| (col.clone(), row[i].clone()))
            .collect();
        for &(idx, col) in &imputable {
            if !row[idx].is_null_like() {
                continue;
            }
            let fitted = registry.column_imputer(schema.name(), col).ok_or_else(|| {
                let name = registry
                    .column_imputer_name(schema.name(), col)
                    .unwrap_or_default()
                    .to_string();
                ExchangeError::ImputerNotFitted(name)
            })?;
            match fitted.impute(&features) {
                Ok(value) => row[idx] = value,
                Err(imputation::ImputeError::MissingFeature(_)) => {}
                Err(e) => return Err(e.into()),
            }
        }
    }
    Ok(())
}

fn dedup_rows(rows: &mut Vec<Vec<Value>>) {
    let mut seen: HashSet<Vec<Value>> = HashSet::with_capacity(rows.len());
    rows.retain(|row| seen.insert(row.clone()));
}

/// Ints flowing into float columns are widened; everything else must already
/// match the declared type (checked again on relation construction).
fn coerce_tuple(tuple: Vec<Value>, schema: &RelationSchema) -> Vec<Value> {
    tuple
        .into_iter()
        .zip(schema.columns())
        .map(|(v, (_, ty))| match (v, ty) {
            (Value::Int(i), ColumnType::Float) => Value::Float(i as f64),
            (v, _) => v,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use mapping_lang::{builtin_signatures, parse_program};
    use relational_core::parse_schema;

    fn sources_of(rels: Vec<Relation>) -> BTreeMap<String, Relation> {
        rels.into_iter()
            .map(|r| (r.schema().name().to_string(), r))
            .collect()
    }

    #[test]
    fn existential_head_gets_fresh_null() {
        let program = parse_program("s(a) -> t(a, z).", &builtin_signatures()).unwrap();
        let s = Relation::from_rows(parse_schema("s(a:int)").unwrap(), vec![vec![Value::Int(1)]])
            .unwrap();
        let nulls = NullCounter::new();
        let out = apply_rule(
            &program.rules[0],
            &sources_of(vec![s]),
            &FunctionRegistry::new(),
            QueryMode::CertainAnswers,
            &nulls,
        )
        .unwrap();
        assert_eq!(
            out,
            vec![("t".to_string(), vec![Value::Int(1), Value::LabeledNull(0)])]
        );
    }

    #[test]
    fn empty_source_emits_nothing() {
        let program = parse_program("s(a) -> t(a).", &builtin_signatures()).unwrap();
        let s = Relation::empty(parse_schema("s(a:int)").unwrap());
        let nulls = NullCounter::new();
        let out = apply_rule(
            &program.rules[0],
            &sources_of(vec![s]),
            &FunctionRegistry::new(),
            QueryMode::CertainAnswers,
            &nulls,
        )
        .unwrap();
        assert!(out.is_empty());
    }

    #[test]
    fn shared_existential_null_across_head_atoms() {
        let program = parse_program("s(a) -> t(a, z) & u(z).", &builtin_signatures()).unwrap();
        let s = Relation::from_rows(
            parse_schema("s(a:int)").unwrap(),
            vec![vec![Value::Int(1)], vec![Value::Int(2)]],
        )
        .unwrap();
        let nulls = NullCounter::new();
        let out = apply_rule(
            &program.rules[0],
            &sources_of(vec![s]),
            &FunctionRegistry::new(),
            QueryMode::CertainAnswers,
            &nulls,
        )
        .unwrap();
        // per binding: one null shared between t and u, fresh across bindings
        assert_eq!(out[0].1[1], out[1].1[0]);
        assert_ne!(out[0].1[1], out[3].1[0]);
    }

    #[test]
    fn duplicate_rows_dedup_under_constant_head() {
        let program = parse_program("s(a) -> t(a).", &builtin_signatures()).unwrap();
        let s = Relation::from_rows(
            parse_schema("s(a:int)").unwrap(),
            vec![vec![Value::Int(5)], vec![Value::Int(5)]],
        )
        .unwrap();
        let global = vec![parse_schema("t(a:int)").unwrap()];
        let instance = materialize(
            &program,
            &sources_of(vec![s]),
            &global,
            &FunctionRegistry::new(),
            QueryMode::CertainAnswers,
        )
        .unwrap();
        assert_eq!(instance.relation("t").unwrap().len(), 1);
    }

    #[test]
    fn no_rules_gives_empty_instance() {
        let program = parse_program("", &builtin_signatures()).unwrap();
        let global = vec![parse_schema("t(a:int)").unwrap()];
        let instance = materialize(
            &program,
            &BTreeMap::new(),
            &global,
            &FunctionRegistry::new(),
            QueryMode::CertainAnswers,
        )
        .unwrap();
        assert_eq!(instance.relation("t").unwrap().len(), 0);
        assert_eq!(instance.null_count(), 0);
    }

    #[test]
    fn impute_mode_requires_fitted_imputers() {
        use imputation::{ColumnRef, ImputerKind, ImputerSpec};
        let mut registry = FunctionRegistry::new();
        registry.add_imputer_spec(
            ImputerSpec::new(
                "m",
                ColumnRef::new("t", "m"),
                relational_core::ColumnType::Float,
                ImputerKind::Mean,
            )
            .unwrap(),
        );
        registry
            .add_impute_function(crate::registry::ImputeFunction {
                name: "impute_m".into(),
                input_names: vec!["a".into()],
                outputs: vec![crate::registry::ImputeOutput {
                    imputer: "m".into(),
                    passthrough: None,
                }],
            })
            .unwrap();
        let program =
            parse_program("s(a) & impute_m(a, m) -> t(a, m).", &registry.signatures()).unwrap();
        let s = Relation::from_rows(
            parse_schema("s(a:float)").unwrap(),
            vec![vec![Value::Float(1.0)]],
        )
        .unwrap();
        let global = vec![parse_schema("t(a:float, m:float)").unwrap()];
        let err = materialize(
            &program,
            &sources_of(vec![s]),
            &global,
            &registry,
            QueryMode::Impute,
        )
        .unwrap_err();
        assert!(matches!(err, crate::ExchangeError::ImputerNotFitted(name) if name == "m"));
    }

    #[test]
    fn filters_run_in_body_order_before_later_functions() {
        // the member filter must exclude "PD" before normalize sees it, or a
        // strict table would error
        let mut registry = FunctionRegistry::new();
        registry.add_normalization(
            "normalize",
            crate::registry::NormalizationTable::new(
                "dx",
                BTreeMap::from([("AD".to_string(), "G30.9".to_string())]),
                true,
            ),
        );
        let program = parse_program(
            r#"s(id, dx) & dx in ["AD"] & normalize(dx, icd10) -> t(id, icd10)."#,
            &registry.signatures(),
        )
        .unwrap();
        let s = Relation::from_rows(
            parse_schema("s(id:int, dx:str)").unwrap(),
            vec![
                vec![Value::Int(1), Value::Str("AD".into())],
                vec![Value::Int(2), Value::Str("PD".into())],
            ],
        )
        .unwrap();
        let global = vec![parse_schema("t(id:int, icd10:str)").unwrap()];
        let instance = materialize(
            &program,
            &sources_of(vec![s]),
            &global,
            &registry,
            QueryMode::CertainAnswers,
        )
        .unwrap();
        assert_eq!(
            instance.relation("t").unwrap().rows(),
            &[vec![Value::Int(1), Value::Str("G30.9".into())]]
        );
    }
}
