use std::collections::BTreeMap;

use mapping_lang::{Atom, CompareOp, Term};
use relational_core::{ColumnType, NaiveDate, NullCounter, Relation, Value};

use crate::exchange::QueryMode;
use crate::registry::FunctionRegistry;
use crate::ExchangeError;

/// A variable binding plus where it came from, so query-time imputation can
/// reconstruct the originating row as a feature assignment.
#[derive(Debug, Clone)]
pub(crate) struct BoundValue {
    pub value: Value,
    /// Set when the binding came from a relation column.
    pub origin: Option<Origin>,
}

#[derive(Debug, Clone)]
pub(crate) struct Origin {
    pub relation: String,
    pub column: String,
    pub row: Vec<Value>,
}

pub(crate) type Env = BTreeMap<String, BoundValue>;

/// Enumerate all bindings of `body` against `relations`: nested-loop join
/// with unification over the relation atoms, then interpreted atoms in body
/// order as soon as their variables are bound. Functions bind their outputs;
/// filters reject bindings. Comparison and membership atoms involving
/// `Missing` or labeled nulls are false, never errors.
pub(crate) fn enumerate_bindings(
    body: &[Atom],
    relations: &BTreeMap<String, Relation>,
    registry: &FunctionRegistry,
    mode: QueryMode,
    nulls: &NullCounter,
) -> Result<Vec<Env>, ExchangeError> {
    let rel_atoms: Vec<&Atom> = body
        .iter()
        .filter(|a| matches!(a, Atom::Rel { .. }))
        .collect();
    let interpreted: Vec<&Atom> = body
        .iter()
        .filter(|a| !matches!(a, Atom::Rel { .. }))
        .collect();

    let mut results = Vec::new();
    join_rels(&rel_atoms, relations, Env::new(), &mut |env| {
        if let Some(env) = apply_interpreted(&interpreted, env, registry, mode, nulls)? {
            results.push(env);
        }
        Ok(())
    })?;
    Ok(results)
}

fn join_rels(
    atoms: &[&Atom],
    relations: &BTreeMap<String, Relation>,
    env: Env,
    emit: &mut dyn FnMut(Env) -> Result<(), ExchangeError>,
) -> Result<(), ExchangeError> {
    let (atom, rest) = match atoms.split_first() {
        Some(split) => split,
        None => return emit(env),
    };
    let (name, terms) = match atom {
        Atom::Rel { name, terms } => (name, terms),
        _ => unreachable!("join_rels only sees relation atoms"),
    };
    let relation = relations
        .get(name)
        .ok_or_else(|| ExchangeError::UnknownRelation(name.clone()))?;

    'rows: for row in relation.rows() {
        let mut extended = env.clone();
        for (position, term) in terms.iter().enumerate() {
            let cell = &row[position];
            match term {
                Term::Lit(lit) => {
                    if !cell.unifies_with(lit) {
                        continue 'rows;
                    }
                }
                Term::Var(var) => match extended.get(var) {
                    Some(bound) => {
                        if !cell.unifies_with(&bound.value) {
                            continue 'rows;
                        }
                    }
                    None => {
                        let column = relation.schema().columns()[position].0.clone();
                        extended.insert(
                            var.clone(),
                            BoundValue {
                                value: cell.clone(),
                                origin: Some(Origin {
                                    relation: name.clone(),
                                    column,
                                    row: row.clone(),
                                }),
                            },
                        );
                    }
                },
            }
        }
        join_rels(rest, relations, extended, emit)?;
    }
    Ok(())
}

/// Run functions and filters in body order, deferring any atom whose
/// variables are not yet bound (function outputs may unlock later filters).
/// Returns the extended environment, or `None` when a filter rejects it.
fn apply_interpreted(
    atoms: &[&Atom],
    mut env: Env,
    registry: &FunctionRegistry,
    mode: QueryMode,
    nulls: &NullCounter,
) -> Result<Option<Env>, ExchangeError> {
    let mut pending: Vec<&Atom> = atoms.to_vec();
    while !pending.is_empty() {
        let ready = pending.iter().position(|atom| match atom {
            Atom::Func { inputs, .. } => inputs
                .iter()
                .all(|t| t.var_name().map(|v| env.contains_key(v)).unwrap_or(true)),
            other => other.vars().iter().all(|v| env.contains_key(v)),
        });
        let index = match ready {
            Some(i) => i,
            None => {
                return Err(ExchangeError::UnsafeBody(format!(
                    "no evaluation order for {pending:?}"
                )))
            }
        };
        let atom = pending.remove(index);
        match atom {
            Atom::Func {
                name,
                inputs,
                outputs,
            } => {
                let input_values: Vec<Value> = inputs.iter().map(|t| resolve(t, &env)).collect();
                let produced = eval_function(name, &input_values, registry, mode, nulls)?;
                debug_assert_eq!(produced.len(), outputs.len());
                for (term, value) in outputs.iter().zip(produced) {
                    if let Term::Var(var) = term {
                        match env.get(var) {
                            Some(bound) => {
                                if !bound.value.unifies_with(&value) {
                                    return Ok(None);
                                }
                            }
                            None => {
                                // function outputs have no relational origin
                                env.insert(
                                    var.clone(),
                                    BoundValue {
                                        value,
                                        origin: None,
                                    },
                                );
                            }
                        }
                    }
                }
            }
            Atom::Compare { lhs, op, rhs } => {
                if !compare_values(*op, &resolve(lhs, &env), &resolve(rhs, &env)) {
                    return Ok(None);
                }
            }
            Atom::AbsDiff { a, b, op, bound } => {
                let diff = match abs_diff(&resolve(a, &env), &resolve(b, &env)) {
                    Some(d) => d,
                    None => return Ok(None),
                };
                if !compare_values(*op, &Value::Float(diff), bound) {
                    return Ok(None);
                }
            }
            Atom::Member { term, set } => {
                let value = resolve(term, &env);
                if !set.iter().any(|lit| value.unifies_with(lit)) {
                    return Ok(None);
                }
            }
            Atom::Rel { .. } => unreachable!(),
        }
    }
    Ok(Some(env))
}

fn resolve(term: &Term, env: &Env) -> Value {
    match term {
        Term::Lit(v) => v.clone(),
        Term::Var(v) => env
            .get(v)
            .map(|b| b.value.clone())
            .unwrap_or(Value::Missing),
    }
}

/// Static output types of a function, used to type query answers.
pub(crate) fn function_output_types(
    name: &str,
    registry: &FunctionRegistry,
) -> Option<Vec<ColumnType>> {
    if name == "minus" {
        return Some(vec![ColumnType::Float]);
    }
    if registry.normalize_table(name).is_some() {
        return Some(vec![ColumnType::Str]);
    }
    if let Some(function) = registry.impute_function(name) {
        let types = function
            .outputs
            .iter()
            .map(|o| {
                registry
                    .imputer_spec(&o.imputer)
                    .map(|s| s.target_type)
                    .unwrap_or(ColumnType::Str)
            })
            .collect();
        return Some(types);
    }
    None
}

fn eval_function(
    name: &str,
    inputs: &[Value],
    registry: &FunctionRegistry,
    mode: QueryMode,
    nulls: &NullCounter,
) -> Result<Vec<Value>, ExchangeError> {
    if name == "minus" {
        return Ok(vec![minus(name, inputs)?]);
    }
    if let Some(table) = registry.normalize_table(name) {
        let input = inputs.first().ok_or_else(|| ExchangeError::FunctionType {
            function: name.to_string(),
            message: "normalize takes one input".into(),
        })?;
        let out = match input {
            Value::Str(s) => table.lookup(s)?,
            Value::Missing | Value::LabeledNull(_) => Value::Missing,
            other => {
                return Err(ExchangeError::FunctionType {
                    function: name.to_string(),
                    message: format!("cannot normalize non-string value {other}"),
                })
            }
        };
        return Ok(vec![out]);
    }
    if let Some(function) = registry.impute_function(name) {
        return eval_impute(function, inputs, registry, mode, nulls);
    }
    Err(ExchangeError::UnknownFunction(name.to_string()))
}

fn eval_impute(
    function: &crate::registry::ImputeFunction,
    inputs: &[Value],
    registry: &FunctionRegistry,
    mode: QueryMode,
    nulls: &NullCounter,
) -> Result<Vec<Value>, ExchangeError> {
    if mode == QueryMode::CertainAnswers {
        // the traditional reading: imputed positions are existential and
        // become skolems, later discarded by certain-answers filtering
        return Ok(function.outputs.iter().map(|_| nulls.fresh()).collect());
    }
    let features: BTreeMap<String, Value> = function
        .input_names
        .iter()
        .cloned()
        .zip(inputs.iter().cloned())
        .collect();
    let mut out = Vec::with_capacity(function.outputs.len());
    for output in &function.outputs {
        if let Some(passthrough) = &output.passthrough {
            // an unbound passthrough (arity mismatch in an unvalidated
            // program) falls through to the imputer
            if let Some(value) = features.get(passthrough) {
                if !value.is_null_like() {
                    out.push(value.clone());
                    continue;
                }
            }
        }
        let fitted = registry.fitted(&output.imputer)?;
        match fitted.impute(&features) {
            Ok(value) => out.push(value),
            // unimputable under missing features; the column-level pass may
            // still fill it
            Err(imputation::ImputeError::MissingFeature(_)) => out.push(Value::Missing),
            Err(e) => return Err(e.into()),
        }
    }
    Ok(out)
}

fn minus(name: &str, inputs: &[Value]) -> Result<Value, ExchangeError> {
    if inputs.len() != 2 {
        return Err(ExchangeError::FunctionType {
            function: name.to_string(),
            message: format!("minus takes two inputs, got {}", inputs.len()),
        });
    }
    if inputs.iter().any(Value::is_null_like) {
        return Ok(Value::Missing);
    }
    match (&inputs[0], &inputs[1]) {
        (Value::Date(a), Value::Date(b)) => Ok(Value::Float(whole_years_between(*a, *b))),
        (a, b) => match (a.as_f64(), b.as_f64()) {
            (Some(x), Some(y)) => Ok(Value::Float(x - y)),
            _ => Err(ExchangeError::FunctionType {
                function: name.to_string(),
                message: format!("cannot subtract {b} from {a}"),
            }),
        },
    }
}

/// Whole calendar years between two dates (symmetric), so that an anniversary
/// date yields the exact year count; used for age-at-visit.
fn whole_years_between(a: NaiveDate, b: NaiveDate) -> f64 {
    let (earlier, later) = if a <= b { (a, b) } else { (b, a) };
    later.years_since(earlier).unwrap_or(0) as f64
}

fn abs_diff(a: &Value, b: &Value) -> Option<f64> {
    match (a, b) {
        (Value::Date(da), Value::Date(db)) => Some((*da - *db).num_days().abs() as f64),
        (a, b) => match (a.as_f64(), b.as_f64()) {
            (Some(x), Some(y)) => Some((x - y).abs()),
            _ => None,
        },
    }
}

/// Comparison semantics for interpreted atoms: null-likes and mixed
/// incomparable types yield false.
pub(crate) fn compare_values(op: CompareOp, a: &Value, b: &Value) -> bool {
    use std::cmp::Ordering;
    let ordering = match (a, b) {
        (Value::Missing | Value::LabeledNull(_), _)
        | (_, Value::Missing | Value::LabeledNull(_)) => return false,
        (Value::Str(x), Value::Str(y)) => x.cmp(y),
        (Value::Date(x), Value::Date(y)) => x.cmp(y),
        (a, b) => match (a.as_f64(), b.as_f64()) {
            (Some(x), Some(y)) => match x.partial_cmp(&y) {
                Some(o) => o,
                None => return false,
            },
            _ => return false,
        },
    };
    match op {
        CompareOp::Lt => ordering == Ordering::Less,
        CompareOp::Le => ordering != Ordering::Greater,
        CompareOp::Gt => ordering == Ordering::Greater,
        CompareOp::Ge => ordering != Ordering::Less,
        CompareOp::Eq => ordering == Ordering::Equal,
        CompareOp::Ne => ordering != Ordering::Equal,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn anniversary_dates_give_whole_years() {
        let dob = NaiveDate::from_ymd_opt(1950, 1, 10).unwrap();
        let visit = NaiveDate::from_ymd_opt(2020, 1, 10).unwrap();
        assert_eq!(whole_years_between(dob, visit), 70.0);
        // symmetric
        assert_eq!(whole_years_between(visit, dob), 70.0);
        // one day before the anniversary the year has not completed
        let almost = NaiveDate::from_ymd_opt(2020, 1, 9).unwrap();
        assert_eq!(whole_years_between(dob, almost), 69.0);
    }

    #[test]
    fn minus_propagates_missing() {
        assert_eq!(
            minus("minus", &[Value::Missing, Value::Int(1)]).unwrap(),
            Value::Missing
        );
        assert_eq!(
            minus("minus", &[Value::LabeledNull(4), Value::Int(1)]).unwrap(),
            Value::Missing
        );
    }

    #[test]
    fn comparisons_with_nulls_are_false() {
        assert!(!compare_values(
            CompareOp::Eq,
            &Value::Missing,
            &Value::Missing
        ));
        assert!(!compare_values(
            CompareOp::Lt,
            &Value::LabeledNull(0),
            &Value::Int(10)
        ));
        assert!(compare_values(
            CompareOp::Lt,
            &Value::Int(1),
            &Value::Float(1.5)
        ));
    }

    #[test]
    fn date_abs_diff_counts_days() {
        let a = Value::Date(NaiveDate::from_ymd_opt(2020, 1, 10).unwrap());
        let b = Value::Date(NaiveDate::from_ymd_opt(2020, 2, 20).unwrap());
        assert_eq!(abs_diff(&a, &b), Some(41.0));
        assert_eq!(abs_diff(&b, &a), Some(41.0));
    }
}
