use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use relational_core::RelationSchema;
use thiserror::Error;

use crate::ast::{Atom, MappingProgram, MappingRule, QueryDef, Term};

/// A finding produced by static validation. All findings are collected into
/// the report; none aborts validation.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum ValidationError {
    #[error("'{name}' is neither a source relation nor a declared function")]
    UnknownFunction { name: String },
    #[error("'{name}' is neither a global relation nor a declared function")]
    UnknownRelation { name: String },
    #[error("head relation '{name}' is not in the global schema")]
    HeadNotInGlobalSchema { name: String },
    #[error("'{name}' used with arity {found}, schema declares {expected}")]
    ArityMismatch {
        name: String,
        expected: usize,
        found: usize,
    },
    #[error(
        "function '{name}' takes {expected_in} inputs and {expected_out} outputs, found {found} terms"
    )]
    FunctionArityMismatch {
        name: String,
        expected_in: usize,
        expected_out: usize,
        found: usize,
    },
    #[error("output of function '{name}' must be a variable")]
    FunctionOutputNotVariable { name: String },
    #[error("input '{variable}' of function '{function}' is never bound")]
    UnsafeFunctionInput { function: String, variable: String },
    #[error("variable '{variable}' in an interpreted atom is never bound")]
    UnboundComparisonVariable { variable: String },
    #[error("head variable '{variable}' of query '{query}' is not bound in the body")]
    UnboundHeadVariable { query: String, variable: String },
    #[error("duplicate query name '{name}'")]
    DuplicateQueryName { name: String },
}

#[derive(Debug, Clone, Default)]
pub struct RuleReport {
    pub index: usize,
    pub errors: Vec<ValidationError>,
    /// Informational: head variables bound nowhere in the body. These become
    /// labeled nulls at exchange time and are not errors.
    pub existential_vars: BTreeSet<String>,
}

#[derive(Debug, Clone, Default)]
pub struct QueryReport {
    pub name: String,
    pub errors: Vec<ValidationError>,
}

#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub rules: Vec<RuleReport>,
    pub queries: Vec<QueryReport>,
    pub program_errors: Vec<ValidationError>,
}

impl ValidationReport {
    /// Empty error list iff the program is executable.
    pub fn is_ok(&self) -> bool {
        self.error_count() == 0
    }

    pub fn error_count(&self) -> usize {
        self.program_errors.len()
            + self.rules.iter().map(|r| r.errors.len()).sum::<usize>()
            + self.queries.iter().map(|q| q.errors.len()).sum::<usize>()
    }

    pub fn all_errors(&self) -> Vec<&ValidationError> {
        self.program_errors
            .iter()
            .chain(self.rules.iter().flat_map(|r| r.errors.iter()))
            .chain(self.queries.iter().flat_map(|q| q.errors.iter()))
            .collect()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for err in &self.program_errors {
            writeln!(f, "program: error: {err}")?;
        }
        for rule in &self.rules {
            let existential: Vec<&str> = rule.existential_vars.iter().map(|s| s.as_str()).collect();
            writeln!(
                f,
                "rule {}: {} error(s), existential vars {{{}}}",
                rule.index + 1,
                rule.errors.len(),
                existential.join(", ")
            )?;
            for err in &rule.errors {
                writeln!(f, "  error: {err}")?;
            }
        }
        for query in &self.queries {
            writeln!(f, "query {}: {} error(s)", query.name, query.errors.len())?;
            for err in &query.errors {
                writeln!(f, "  error: {err}")?;
            }
        }
        Ok(())
    }
}

/// Validate a parsed program against source schemas (rule bodies) and the
/// global schema (rule heads and query bodies).
pub fn validate_program(
    program: &MappingProgram,
    sources: &[RelationSchema],
    global: &[RelationSchema],
) -> ValidationReport {
    let source_arity: BTreeMap<&str, usize> =
        sources.iter().map(|s| (s.name(), s.arity())).collect();
    let global_arity: BTreeMap<&str, usize> =
        global.iter().map(|s| (s.name(), s.arity())).collect();

    let mut report = ValidationReport::default();

    let mut seen_queries = BTreeSet::new();
    for query in &program.queries {
        if !seen_queries.insert(query.name.clone()) {
            report
                .program_errors
                .push(ValidationError::DuplicateQueryName {
                    name: query.name.clone(),
                });
        }
    }

    for (index, rule) in program.rules.iter().enumerate() {
        report.rules.push(check_rule(
            index,
            rule,
            &source_arity,
            &global_arity,
            program,
        ));
    }
    for query in &program.queries {
        report
            .queries
            .push(check_query(query, &global_arity, program));
    }
    report
}

fn check_rule(
    index: usize,
    rule: &MappingRule,
    source_arity: &BTreeMap<&str, usize>,
    global_arity: &BTreeMap<&str, usize>,
    program: &MappingProgram,
) -> RuleReport {
    let mut errors = Vec::new();

    for atom in &rule.body {
        if let Atom::Rel { name, terms } = atom {
            match source_arity.get(name.as_str()) {
                Some(&arity) if arity != terms.len() => {
                    errors.push(ValidationError::ArityMismatch {
                        name: name.clone(),
                        expected: arity,
                        found: terms.len(),
                    })
                }
                Some(_) => {}
                None => errors.push(ValidationError::UnknownFunction { name: name.clone() }),
            }
        }
    }
    errors.extend(check_functions(&rule.body, program));
    errors.extend(check_body_safety(&rule.body));

    for atom in &rule.head {
        if let Atom::Rel { name, terms } = atom {
            match global_arity.get(name.as_str()) {
                Some(&arity) if arity != terms.len() => {
                    errors.push(ValidationError::ArityMismatch {
                        name: name.clone(),
                        expected: arity,
                        found: terms.len(),
                    })
                }
                Some(_) => {}
                None => errors.push(ValidationError::HeadNotInGlobalSchema { name: name.clone() }),
            }
        }
    }

    RuleReport {
        index,
        errors,
        existential_vars: rule.existential_vars(),
    }
}

fn check_query(
    query: &QueryDef,
    global_arity: &BTreeMap<&str, usize>,
    program: &MappingProgram,
) -> QueryReport {
    let mut errors = Vec::new();

    for atom in &query.body {
        if let Atom::Rel { name, terms } = atom {
            match global_arity.get(name.as_str()) {
                Some(&arity) if arity != terms.len() => {
                    errors.push(ValidationError::ArityMismatch {
                        name: name.clone(),
                        expected: arity,
                        found: terms.len(),
                    })
                }
                Some(_) => {}
                None => errors.push(ValidationError::UnknownRelation { name: name.clone() }),
            }
        }
    }
    errors.extend(check_functions(&query.body, program));
    let bound = errors_and_bound(&query.body, &mut errors);

    for var in &query.head_vars {
        if !bound.contains(var) {
            errors.push(ValidationError::UnboundHeadVariable {
                query: query.name.clone(),
                variable: var.clone(),
            });
        }
    }

    QueryReport {
        name: query.name.clone(),
        errors,
    }
}

fn check_functions(body: &[Atom], program: &MappingProgram) -> Vec<ValidationError> {
    let mut errors = Vec::new();
    for atom in body {
        if let Atom::Func {
            name,
            inputs,
            outputs,
        } = atom
        {
            // names become Func only when declared, so the signature exists
            if let Some(sig) = program.signatures.get(name) {
                if inputs.len() != sig.inputs || outputs.len() != sig.outputs {
                    errors.push(ValidationError::FunctionArityMismatch {
                        name: name.clone(),
                        expected_in: sig.inputs,
                        expected_out: sig.outputs,
                        found: inputs.len() + outputs.len(),
                    });
                }
            }
            for out in outputs {
                if matches!(out, Term::Lit(_)) {
                    errors.push(ValidationError::FunctionOutputNotVariable { name: name.clone() });
                }
            }
        }
    }
    errors
}

/// Function-safety closure: a body is safe when the function atoms admit an
/// order in which each input variable is bound by a relation atom or an
/// earlier function output. Returns the unsafe-input findings.
fn check_body_safety(body: &[Atom]) -> Vec<ValidationError> {
    let mut errors = Vec::new();
    errors_and_bound(body, &mut errors);
    errors
}

fn errors_and_bound(body: &[Atom], errors: &mut Vec<ValidationError>) -> BTreeSet<String> {
    let mut bound: BTreeSet<String> = BTreeSet::new();
    for atom in body {
        if let Atom::Rel { .. } = atom {
            bound.extend(atom.vars());
        }
    }

    let mut pending: Vec<&Atom> = body
        .iter()
        .filter(|a| matches!(a, Atom::Func { .. }))
        .collect();
    loop {
        let before = pending.len();
        pending.retain(|atom| {
            if let Atom::Func {
                inputs, outputs, ..
            } = atom
            {
                let ready = inputs
                    .iter()
                    .all(|t| t.var_name().map(|v| bound.contains(v)).unwrap_or(true));
                if ready {
                    for out in outputs {
                        if let Term::Var(v) = out {
                            bound.insert(v.clone());
                        }
                    }
                    return false;
                }
            }
            true
        });
        if pending.len() == before {
            break;
        }
    }
    for atom in pending {
        if let Atom::Func { name, inputs, .. } = atom {
            for t in inputs {
                if let Term::Var(v) = t {
                    if !bound.contains(v) {
                        errors.push(ValidationError::UnsafeFunctionInput {
                            function: name.clone(),
                            variable: v.clone(),
                        });
                    }
                }
            }
        }
    }

    for atom in body {
        match atom {
            Atom::Compare { .. } | Atom::AbsDiff { .. } | Atom::Member { .. } => {
                for var in atom.vars() {
                    if !bound.contains(&var) {
                        errors.push(ValidationError::UnboundComparisonVariable { variable: var });
                    }
                }
            }
            _ => {}
        }
    }
    bound
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::{FunctionKind, FunctionSig};
    use crate::{builtin_signatures, parse_program};
    use relational_core::parse_schema;

    fn schemas(specs: &[&str]) -> Vec<RelationSchema> {
        specs.iter().map(|s| parse_schema(s).unwrap()).collect()
    }

    #[test]
    fn existential_head_variable_is_legal() {
        let sigs = builtin_signatures();
        let p = parse_program(
            "s(id, v, age, dx) -> clinical(id, v, age, moca, dx).",
            &sigs,
        )
        .unwrap();
        let report = validate_program(
            &p,
            &schemas(&["s(id:int, v:date, age:float, dx:str)"]),
            &schemas(&["clinical(id:int, v:date, age:float, moca:float, dx:str)"]),
        );
        assert!(report.is_ok(), "{report}");
        assert_eq!(
            report.rules[0].existential_vars,
            BTreeSet::from(["moca".to_string()])
        );
    }

    #[test]
    fn unbound_function_input_is_unsafe() {
        let sigs = builtin_signatures();
        let p = parse_program("s(b) & minus(a, b, c) -> t(c).", &sigs).unwrap();
        let report = validate_program(&p, &schemas(&["s(b:int)"]), &schemas(&["t(c:float)"]));
        assert!(report.rules[0].errors.iter().any(|e| matches!(
            e,
            ValidationError::UnsafeFunctionInput { variable, .. } if variable == "a"
        )));
    }

    #[test]
    fn function_output_can_feed_later_function() {
        let sigs = builtin_signatures();
        let p = parse_program("s(a, b) & minus(a, b, c) & minus(c, b, d) -> t(d).", &sigs).unwrap();
        let report = validate_program(
            &p,
            &schemas(&["s(a:float, b:float)"]),
            &schemas(&["t(d:float)"]),
        );
        assert!(report.is_ok(), "{report}");
        assert!(report.rules[0].existential_vars.is_empty());
    }

    #[test]
    fn undeclared_function_reported_against_sources() {
        let sigs = builtin_signatures();
        let p = parse_program("s(a) & impute_f9(a, m) -> t(a, m).", &sigs).unwrap();
        let report = validate_program(
            &p,
            &schemas(&["s(a:int)"]),
            &schemas(&["t(a:int, m:float)"]),
        );
        assert!(report.rules[0].errors.iter().any(|e| matches!(
            e,
            ValidationError::UnknownFunction { name } if name == "impute_f9"
        )));
    }

    #[test]
    fn head_relation_must_be_global() {
        let sigs = builtin_signatures();
        let p = parse_program("s(a) -> hidden(a).", &sigs).unwrap();
        let report = validate_program(&p, &schemas(&["s(a:int)"]), &schemas(&["t(a:int)"]));
        assert!(report.rules[0].errors.iter().any(|e| matches!(
            e,
            ValidationError::HeadNotInGlobalSchema { name } if name == "hidden"
        )));
    }

    #[test]
    fn arity_mismatches_reported() {
        let sigs = builtin_signatures();
        let p = parse_program("s(a, b) -> t(a).", &sigs).unwrap();
        let report = validate_program(&p, &schemas(&["s(a:int)"]), &schemas(&["t(a:int, b:int)"]));
        assert_eq!(report.rules[0].errors.len(), 2);
    }

    #[test]
    fn query_head_vars_must_be_bound() {
        let sigs = builtin_signatures();
        let p = parse_program("q(x, y) <- t(x).", &sigs).unwrap();
        let report = validate_program(&p, &[], &schemas(&["t(x:int)"]));
        assert!(report.queries[0].errors.iter().any(|e| matches!(
            e,
            ValidationError::UnboundHeadVariable { variable, .. } if variable == "y"
        )));
    }

    #[test]
    fn impute_output_binding_is_not_existential() {
        let mut sigs = builtin_signatures();
        sigs.insert(
            "impute_f2".into(),
            FunctionSig {
                inputs: 4,
                outputs: 1,
                kind: FunctionKind::Impute,
            },
        );
        let p = parse_program(
            "s2(id, sex, age, re, dx) & impute_f2(sex, age, re, dx, moca) \
             -> clinical(id, age, moca, dx).",
            &sigs,
        )
        .unwrap();
        let report = validate_program(
            &p,
            &schemas(&["s2(id:int, sex:str, age:float, re:str, dx:str)"]),
            &schemas(&["clinical(id:int, age:float, moca:float, dx:str)"]),
        );
        assert!(report.is_ok(), "{report}");
        assert!(report.rules[0].existential_vars.is_empty());
    }

    #[test]
    fn brute_force_safety_agreement_on_small_rules() {
        // safety closure agrees with brute-force permutation search on
        // bodies of up to four function atoms
        use rand::prelude::*;
        use rand::rngs::StdRng;

        let sigs = builtin_signatures();
        let mut rng = StdRng::seed_from_u64(7);
        let vars = ["a", "b", "c", "d", "e", "f"];
        for _ in 0..200 {
            let n_funcs = rng.gen_range(1..=4);
            let rel_vars: Vec<&str> = vars.iter().copied().filter(|_| rng.gen_bool(0.4)).collect();
            let rel_terms = if rel_vars.is_empty() {
                vec![Term::Var("a".to_string())]
            } else {
                rel_vars.iter().map(|v| Term::Var(v.to_string())).collect()
            };
            let mut body = vec![Atom::Rel {
                name: "s".into(),
                terms: rel_terms,
            }];
            for _ in 0..n_funcs {
                let pick = |rng: &mut StdRng| Term::Var(vars.choose(rng).unwrap().to_string());
                body.push(Atom::Func {
                    name: "minus".into(),
                    inputs: vec![pick(&mut rng), pick(&mut rng)],
                    outputs: vec![pick(&mut rng)],
                });
            }
            let closure_safe = check_body_safety(&body).is_empty();
            assert_eq!(
                closure_safe,
                brute_force_safe(&body),
                "disagreement on body {body:?}"
            );
        }
        let _ = sigs;
    }

    /// Independent oracle: try every permutation of the function atoms and
    /// check inputs are bound left to right.
    fn brute_force_safe(body: &[Atom]) -> bool {
        fn permutations(n: usize) -> Vec<Vec<usize>> {
            if n == 0 {
                return vec![vec![]];
            }
            let mut out = Vec::new();
            for rest in permutations(n - 1) {
                for pos in 0..=rest.len() {
                    let mut p = rest.clone();
                    p.insert(pos, n - 1);
                    out.push(p);
                }
            }
            out
        }

        let rel_bound: BTreeSet<String> = body
            .iter()
            .filter(|a| matches!(a, Atom::Rel { .. }))
            .flat_map(|a| a.vars())
            .collect();
        let funcs: Vec<&Atom> = body
            .iter()
            .filter(|a| matches!(a, Atom::Func { .. }))
            .collect();
        permutations(funcs.len()).into_iter().any(|perm| {
            let mut bound = rel_bound.clone();
            for &i in &perm {
                if let Atom::Func {
                    inputs, outputs, ..
                } = funcs[i]
                {
                    let ok = inputs
                        .iter()
                        .all(|t| t.var_name().map(|v| bound.contains(v)).unwrap_or(true));
                    if !ok {
                        return false;
                    }
                    for out in outputs {
                        if let Term::Var(v) = out {
                            bound.insert(v.clone());
                        }
                    }
                }
            }
            true
        })
    }
}
