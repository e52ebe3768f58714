//! End-to-end exchange behavior on a small clinical fixture, plus an
//! independent brute-force oracle for conjunctive-query evaluation on
//! randomized instances.

use std::collections::BTreeMap;

use data_exchange::{
    evaluate_query, materialize, FunctionRegistry, ImputeFunction, ImputeOutput,
    NormalizationTable, QueryMode, TargetInstance,
};
use imputation::{fit, local_stats, merge_stats, ColumnRef, ImputerKind, ImputerSpec};
use mapping_lang::{
    builtin_signatures, parse_program, Atom, CompareOp, MappingProgram, QueryDef, Term,
};
use relational_core::{parse_schema, ColumnType, NaiveDate, Relation, RelationSchema, Value};

fn date(s: &str) -> Value {
    Value::Date(NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap())
}

fn s(v: &str) -> Value {
    Value::Str(v.to_string())
}

// ===== clinical mini fixture =====

struct Fixture {
    program: MappingProgram,
    sources: BTreeMap<String, Relation>,
    global: Vec<RelationSchema>,
    registry: FunctionRegistry,
}

/// Two silos mapped to a shared schema: a clinic with per-row visits and
/// missing diagnoses, and a hospital with separate demographic, imaging, and
/// diagnosis tables.
fn fixture() -> Fixture {
    let mut registry = FunctionRegistry::new();
    registry.add_normalization(
        "normalize",
        NormalizationTable::new(
            "icd10",
            BTreeMap::from([
                ("AD".to_string(), "G30.9".to_string()),
                ("MCI".to_string(), "G31.84".to_string()),
                ("CT".to_string(), "Z00.00".to_string()),
            ]),
            false,
        ),
    );
    registry.add_imputer_spec(
        ImputerSpec::new(
            "moca_norm",
            ColumnRef::new("clinical", "moca"),
            ColumnType::Float,
            ImputerKind::Constant {
                value: Value::Float(26.0),
            },
        )
        .unwrap(),
    );
    registry.add_imputer_spec(
        ImputerSpec::new(
            "dx_mode",
            ColumnRef::new("clinical", "dx"),
            ColumnType::Str,
            ImputerKind::Mode,
        )
        .unwrap(),
    );
    registry
        .add_impute_function(ImputeFunction {
            name: "impute_f1".into(),
            input_names: vec!["sex".into(), "age".into(), "mmse".into(), "dx".into()],
            outputs: vec![
                ImputeOutput {
                    imputer: "moca_norm".into(),
                    passthrough: None,
                },
                ImputeOutput {
                    imputer: "dx_mode".into(),
                    passthrough: Some("dx".into()),
                },
            ],
        })
        .unwrap();
    registry
        .add_impute_function(ImputeFunction {
            name: "impute_f2".into(),
            input_names: vec!["sex".into(), "age".into(), "icd10".into()],
            outputs: vec![ImputeOutput {
                imputer: "moca_norm".into(),
                passthrough: None,
            }],
        })
        .unwrap();

    let text = r#"
        s1(id, dob, sex, visit, mmse, dx, mri) &
        minus(dob, visit, age) &
        impute_f1(sex, age, mmse, dx, moca_i, dx_i)
            -> subject(id, sex) &
               clinical(id, visit, age, moca_i, dx_i) &
               imaging(id, visit, "MRI", mri).

        s2d(id, sex) &
        s2i(id, visit1, itype, scan) & itype = "MRI" &
        s2x(id, visit2, age, dx) & dx in ["CT", "MCI", "AD"] &
        normalize(dx, icd10) &
        impute_f2(sex, age, icd10, moca_i)
            -> subject(id, sex) &
               clinical(id, visit2, age, moca_i, icd10) &
               imaging(id, visit1, "MRI", scan).

        q_dx(sex, age, mri, dx) <-
            subject(id, sex) &
            imaging(id, v1, "MRI", mri) &
            clinical(id, v2, age, moca, dx) &
            |v1 - v2| < 60.
    "#;
    let program = parse_program(text, &registry.signatures()).unwrap();

    let s1 = Relation::from_rows(
        parse_schema("s1(id:int, dob:date, sex:str, visit:date, mmse:float, dx:str, mri:str)")
            .unwrap(),
        vec![
            vec![
                Value::Int(1),
                date("1950-01-10"),
                s("F"),
                date("2020-01-10"),
                Value::Float(29.0),
                s("G30.9"),
                s("m1.nii"),
            ],
            vec![
                Value::Int(2),
                date("1944-06-02"),
                s("M"),
                date("2019-11-20"),
                Value::Float(22.0),
                Value::Missing,
                s("m2.nii"),
            ],
            vec![
                Value::Int(3),
                date("1960-03-15"),
                s("F"),
                date("2021-05-02"),
                Value::Float(27.0),
                Value::Missing,
                s("m3.nii"),
            ],
        ],
    )
    .unwrap();
    let s2d = Relation::from_rows(
        parse_schema("s2d(id:int, sex:str)").unwrap(),
        vec![vec![Value::Int(10), s("F")], vec![Value::Int(11), s("M")]],
    )
    .unwrap();
    let s2i = Relation::from_rows(
        parse_schema("s2i(id:int, visit1:date, itype:str, scan:str)").unwrap(),
        vec![
            vec![Value::Int(10), date("2020-03-01"), s("MRI"), s("h10.nii")],
            vec![Value::Int(10), date("2020-03-01"), s("PET"), s("h10.pet")],
            vec![Value::Int(11), date("2021-01-05"), s("MRI"), s("h11.nii")],
        ],
    )
    .unwrap();
    let s2x = Relation::from_rows(
        parse_schema("s2x(id:int, visit2:date, age:float, dx:str)").unwrap(),
        vec![
            vec![
                Value::Int(10),
                date("2020-03-10"),
                Value::Float(71.0),
                s("AD"),
            ],
            vec![
                Value::Int(11),
                date("2021-01-20"),
                Value::Float(65.0),
                s("CT"),
            ],
            vec![
                Value::Int(11),
                date("2021-06-20"),
                Value::Float(66.0),
                s("PD"),
            ],
        ],
    )
    .unwrap();

    let sources = BTreeMap::from([
        ("s1".to_string(), s1),
        ("s2d".to_string(), s2d),
        ("s2i".to_string(), s2i),
        ("s2x".to_string(), s2x),
    ]);

    let global = vec![
        parse_schema("subject(id:int, sex:str)").unwrap(),
        parse_schema("clinical(id:int, visit:date, age:float, moca:float, dx:str)").unwrap(),
        parse_schema("imaging(id:int, visit:date, type:str, image:str)").unwrap(),
    ];

    Fixture {
        program,
        sources,
        global,
        registry,
    }
}

/// Fit the fixture's mode imputer from the certain-mode instance, the way the
/// driver pipeline does, then return a registry ready for impute mode.
fn fitted_registry(fx: &Fixture, pass1: &TargetInstance) -> FunctionRegistry {
    let mut registry = fx.registry.clone();
    let clinical = pass1.relation("clinical").unwrap();
    for spec in fx.registry.imputer_specs() {
        let stats = local_stats(clinical, spec).unwrap();
        let merged = merge_stats(&[stats]).unwrap();
        if let Ok(fitted) = fit(spec, &merged) {
            registry.set_fitted(fitted);
        }
    }
    registry
}

#[test]
fn certain_mode_skolemizes_imputed_positions() {
    let fx = fixture();
    let instance = materialize(
        &fx.program,
        &fx.sources,
        &fx.global,
        &fx.registry,
        QueryMode::CertainAnswers,
    )
    .unwrap();

    // |subject| = distinct ids; imaging keeps only MRI rows from the hospital
    assert_eq!(instance.relation("subject").unwrap().len(), 5);
    assert_eq!(instance.relation("imaging").unwrap().len(), 5);

    let clinical = instance.relation("clinical").unwrap();
    assert_eq!(clinical.len(), 5);
    let moca = clinical.column("moca").unwrap();
    assert!(moca.iter().all(Value::is_labeled_null));
    // clinic rows skolemize dx as well; hospital rows carry real codes
    let dx = clinical.column("dx").unwrap();
    assert_eq!(dx.iter().filter(|v| v.is_labeled_null()).count(), 3);
    assert_eq!(instance.null_count(), 8);
}

#[test]
fn impute_mode_fills_and_keeps_passthrough_values() {
    let fx = fixture();
    let pass1 = materialize(
        &fx.program,
        &fx.sources,
        &fx.global,
        &fx.registry,
        QueryMode::CertainAnswers,
    )
    .unwrap();
    let registry = fitted_registry(&fx, &pass1);
    let instance = materialize(
        &fx.program,
        &fx.sources,
        &fx.global,
        &registry,
        QueryMode::Impute,
    )
    .unwrap();

    let clinical = instance.relation("clinical").unwrap();
    // no nulls survive in imputable columns
    for column in ["moca", "dx"] {
        assert!(
            clinical
                .column(column)
                .unwrap()
                .iter()
                .all(|v| !v.is_null_like()),
            "column {column} still has nulls"
        );
    }
    // patient 1's real diagnosis passes through; the missing ones take the
    // hospital's modal code (G30.9, the only diagnosis seen twice... check)
    let by_id: BTreeMap<i64, String> = clinical
        .rows()
        .iter()
        .map(|r| match (&r[0], &r[4]) {
            (Value::Int(id), Value::Str(dx)) => (*id, dx.clone()),
            other => panic!("unexpected row {other:?}"),
        })
        .collect();
    assert_eq!(by_id[&1], "G30.9");
    // modal dx over the certain instance: hospital contributes G30.9 and
    // Z00.00 once each; tie breaks lexicographically to G30.9
    assert_eq!(by_id[&2], "G30.9");
    assert_eq!(by_id[&3], "G30.9");
}

#[test]
fn certain_answers_are_contained_in_impute_answers() {
    let fx = fixture();
    let pass1 = materialize(
        &fx.program,
        &fx.sources,
        &fx.global,
        &fx.registry,
        QueryMode::CertainAnswers,
    )
    .unwrap();
    let registry = fitted_registry(&fx, &pass1);
    let impute_instance = materialize(
        &fx.program,
        &fx.sources,
        &fx.global,
        &registry,
        QueryMode::Impute,
    )
    .unwrap();

    let query = fx.program.query("q_dx").unwrap();
    let certain = evaluate_query(query, &pass1, QueryMode::CertainAnswers, &fx.registry).unwrap();
    let imputed = evaluate_query(query, &impute_instance, QueryMode::Impute, &registry).unwrap();

    // null hygiene in both modes
    for rel in [&certain, &imputed] {
        for row in rel.rows() {
            assert!(row.iter().all(|v| !v.is_null_like()), "null in {row:?}");
        }
    }

    // the clinic's rows lose their dx skolems in certain mode, the hospital
    // rows survive; impute mode recovers all subjects
    assert_eq!(certain.len(), 2);
    assert_eq!(imputed.len(), 5);
    for row in certain.rows() {
        assert!(
            imputed.rows().contains(row),
            "certain answer {row:?} missing from impute answers"
        );
    }
}

#[test]
fn materialization_is_deterministic_per_counter_start() {
    let fx = fixture();
    let a = materialize(
        &fx.program,
        &fx.sources,
        &fx.global,
        &fx.registry,
        QueryMode::CertainAnswers,
    )
    .unwrap();
    let b = materialize(
        &fx.program,
        &fx.sources,
        &fx.global,
        &fx.registry,
        QueryMode::CertainAnswers,
    )
    .unwrap();
    for (name, rel) in a.relations() {
        assert_eq!(rel, b.relation(name).unwrap());
    }
    assert_eq!(a.null_count(), b.null_count());
}

#[test]
fn adding_a_source_row_never_removes_answers() {
    let fx = fixture();
    let pass1 = materialize(
        &fx.program,
        &fx.sources,
        &fx.global,
        &fx.registry,
        QueryMode::CertainAnswers,
    )
    .unwrap();
    let query = fx.program.query("q_dx").unwrap();
    let before = evaluate_query(query, &pass1, QueryMode::CertainAnswers, &fx.registry).unwrap();

    let mut sources = fx.sources.clone();
    let extra = vec![
        Value::Int(12),
        date("2022-02-02"),
        Value::Float(70.0),
        s("MCI"),
    ];
    let mut s2x = sources["s2x"].clone();
    s2x.push_row(extra).unwrap();
    sources.insert("s2x".to_string(), s2x);
    let mut s2d = sources["s2d"].clone();
    s2d.push_row(vec![Value::Int(12), s("F")]).unwrap();
    sources.insert("s2d".to_string(), s2d);

    let after_instance = materialize(
        &fx.program,
        &sources,
        &fx.global,
        &fx.registry,
        QueryMode::CertainAnswers,
    )
    .unwrap();
    let after = evaluate_query(
        query,
        &after_instance,
        QueryMode::CertainAnswers,
        &fx.registry,
    )
    .unwrap();
    for row in before.rows() {
        assert!(after.rows().contains(row), "lost answer {row:?}");
    }
}

// ===== randomized brute-force oracle =====

/// Independent evaluator: enumerate the full cartesian product of candidate
/// rows per relation atom with index counters, check every term position
/// against the assignment, then apply filters. No unification machinery is
/// shared with the engine under test.
fn brute_force_certain_answers(
    query: &QueryDef,
    relations: &BTreeMap<String, Relation>,
) -> Vec<Vec<Value>> {
    fn values_equal(a: &Value, b: &Value) -> bool {
        match (a, b) {
            (Value::Missing, _) | (_, Value::Missing) => false,
            (Value::LabeledNull(x), Value::LabeledNull(y)) => x == y,
            (Value::LabeledNull(_), _) | (_, Value::LabeledNull(_)) => false,
            (Value::Int(x), Value::Int(y)) => x == y,
            (Value::Float(x), Value::Float(y)) => x == y,
            (Value::Int(x), Value::Float(y)) | (Value::Float(y), Value::Int(x)) => *x as f64 == *y,
            (Value::Str(x), Value::Str(y)) => x == y,
            (Value::Date(x), Value::Date(y)) => x == y,
            _ => false,
        }
    }

    let rel_atoms: Vec<(&String, &Vec<Term>)> = query
        .body
        .iter()
        .filter_map(|a| match a {
            Atom::Rel { name, terms } => Some((name, terms)),
            _ => None,
        })
        .collect();
    let filters: Vec<&Atom> = query
        .body
        .iter()
        .filter(|a| matches!(a, Atom::Compare { .. }))
        .collect();

    let row_counts: Vec<usize> = rel_atoms
        .iter()
        .map(|(name, _)| relations[*name].len())
        .collect();
    if row_counts.iter().any(|&n| n == 0) {
        return Vec::new();
    }

    let mut answers = Vec::new();
    let mut counters = vec![0usize; rel_atoms.len()];
    'product: loop {
        // gather every (var, value) occurrence across all atoms
        let mut occurrences: Vec<(String, Value)> = Vec::new();
        let mut consistent = true;
        for (atom_idx, (name, terms)) in rel_atoms.iter().enumerate() {
            let row = &relations[*name].rows()[counters[atom_idx]];
            for (position, term) in terms.iter().enumerate() {
                match term {
                    Term::Lit(lit) => {
                        if !values_equal(&row[position], lit) {
                            consistent = false;
                        }
                    }
                    Term::Var(v) => occurrences.push((v.clone(), row[position].clone())),
                }
            }
        }
        if consistent {
            // repeated variables must agree pairwise
            'pairs: for i in 0..occurrences.len() {
                for j in i + 1..occurrences.len() {
                    if occurrences[i].0 == occurrences[j].0
                        && !values_equal(&occurrences[i].1, &occurrences[j].1)
                    {
                        consistent = false;
                        break 'pairs;
                    }
                }
            }
        }
        if consistent {
            let lookup = |v: &str| -> Value {
                occurrences
                    .iter()
                    .find(|(name, _)| name == v)
                    .map(|(_, value)| value.clone())
                    .unwrap_or(Value::Missing)
            };
            for filter in &filters {
                if let Atom::Compare { lhs, op, rhs } = filter {
                    let left = match lhs {
                        Term::Var(v) => lookup(v),
                        Term::Lit(l) => l.clone(),
                    };
                    let right = match rhs {
                        Term::Var(v) => lookup(v),
                        Term::Lit(l) => l.clone(),
                    };
                    let (x, y) = match (left.as_f64(), right.as_f64()) {
                        (Some(x), Some(y)) => (x, y),
                        _ => {
                            consistent = false;
                            break;
                        }
                    };
                    let holds = match op {
                        CompareOp::Lt => x < y,
                        CompareOp::Le => x <= y,
                        CompareOp::Gt => x > y,
                        CompareOp::Ge => x >= y,
                        CompareOp::Eq => x == y,
                        CompareOp::Ne => x != y,
                    };
                    if !holds {
                        consistent = false;
                        break;
                    }
                }
            }
            if consistent {
                let row: Vec<Value> = query.head_vars.iter().map(|v| lookup(v)).collect();
                if !row.iter().any(Value::is_null_like) {
                    answers.push(row);
                }
            }
        }

        // advance the odometer
        let mut level = rel_atoms.len();
        loop {
            if level == 0 {
                break 'product;
            }
            level -= 1;
            counters[level] += 1;
            if counters[level] < row_counts[level] {
                break;
            }
            counters[level] = 0;
        }
    }
    answers
}

fn normalized(mut rows: Vec<Vec<Value>>) -> Vec<String> {
    let mut out: Vec<String> = rows.drain(..).map(|r| format!("{r:?}")).collect();
    out.sort();
    out
}

#[test]
fn labeled_null_ids_are_unique_across_the_instance() {
    let fx = fixture();
    let instance = materialize(
        &fx.program,
        &fx.sources,
        &fx.global,
        &fx.registry,
        QueryMode::CertainAnswers,
    )
    .unwrap();
    let mut seen = std::collections::HashSet::new();
    for (_, relation) in instance.relations() {
        for row in relation.rows() {
            for value in row {
                if let Value::LabeledNull(id) = value {
                    assert!(seen.insert(*id), "duplicate labeled null id {id}");
                    assert!(*id < instance.null_count());
                }
            }
        }
    }
}

/// Independent rule applier: cartesian product over the body's relation
/// atoms with odometer counters, explicit repeated-variable checks, compare
/// filters, then head emission with per-binding null markers. Existential
/// null identity is canonicalized before comparison.
fn brute_force_materialize(
    rules: &[&mapping_lang::MappingRule],
    sources: &BTreeMap<String, Relation>,
) -> BTreeMap<String, Vec<Vec<String>>> {
    let mut out: BTreeMap<String, Vec<Vec<String>>> = BTreeMap::new();
    let mut binding_counter = 0usize;
    for rule in rules {
        let rel_atoms: Vec<(&String, &Vec<Term>)> = rule
            .body
            .iter()
            .filter_map(|a| match a {
                Atom::Rel { name, terms } => Some((name, terms)),
                _ => None,
            })
            .collect();
        let filters: Vec<&Atom> = rule
            .body
            .iter()
            .filter(|a| matches!(a, Atom::Compare { .. }))
            .collect();
        let row_counts: Vec<usize> = rel_atoms
            .iter()
            .map(|(name, _)| sources[*name].len())
            .collect();
        if row_counts.iter().any(|&n| n == 0) {
            continue;
        }
        let mut counters = vec![0usize; rel_atoms.len()];
        'product: loop {
            let mut occurrences: Vec<(String, Value)> = Vec::new();
            let mut consistent = true;
            for (atom_idx, (name, terms)) in rel_atoms.iter().enumerate() {
                let row = &sources[*name].rows()[counters[atom_idx]];
                for (position, term) in terms.iter().enumerate() {
                    match term {
                        Term::Lit(lit) => {
                            if !oracle_eq(&row[position], lit) {
                                consistent = false;
                            }
                        }
                        Term::Var(v) => occurrences.push((v.clone(), row[position].clone())),
                    }
                }
            }
            if consistent {
                'pairs: for i in 0..occurrences.len() {
                    for j in i + 1..occurrences.len() {
                        if occurrences[i].0 == occurrences[j].0
                            && !oracle_eq(&occurrences[i].1, &occurrences[j].1)
                        {
                            consistent = false;
                            break 'pairs;
                        }
                    }
                }
            }
            let lookup = |v: &str| -> Option<Value> {
                occurrences
                    .iter()
                    .find(|(name, _)| name == v)
                    .map(|(_, value)| value.clone())
            };
            if consistent {
                for filter in &filters {
                    if let Atom::Compare { lhs, op, rhs } = filter {
                        let left = match lhs {
                            Term::Var(v) => lookup(v),
                            Term::Lit(l) => Some(l.clone()),
                        };
                        let right = match rhs {
                            Term::Var(v) => lookup(v),
                            Term::Lit(l) => Some(l.clone()),
                        };
                        let holds = match (left, right) {
                            (Some(a), Some(b)) => oracle_compare(*op, &a, &b),
                            _ => false,
                        };
                        if !holds {
                            consistent = false;
                            break;
                        }
                    }
                }
            }
            if consistent {
                binding_counter += 1;
                for atom in &rule.head {
                    if let Atom::Rel { name, terms } = atom {
                        let row: Vec<String> = terms
                            .iter()
                            .map(|term| match term {
                                Term::Lit(v) => format!("{v:?}"),
                                Term::Var(v) => match lookup(v) {
                                    Some(value) => format!("{value:?}"),
                                    // existential: one marker per binding
                                    None => format!("null:{v}@{binding_counter}"),
                                },
                            })
                            .collect();
                        out.entry(name.clone()).or_default().push(row);
                    }
                }
            }
            let mut level = rel_atoms.len();
            loop {
                if level == 0 {
                    break 'product;
                }
                level -= 1;
                counters[level] += 1;
                if counters[level] < row_counts[level] {
                    break;
                }
                counters[level] = 0;
            }
        }
    }
    // dedup exactly like the engine: tuples with existential markers never
    // collide (fresh per binding), others dedup structurally
    for rows in out.values_mut() {
        let mut seen = std::collections::HashSet::new();
        rows.retain(|row| seen.insert(row.clone()));
    }
    out
}

fn oracle_eq(a: &Value, b: &Value) -> bool {
    match (a, b) {
        (Value::Missing, _) | (_, Value::Missing) => false,
        (Value::LabeledNull(x), Value::LabeledNull(y)) => x == y,
        (Value::LabeledNull(_), _) | (_, Value::LabeledNull(_)) => false,
        (Value::Int(x), Value::Float(y)) | (Value::Float(y), Value::Int(x)) => *x as f64 == *y,
        _ => a == b,
    }
}

fn oracle_compare(op: CompareOp, a: &Value, b: &Value) -> bool {
    let (x, y) = match (a.as_f64(), b.as_f64()) {
        (Some(x), Some(y)) => (x, y),
        _ => return false,
    };
    match op {
        CompareOp::Lt => x < y,
        CompareOp::Le => x <= y,
        CompareOp::Gt => x > y,
        CompareOp::Ge => x >= y,
        CompareOp::Eq => x == y,
        CompareOp::Ne => x != y,
    }
}

/// Canonicalize labeled nulls per relation: rows sort with nulls replaced by
/// a stable per-id index in first-appearance order, so engine and oracle
/// instances compare up to null renaming.
fn canonical_instance(instance: &TargetInstance) -> BTreeMap<String, Vec<Vec<String>>> {
    let mut out = BTreeMap::new();
    for (name, relation) in instance.relations() {
        let rows: Vec<Vec<String>> = relation
            .rows()
            .iter()
            .map(|row| {
                row.iter()
                    .map(|v| match v {
                        Value::LabeledNull(id) => format!("null#{id}"),
                        other => format!("{other:?}"),
                    })
                    .collect()
            })
            .collect();
        out.insert(name.clone(), rows);
    }
    out
}

fn normalized_null_classes(rows: &[Vec<String>]) -> Vec<String> {
    // null ids only matter up to renaming: replace each with a canonical
    // index by first appearance within the sorted row list
    let mut sorted: Vec<Vec<String>> = rows.to_vec();
    sorted.sort();
    let mut mapping: BTreeMap<String, usize> = BTreeMap::new();
    let mut canon = Vec::new();
    for row in &sorted {
        let cells: Vec<String> = row
            .iter()
            .map(|cell| {
                if cell.starts_with("null") {
                    let next = mapping.len();
                    let idx = *mapping.entry(cell.clone()).or_insert(next);
                    format!("null<{idx}>")
                } else {
                    cell.clone()
                }
            })
            .collect();
        canon.push(cells.join("|"));
    }
    canon.sort();
    canon
}

#[test]
fn random_rules_agree_with_brute_force_materialization() {
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let registry = FunctionRegistry::new();
    for trial in 0..40 {
        let r_rows: Vec<Vec<Value>> = (0..rng.gen_range(2..12))
            .map(|_| {
                vec![
                    Value::Int(rng.gen_range(0..4)),
                    if rng.gen_bool(0.15) {
                        Value::Missing
                    } else {
                        Value::Int(rng.gen_range(0..4))
                    },
                ]
            })
            .collect();
        let t_rows: Vec<Vec<Value>> = (0..rng.gen_range(2..12))
            .map(|_| {
                vec![
                    Value::Int(rng.gen_range(0..4)),
                    Value::Int(rng.gen_range(0..6)),
                ]
            })
            .collect();
        let sources = BTreeMap::from([
            (
                "r".to_string(),
                Relation::from_rows(parse_schema("r(a:int, b:int)").unwrap(), r_rows).unwrap(),
            ),
            (
                "t".to_string(),
                Relation::from_rows(parse_schema("t(b:int, c:int)").unwrap(), t_rows).unwrap(),
            ),
        ]);
        let text = match trial % 4 {
            0 => "r(a, b) & t(b, c) -> g(a, c).",
            1 => "r(a, b) & t(b, c) & c > 2 -> g(a, c) & h(c, z).",
            2 => "r(a, b) -> h(b, z).",
            _ => "r(a, a) & t(a, c) -> g(a, c).",
        };
        let program = parse_program(text, &builtin_signatures()).unwrap();
        let global = vec![
            parse_schema("g(a:int, c:int)").unwrap(),
            parse_schema("h(c:int, z:float)").unwrap(),
        ];
        let engine = materialize(
            &program,
            &sources,
            &global,
            &registry,
            QueryMode::CertainAnswers,
        )
        .unwrap();
        let oracle = brute_force_materialize(&program.rules.iter().collect::<Vec<_>>(), &sources);

        let canonical = canonical_instance(&engine);
        for name in ["g", "h"] {
            let engine_rows = canonical.get(name).cloned().unwrap_or_default();
            let oracle_rows = oracle.get(name).cloned().unwrap_or_default();
            assert_eq!(
                normalized_null_classes(&engine_rows),
                normalized_null_classes(&oracle_rows),
                "trial {trial} relation {name} for {text}"
            );
        }
    }
}

#[test]
fn random_instances_agree_with_brute_force() {
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let registry = FunctionRegistry::new();
    for trial in 0..60 {
        // two relations over a tiny value domain to force joins and nulls
        let r_schema = parse_schema("r(a:int, b:int)").unwrap();
        let t_schema = parse_schema("t(b:int, c:str)").unwrap();
        let names = ["x", "y", "z"];
        let mut r_rows = Vec::new();
        for _ in 0..rng.gen_range(3..20) {
            let a = if rng.gen_bool(0.1) {
                Value::Missing
            } else {
                Value::Int(rng.gen_range(0..5))
            };
            let b = if rng.gen_bool(0.1) {
                Value::LabeledNull(rng.gen_range(0..3))
            } else {
                Value::Int(rng.gen_range(0..5))
            };
            r_rows.push(vec![a, b]);
        }
        let mut t_rows = Vec::new();
        for _ in 0..rng.gen_range(3..20) {
            let b = if rng.gen_bool(0.15) {
                Value::LabeledNull(rng.gen_range(0..3))
            } else {
                Value::Int(rng.gen_range(0..5))
            };
            let c = Value::Str(names.choose(&mut rng).unwrap().to_string());
            t_rows.push(vec![b, c]);
        }
        let relations = BTreeMap::from([
            (
                "r".to_string(),
                Relation::from_rows(r_schema, r_rows).unwrap(),
            ),
            (
                "t".to_string(),
                Relation::from_rows(t_schema, t_rows).unwrap(),
            ),
        ]);

        let query_text = match trial % 3 {
            0 => "q(a, c) <- r(a, b) & t(b, c).",
            1 => "q(a, b) <- r(a, b) & r(b, a).",
            _ => "q(a, c) <- r(a, b) & t(b, c) & a < 3.",
        };
        let program = parse_program(query_text, &registry.signatures()).unwrap();
        let query = &program.queries[0];

        let instance = TargetInstance::from_relations(relations.clone(), 100);
        let engine =
            evaluate_query(query, &instance, QueryMode::CertainAnswers, &registry).unwrap();
        let oracle = brute_force_certain_answers(query, &relations);
        assert_eq!(
            normalized(engine.rows().to_vec()),
            normalized(oracle),
            "trial {trial} disagreed for {query_text}"
        );
    }
}
