use std::fmt::Write;

use relational_core::Value;

use crate::ast::{Atom, MappingProgram, Term};

/// Emit canonical text for a program: one statement per line, rules first,
/// then queries. `parse_program(pretty_print(p))` is structurally equal to
/// `p` under the same signature table.
pub fn pretty_print(program: &MappingProgram) -> String {
    let mut out = String::new();
    for rule in &program.rules {
        let body: Vec<String> = rule.body.iter().map(atom_text).collect();
        let head: Vec<String> = rule.head.iter().map(atom_text).collect();
        writeln!(out, "{} -> {}.", body.join(" & "), head.join(" & ")).unwrap();
    }
    for query in &program.queries {
        let body: Vec<String> = query.body.iter().map(atom_text).collect();
        writeln!(
            out,
            "{}({}) <- {}.",
            query.name,
            query.head_vars.join(", "),
            body.join(" & ")
        )
        .unwrap();
    }
    out
}

fn atom_text(atom: &Atom) -> String {
    match atom {
        Atom::Rel { name, terms } => {
            let ts: Vec<String> = terms.iter().map(term_text).collect();
            format!("{name}({})", ts.join(", "))
        }
        Atom::Func {
            name,
            inputs,
            outputs,
        } => {
            let ts: Vec<String> = inputs.iter().chain(outputs).map(term_text).collect();
            format!("{name}({})", ts.join(", "))
        }
        Atom::Compare { lhs, op, rhs } => {
            format!("{} {} {}", term_text(lhs), op.symbol(), term_text(rhs))
        }
        Atom::AbsDiff { a, b, op, bound } => format!(
            "|{} - {}| {} {}",
            term_text(a),
            term_text(b),
            op.symbol(),
            literal_text(bound)
        ),
        Atom::Member { term, set } => {
            let ls: Vec<String> = set.iter().map(literal_text).collect();
            format!("{} in [{}]", term_text(term), ls.join(", "))
        }
    }
}

fn term_text(term: &Term) -> String {
    match term {
        Term::Var(v) => v.clone(),
        Term::Lit(v) => literal_text(v),
    }
}

fn literal_text(value: &Value) -> String {
    match value {
        Value::Int(i) => i.to_string(),
        // {:?} prints the shortest representation that reparses to the same bits
        Value::Float(f) => format!("{f:?}"),
        Value::Str(s) => {
            let mut quoted = String::with_capacity(s.len() + 2);
            quoted.push('"');
            for c in s.chars() {
                match c {
                    '"' => quoted.push_str("\\\""),
                    '\\' => quoted.push_str("\\\\"),
                    '\n' => quoted.push_str("\\n"),
                    '\t' => quoted.push_str("\\t"),
                    c => quoted.push(c),
                }
            }
            quoted.push('"');
            quoted
        }
        Value::Date(d) => d.format("%Y-%m-%d").to_string(),
        // unreachable for parsed programs; literals never hold nulls
        Value::Missing | Value::LabeledNull(_) => String::new(),
    }
}
