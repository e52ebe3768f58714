use std::collections::{BTreeMap, BTreeSet};

use relational_core::Value;

/// A variable or a constant literal. Literals are restricted to
/// `Int`/`Float`/`Str`/`Date` values; nulls cannot be written in mapping text.
#[derive(Debug, Clone, PartialEq)]
pub enum Term {
    Var(String),
    Lit(Value),
}

impl Term {
    pub fn var_name(&self) -> Option<&str> {
        match self {
            Term::Var(v) => Some(v),
            Term::Lit(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CompareOp {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
}

impl CompareOp {
    pub fn symbol(&self) -> &'static str {
        match self {
            CompareOp::Lt => "<",
            CompareOp::Le => "<=",
            CompareOp::Gt => ">",
            CompareOp::Ge => ">=",
            CompareOp::Eq => "=",
            CompareOp::Ne => "!=",
        }
    }
}

/// One conjunct of a rule or query body (heads use only `Rel`).
#[derive(Debug, Clone, PartialEq)]
pub enum Atom {
    /// Relation atom `name(t1, ..., tn)`.
    Rel { name: String, terms: Vec<Term> },
    /// Interpreted function atom; inputs and outputs split by signature.
    Func {
        name: String,
        inputs: Vec<Term>,
        outputs: Vec<Term>,
    },
    /// `lhs op rhs`.
    Compare { lhs: Term, op: CompareOp, rhs: Term },
    /// `|a - b| op bound`.
    AbsDiff {
        a: Term,
        b: Term,
        op: CompareOp,
        bound: Value,
    },
    /// `term in [lit, ...]`.
    Member { term: Term, set: Vec<Value> },
}

impl Atom {
    /// Variables appearing anywhere in the atom.
    pub fn vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        let mut push = |t: &Term| {
            if let Term::Var(v) = t {
                out.insert(v.clone());
            }
        };
        match self {
            Atom::Rel { terms, .. } => terms.iter().for_each(&mut push),
            Atom::Func {
                inputs, outputs, ..
            } => {
                inputs.iter().for_each(&mut push);
                outputs.iter().for_each(&mut push);
            }
            Atom::Compare { lhs, rhs, .. } => {
                push(lhs);
                push(rhs);
            }
            Atom::AbsDiff { a, b, .. } => {
                push(a);
                push(b);
            }
            Atom::Member { term, .. } => push(term),
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FunctionKind {
    Builtin,
    Normalize,
    Impute,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FunctionSig {
    pub inputs: usize,
    pub outputs: usize,
    pub kind: FunctionKind,
}

pub type FunctionSignatures = BTreeMap<String, FunctionSig>;

/// A source-to-global rule `body -> head.`
#[derive(Debug, Clone, PartialEq)]
pub struct MappingRule {
    pub body: Vec<Atom>,
    pub head: Vec<Atom>,
}

impl MappingRule {
    /// Variables bound by the body: relation-atom variables plus function
    /// outputs. Interpreted filter atoms bind nothing.
    pub fn body_bound_vars(&self) -> BTreeSet<String> {
        let mut bound = BTreeSet::new();
        for atom in &self.body {
            match atom {
                Atom::Rel { .. } => bound.extend(atom.vars()),
                Atom::Func { outputs, .. } => {
                    for t in outputs {
                        if let Term::Var(v) = t {
                            bound.insert(v.clone());
                        }
                    }
                }
                _ => {}
            }
        }
        bound
    }

    /// Head variables bound nowhere in the body. These become labeled nulls
    /// at exchange time.
    pub fn existential_vars(&self) -> BTreeSet<String> {
        let bound = self.body_bound_vars();
        let mut head_vars = BTreeSet::new();
        for atom in &self.head {
            head_vars.extend(atom.vars());
        }
        head_vars.difference(&bound).cloned().collect()
    }
}

/// A named query `name(v1, ..., vk) <- body.` over the global schema.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryDef {
    pub name: String,
    pub head_vars: Vec<String>,
    pub body: Vec<Atom>,
}

/// Parsed rules and queries together with the function signature table that
/// was in force when the text was parsed.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MappingProgram {
    pub rules: Vec<MappingRule>,
    pub queries: Vec<QueryDef>,
    pub signatures: FunctionSignatures,
}

impl MappingProgram {
    pub fn query(&self, name: &str) -> Option<&QueryDef> {
        self.queries.iter().find(|q| q.name == name)
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty() && self.queries.is_empty()
    }
}
