//! Parser, AST, and static validator for the declarative schema-mapping and
//! query language.
//!
//! Concrete syntax, ASCII throughout: `&` joins atoms, `->` separates a rule
//! body from its head, `<-` defines a query, `.` terminates a statement and
//! `#` starts a line comment. Bare identifiers are variables; string, number
//! and date (YYYY-MM-DD) literals are constants. Interpreted atoms cover
//! comparisons (`age >= 65`), absolute differences (`|visit1 - visit2| < 60`)
//! and membership (`dx in ["CT", "MCI", "AD"]`).
//!
//! Function atoms such as `minus(dob, visit, age)` are recognized through a
//! signature table declared outside the mapping text (imputers carry training
//! configuration that does not belong in the mapping file).

mod ast;
mod lexer;
mod parser;
mod printer;
mod validate;

pub use ast::{
    Atom, CompareOp, FunctionKind, FunctionSig, FunctionSignatures, MappingProgram, MappingRule,
    QueryDef, Term,
};
pub use parser::{parse_program, SyntaxError};
pub use printer::pretty_print;
pub use validate::{validate_program, QueryReport, RuleReport, ValidationError, ValidationReport};

/// Signature table containing only the built-in functions (`minus`).
pub fn builtin_signatures() -> FunctionSignatures {
    let mut sigs = FunctionSignatures::new();
    sigs.insert(
        "minus".to_string(),
        FunctionSig {
            inputs: 2,
            outputs: 1,
            kind: FunctionKind::Builtin,
        },
    );
    sigs
}
