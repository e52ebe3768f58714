use relational_core::Value;
use thiserror::Error;

use crate::ast::{
    Atom, CompareOp, FunctionSignatures, MappingProgram, MappingRule, QueryDef, Term,
};
use crate::lexer::{lex, Spanned, Tok};

#[derive(Debug, Clone, Error, PartialEq)]
#[error("syntax error at {line}:{col}: expected {expected}, found {found}")]
pub struct SyntaxError {
    pub line: usize,
    pub col: usize,
    pub expected: String,
    pub found: String,
}

/// Parse mapping text into a program. Body atoms whose name appears in
/// `signatures` become function atoms with inputs and outputs split per the
/// signature; every other `name(...)` is a relation atom. Undeclared function
/// names therefore parse as relation atoms and are reported by validation,
/// not here.
pub fn parse_program(
    text: &str,
    signatures: &FunctionSignatures,
) -> Result<MappingProgram, SyntaxError> {
    let toks = lex(text).map_err(|e| SyntaxError {
        line: e.line,
        col: e.col,
        expected: "a valid token".into(),
        found: e.message,
    })?;
    let mut parser = Parser {
        toks: &toks,
        pos: 0,
        sigs: signatures,
    };
    let mut program = MappingProgram {
        signatures: signatures.clone(),
        ..Default::default()
    };
    while !parser.at_end() {
        parser.statement(&mut program)?;
    }
    Ok(program)
}

struct Parser<'a> {
    toks: &'a [Spanned],
    pos: usize,
    sigs: &'a FunctionSignatures,
}

impl<'a> Parser<'a> {
    fn at_end(&self) -> bool {
        self.pos >= self.toks.len()
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|s| &s.tok)
    }

    fn bump(&mut self) -> Option<&Spanned> {
        let s = self.toks.get(self.pos);
        if s.is_some() {
            self.pos += 1;
        }
        s
    }

    fn err(&self, expected: &str) -> SyntaxError {
        match self.toks.get(self.pos) {
            Some(s) => SyntaxError {
                line: s.line,
                col: s.col,
                expected: expected.into(),
                found: s.tok.describe(),
            },
            None => {
                let (line, col) = self.toks.last().map(|s| (s.line, s.col)).unwrap_or((1, 1));
                SyntaxError {
                    line,
                    col,
                    expected: expected.into(),
                    found: "end of input".into(),
                }
            }
        }
    }

    fn expect(&mut self, tok: Tok, expected: &str) -> Result<(), SyntaxError> {
        if self.peek() == Some(&tok) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(expected))
        }
    }

    fn statement(&mut self, program: &mut MappingProgram) -> Result<(), SyntaxError> {
        let body_start = self.pos;
        let atoms = self.batom_list()?;
        match self.peek() {
            Some(Tok::RuleArrow) => {
                self.bump();
                let head = self.head_atoms()?;
                self.expect(Tok::Dot, "'.' to end the rule")?;
                program.rules.push(MappingRule { body: atoms, head });
                Ok(())
            }
            Some(Tok::QueryArrow) => {
                self.bump();
                let (name, head_vars) = self.query_head(&atoms, body_start)?;
                let body = self.batom_list()?;
                self.expect(Tok::Dot, "'.' to end the query")?;
                program.queries.push(QueryDef {
                    name,
                    head_vars,
                    body,
                });
                Ok(())
            }
            _ => Err(self.err("'->' or '<-'")),
        }
    }

    fn query_head(
        &self,
        atoms: &[Atom],
        body_start: usize,
    ) -> Result<(String, Vec<String>), SyntaxError> {
        let head_err = || {
            let s = &self.toks[body_start.min(self.toks.len() - 1)];
            SyntaxError {
                line: s.line,
                col: s.col,
                expected: "a query head of the form name(v1, ..., vk)".into(),
                found: "a compound or non-variable head".into(),
            }
        };
        match atoms {
            [Atom::Rel { name, terms }] => {
                let mut vars = Vec::with_capacity(terms.len());
                for t in terms {
                    match t {
                        Term::Var(v) => vars.push(v.clone()),
                        Term::Lit(_) => return Err(head_err()),
                    }
                }
                Ok((name.clone(), vars))
            }
            _ => Err(head_err()),
        }
    }

    fn batom_list(&mut self) -> Result<Vec<Atom>, SyntaxError> {
        let mut atoms = vec![self.batom()?];
        while self.peek() == Some(&Tok::Amp) {
            self.bump();
            atoms.push(self.batom()?);
        }
        Ok(atoms)
    }

    fn head_atoms(&mut self) -> Result<Vec<Atom>, SyntaxError> {
        let mut atoms = vec![self.rel_atom()?];
        while self.peek() == Some(&Tok::Amp) {
            self.bump();
            atoms.push(self.rel_atom()?);
        }
        Ok(atoms)
    }

    fn batom(&mut self) -> Result<Atom, SyntaxError> {
        if self.peek() == Some(&Tok::Pipe) {
            return self.absdiff();
        }
        let term = self.term()?;
        match (term, self.peek()) {
            (Term::Var(name), Some(Tok::LParen)) => self.atom_args(name),
            (term, Some(Tok::In)) => {
                self.bump();
                self.expect(Tok::LBracket, "'[' to open a membership set")?;
                let mut set = vec![self.literal()?];
                while self.peek() == Some(&Tok::Comma) {
                    self.bump();
                    set.push(self.literal()?);
                }
                self.expect(Tok::RBracket, "']' to close the membership set")?;
                Ok(Atom::Member { term, set })
            }
            (lhs, _) => {
                let op = self.compare_op()?;
                let rhs = self.term()?;
                Ok(Atom::Compare { lhs, op, rhs })
            }
        }
    }

    fn rel_atom(&mut self) -> Result<Atom, SyntaxError> {
        let name = match self.peek() {
            Some(Tok::Ident(_)) => match self.bump().map(|s| &s.tok) {
                Some(Tok::Ident(name)) => name.clone(),
                _ => unreachable!(),
            },
            _ => return Err(self.err("a relation name")),
        };
        match self.atom_args(name)? {
            // heads are always relation atoms, even for names that collide
            // with declared functions
            Atom::Func {
                name,
                inputs,
                outputs,
            } => {
                let mut terms = inputs;
                terms.extend(outputs);
                Ok(Atom::Rel { name, terms })
            }
            atom => Ok(atom),
        }
    }

    fn atom_args(&mut self, name: String) -> Result<Atom, SyntaxError> {
        self.expect(Tok::LParen, "'(' after atom name")?;
        let mut terms = Vec::new();
        if self.peek() != Some(&Tok::RParen) {
            terms.push(self.term()?);
            while self.peek() == Some(&Tok::Comma) {
                self.bump();
                terms.push(self.term()?);
            }
        }
        self.expect(Tok::RParen, "')' to close the atom")?;

        if let Some(sig) = self.sigs.get(&name) {
            let split = sig.inputs.min(terms.len());
            let outputs = terms.split_off(split);
            Ok(Atom::Func {
                name,
                inputs: terms,
                outputs,
            })
        } else {
            Ok(Atom::Rel { name, terms })
        }
    }

    fn compare_op(&mut self) -> Result<CompareOp, SyntaxError> {
        let op = match self.peek() {
            Some(Tok::Lt) => CompareOp::Lt,
            Some(Tok::Le) => CompareOp::Le,
            Some(Tok::Gt) => CompareOp::Gt,
            Some(Tok::Ge) => CompareOp::Ge,
            Some(Tok::Eq) => CompareOp::Eq,
            Some(Tok::Ne) => CompareOp::Ne,
            _ => return Err(self.err("a comparison operator")),
        };
        self.bump();
        Ok(op)
    }

    fn absdiff(&mut self) -> Result<Atom, SyntaxError> {
        self.expect(Tok::Pipe, "'|'")?;
        let a = self.term()?;
        self.expect(Tok::Minus, "'-' between the absolute-difference terms")?;
        let b = self.term()?;
        self.expect(Tok::Pipe, "'|' to close the absolute difference")?;
        let op = self.compare_op()?;
        let bound = self.literal()?;
        Ok(Atom::AbsDiff { a, b, op, bound })
    }

    fn term(&mut self) -> Result<Term, SyntaxError> {
        match self.peek() {
            Some(Tok::Ident(_)) => match self.bump().map(|s| s.tok.clone()) {
                Some(Tok::Ident(name)) => Ok(Term::Var(name)),
                _ => unreachable!(),
            },
            _ => self.literal().map(Term::Lit),
        }
    }

    fn literal(&mut self) -> Result<Value, SyntaxError> {
        let negate = if self.peek() == Some(&Tok::Minus) {
            self.bump();
            true
        } else {
            false
        };
        let value = match self.peek() {
            Some(Tok::Int(i)) => Value::Int(*i),
            Some(Tok::Float(f)) => Value::Float(*f),
            Some(Tok::Str(_)) if !negate => match self.peek() {
                Some(Tok::Str(s)) => Value::Str(s.clone()),
                _ => unreachable!(),
            },
            Some(Tok::Date(_)) if !negate => match self.peek() {
                Some(Tok::Date(d)) => Value::Date(*d),
                _ => unreachable!(),
            },
            _ => {
                return Err(self.err(if negate {
                    "a number after '-'"
                } else {
                    "a variable or literal"
                }))
            }
        };
        self.bump();
        Ok(match (negate, value) {
            (true, Value::Int(i)) => Value::Int(-i),
            (true, Value::Float(f)) => Value::Float(-f),
            (_, v) => v,
        })
    }
}
