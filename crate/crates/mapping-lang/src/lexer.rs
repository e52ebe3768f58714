use relational_core::NaiveDate;

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Ident(String),
    Str(String),
    Int(i64),
    Float(f64),
    Date(NaiveDate),
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Amp,
    Dot,
    Pipe,
    Minus,
    RuleArrow,  // ->
    QueryArrow, // <-
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
    In,
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier '{s}'"),
            Tok::Str(s) => format!("string {s:?}"),
            Tok::Int(i) => format!("number {i}"),
            Tok::Float(f) => format!("number {f:?}"),
            Tok::Date(d) => format!("date {d}"),
            Tok::LParen => "'('".into(),
            Tok::RParen => "')'".into(),
            Tok::LBracket => "'['".into(),
            Tok::RBracket => "']'".into(),
            Tok::Comma => "','".into(),
            Tok::Amp => "'&'".into(),
            Tok::Dot => "'.'".into(),
            Tok::Pipe => "'|'".into(),
            Tok::Minus => "'-'".into(),
            Tok::RuleArrow => "'->'".into(),
            Tok::QueryArrow => "'<-'".into(),
            Tok::Lt => "'<'".into(),
            Tok::Le => "'<='".into(),
            Tok::Gt => "'>'".into(),
            Tok::Ge => "'>='".into(),
            Tok::Eq => "'='".into(),
            Tok::Ne => "'!='".into(),
            Tok::In => "'in'".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Spanned {
    pub tok: Tok,
    pub line: usize,
    pub col: usize,
}

pub struct LexError {
    pub line: usize,
    pub col: usize,
    pub message: String,
}

struct Cursor<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    line: usize,
    col: usize,
}

impl<'a> Cursor<'a> {
    fn new(text: &'a str) -> Self {
        Cursor {
            chars: text.chars().peekable(),
            line: 1,
            col: 1,
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.chars.peek().copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }
}

pub fn lex(text: &str) -> Result<Vec<Spanned>, LexError> {
    let mut cur = Cursor::new(text);
    let mut out = Vec::new();

    loop {
        // skip whitespace and comments
        loop {
            match cur.peek() {
                Some(c) if c.is_whitespace() => {
                    cur.bump();
                }
                Some('#') => {
                    while let Some(c) = cur.peek() {
                        if c == '\n' {
                            break;
                        }
                        cur.bump();
                    }
                }
                _ => break,
            }
        }

        let (line, col) = (cur.line, cur.col);
        let c = match cur.peek() {
            Some(c) => c,
            None => break,
        };

        let tok = match c {
            '(' => {
                cur.bump();
                Tok::LParen
            }
            ')' => {
                cur.bump();
                Tok::RParen
            }
            '[' => {
                cur.bump();
                Tok::LBracket
            }
            ']' => {
                cur.bump();
                Tok::RBracket
            }
            ',' => {
                cur.bump();
                Tok::Comma
            }
            '&' => {
                cur.bump();
                Tok::Amp
            }
            '.' => {
                cur.bump();
                Tok::Dot
            }
            '|' => {
                cur.bump();
                Tok::Pipe
            }
            '=' => {
                cur.bump();
                Tok::Eq
            }
            '!' => {
                cur.bump();
                if cur.peek() == Some('=') {
                    cur.bump();
                    Tok::Ne
                } else {
                    return Err(LexError {
                        line,
                        col,
                        message: "expected '=' after '!'".into(),
                    });
                }
            }
            '-' => {
                cur.bump();
                if cur.peek() == Some('>') {
                    cur.bump();
                    Tok::RuleArrow
                } else {
                    Tok::Minus
                }
            }
            '<' => {
                cur.bump();
                match cur.peek() {
                    Some('-') => {
                        cur.bump();
                        Tok::QueryArrow
                    }
                    Some('=') => {
                        cur.bump();
                        Tok::Le
                    }
                    _ => Tok::Lt,
                }
            }
            '>' => {
                cur.bump();
                if cur.peek() == Some('=') {
                    cur.bump();
                    Tok::Ge
                } else {
                    Tok::Gt
                }
            }
            '"' => {
                cur.bump();
                let mut s = String::new();
                loop {
                    match cur.bump() {
                        Some('"') => break,
                        Some('\\') => match cur.bump() {
                            Some('"') => s.push('"'),
                            Some('\\') => s.push('\\'),
                            Some('n') => s.push('\n'),
                            Some('t') => s.push('\t'),
                            other => {
                                return Err(LexError {
                                    line,
                                    col,
                                    message: format!("invalid escape {other:?} in string"),
                                })
                            }
                        },
                        Some(c) => s.push(c),
                        None => {
                            return Err(LexError {
                                line,
                                col,
                                message: "unterminated string literal".into(),
                            })
                        }
                    }
                }
                Tok::Str(s)
            }
            c if c.is_ascii_digit() => lex_number_or_date(&mut cur, line, col)?,
            c if c.is_alphabetic() || c == '_' => {
                let mut s = String::new();
                while let Some(c) = cur.peek() {
                    if c.is_alphanumeric() || c == '_' {
                        s.push(c);
                        cur.bump();
                    } else {
                        break;
                    }
                }
                if s == "in" {
                    Tok::In
                } else {
                    Tok::Ident(s)
                }
            }
            other => {
                return Err(LexError {
                    line,
                    col,
                    message: format!("unexpected character '{other}'"),
                })
            }
        };
        out.push(Spanned { tok, line, col });
    }
    Ok(out)
}

// A run of digits may start a date (exactly `DDDD-DD-DD` with no trailing
// digit) or a number with optional fraction and exponent. Dates bind tighter:
// `2020-01-10` is one token, while `2020 - 1` is three.
fn lex_number_or_date(cur: &mut Cursor, line: usize, col: usize) -> Result<Tok, LexError> {
    let mut digits = String::new();
    while let Some(c) = cur.peek() {
        if c.is_ascii_digit() {
            digits.push(c);
            cur.bump();
        } else {
            break;
        }
    }

    if digits.len() == 4 && cur.peek() == Some('-') {
        // lookahead for -DD-DD without consuming on failure
        let rest: String = cur.chars.clone().take(6).collect();
        let bytes = rest.as_bytes();
        let is_date = bytes.len() == 6
            && bytes[0] == b'-'
            && bytes[1].is_ascii_digit()
            && bytes[2].is_ascii_digit()
            && bytes[3] == b'-'
            && bytes[4].is_ascii_digit()
            && bytes[5].is_ascii_digit()
            && !cur
                .chars
                .clone()
                .nth(6)
                .map(|c| c.is_ascii_digit())
                .unwrap_or(false);
        if is_date {
            for _ in 0..6 {
                digits.push(cur.bump().unwrap());
            }
            let date = NaiveDate::parse_from_str(&digits, "%Y-%m-%d").map_err(|_| LexError {
                line,
                col,
                message: format!("invalid date '{digits}'"),
            })?;
            return Ok(Tok::Date(date));
        }
    }

    let mut is_float = false;
    if cur.peek() == Some('.') {
        // only a fraction if a digit follows; `7.` at end of statement is
        // integer 7 followed by the statement terminator
        if cur
            .chars
            .clone()
            .nth(1)
            .map(|c| c.is_ascii_digit())
            .unwrap_or(false)
        {
            is_float = true;
            digits.push(cur.bump().unwrap());
            while let Some(c) = cur.peek() {
                if c.is_ascii_digit() {
                    digits.push(c);
                    cur.bump();
                } else {
                    break;
                }
            }
        }
    }
    if matches!(cur.peek(), Some('e') | Some('E')) {
        let mut ahead = cur.chars.clone();
        ahead.next();
        let next = ahead.next();
        let has_exp = match next {
            Some(c) if c.is_ascii_digit() => true,
            Some('+') | Some('-') => ahead.next().map(|c| c.is_ascii_digit()).unwrap_or(false),
            _ => false,
        };
        if has_exp {
            is_float = true;
            digits.push(cur.bump().unwrap());
            if matches!(cur.peek(), Some('+') | Some('-')) {
                digits.push(cur.bump().unwrap());
            }
            while let Some(c) = cur.peek() {
                if c.is_ascii_digit() {
                    digits.push(c);
                    cur.bump();
                } else {
                    break;
                }
            }
        }
    }

    if is_float {
        digits.parse::<f64>().map(Tok::Float).map_err(|_| LexError {
            line,
            col,
            message: format!("invalid number '{digits}'"),
        })
    } else {
        digits.parse::<i64>().map(Tok::Int).map_err(|_| LexError {
            line,
            col,
            message: format!("integer '{digits}' out of range"),
        })
    }
}
