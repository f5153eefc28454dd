//! Recursive-descent parser for assertion text.
//!
//! Precedence from loosest to tightest: `->` (right-associative), `<=>`,
//! `||`, `^`, `&&`, prefix `!`, comparisons, `+ -`, `* / %`, unary `-`,
//! atoms. Unary minus `-e` is sugar for `(0 - e)`.

use thiserror::Error;

use super::{ArithOp, CmpOp, Expr, LogicOp, VarSignature, VarType};

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("syntax error at offset {pos}: {message}")]
    Syntax { pos: usize, message: String },
    #[error("unknown identifier `{name}` at offset {pos}")]
    UnknownIdentifier { pos: usize, name: String },
    #[error("type error at offset {pos}: {message}")]
    Type { pos: usize, message: String },
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Num(f64),
    LParen,
    RParen,
    Plus,
    Minus,
    Star,
    Slash,
    Percent,
    EqEq,
    NotEq,
    Lt,
    Le,
    Gt,
    Ge,
    AndAnd,
    OrOr,
    Caret,
    Arrow,
    Iff,
    Bang,
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Ident(s) => format!("identifier `{s}`"),
        Tok::Num(n) => format!("number `{n}`"),
        other => format!("`{}`", symbol(other)),
    }
}

fn symbol(t: &Tok) -> &'static str {
    match t {
        Tok::LParen => "(",
        Tok::RParen => ")",
        Tok::Plus => "+",
        Tok::Minus => "-",
        Tok::Star => "*",
        Tok::Slash => "/",
        Tok::Percent => "%",
        Tok::EqEq => "==",
        Tok::NotEq => "!=",
        Tok::Lt => "<",
        Tok::Le => "<=",
        Tok::Gt => ">",
        Tok::Ge => ">=",
        Tok::AndAnd => "&&",
        Tok::OrOr => "||",
        Tok::Caret => "^",
        Tok::Arrow => "->",
        Tok::Iff => "<=>",
        Tok::Bang => "!",
        Tok::Ident(_) | Tok::Num(_) => "",
    }
}

fn lex(text: &str) -> Result<Vec<(usize, Tok)>, ParseError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if c.is_ascii_alphabetic() || c == b'_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_' || bytes[i] == b'.') {
                i += 1;
            }
            out.push((start, Tok::Ident(text[start..i].to_string())));
            continue;
        }
        if c.is_ascii_digit() {
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            if i < bytes.len() && bytes[i] == b'.' {
                i += 1;
                let frac = i;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                if i == frac {
                    return Err(ParseError::Syntax {
                        pos: start,
                        message: "expected digits after decimal point".into(),
                    });
                }
            }
            let v: f64 = text[start..i].parse().map_err(|_| ParseError::Syntax {
                pos: start,
                message: "malformed number".into(),
            })?;
            if !v.is_finite() {
                return Err(ParseError::Syntax {
                    pos: start,
                    message: "numeric literal out of range".into(),
                });
            }
            out.push((start, Tok::Num(v)));
            continue;
        }
        let rest = &text[i..];
        let (tok, len) = if rest.starts_with("<=>") {
            (Tok::Iff, 3)
        } else if rest.starts_with("&&") {
            (Tok::AndAnd, 2)
        } else if rest.starts_with("||") {
            (Tok::OrOr, 2)
        } else if rest.starts_with("->") {
            (Tok::Arrow, 2)
        } else if rest.starts_with("==") {
            (Tok::EqEq, 2)
        } else if rest.starts_with("!=") {
            (Tok::NotEq, 2)
        } else if rest.starts_with("<=") {
            (Tok::Le, 2)
        } else if rest.starts_with(">=") {
            (Tok::Ge, 2)
        } else {
            let t = match c {
                b'(' => Tok::LParen,
                b')' => Tok::RParen,
                b'+' => Tok::Plus,
                b'-' => Tok::Minus,
                b'*' => Tok::Star,
                b'/' => Tok::Slash,
                b'%' => Tok::Percent,
                b'<' => Tok::Lt,
                b'>' => Tok::Gt,
                b'^' => Tok::Caret,
                b'!' => Tok::Bang,
                _ => {
                    let ch = rest.chars().next().unwrap_or('?');
                    return Err(ParseError::Syntax {
                        pos: start,
                        message: format!("unexpected character `{ch}`"),
                    });
                }
            };
            (t, 1)
        };
        out.push((start, tok));
        i += len;
    }
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    end: usize,
    sig: &'a VarSignature,
}

/// Parses `text` into a boolean-typed expression over `sig`.
pub fn parse(text: &str, sig: &VarSignature) -> Result<Expr, ParseError> {
    let mut p = Parser {
        toks: lex(text)?,
        pos: 0,
        end: text.len(),
        sig,
    };
    let e = p.implies()?;
    if let Some((at, t)) = p.toks.get(p.pos) {
        return Err(ParseError::Syntax {
            pos: *at,
            message: format!("unexpected {}", describe(t)),
        });
    }
    if e.output_type() != VarType::Boolean {
        return Err(ParseError::Type {
            pos: 0,
            message: "an assertion must be boolean-typed".into(),
        });
    }
    Ok(e)
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(_, t)| t)
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end, |(p, _)| *p)
    }

    fn eat(&mut self, t: &Tok) -> Option<usize> {
        if self.peek() == Some(t) {
            let at = self.offset();
            self.pos += 1;
            Some(at)
        } else {
            None
        }
    }

    fn expect_type(e: &Expr, ty: VarType, pos: usize, op: &str) -> Result<(), ParseError> {
        if e.output_type() == ty {
            Ok(())
        } else {
            Err(ParseError::Type {
                pos,
                message: format!("operator `{op}` expects {ty} operands, found {} operand `{e}`", e.output_type()),
            })
        }
    }

    fn logic(&self, op: LogicOp, l: Expr, r: Expr, at: usize) -> Result<Expr, ParseError> {
        Self::expect_type(&l, VarType::Boolean, at, op.symbol())?;
        Self::expect_type(&r, VarType::Boolean, at, op.symbol())?;
        Ok(Expr::logic(op, l, r))
    }

    fn implies(&mut self) -> Result<Expr, ParseError> {
        let l = self.equiv()?;
        if let Some(at) = self.eat(&Tok::Arrow) {
            let r = self.implies()?;
            return self.logic(LogicOp::Implies, l, r, at);
        }
        Ok(l)
    }

    fn equiv(&mut self) -> Result<Expr, ParseError> {
        let mut l = self.or()?;
        while let Some(at) = self.eat(&Tok::Iff) {
            let r = self.or()?;
            l = self.logic(LogicOp::Equiv, l, r, at)?;
        }
        Ok(l)
    }

    fn or(&mut self) -> Result<Expr, ParseError> {
        let mut l = self.xor()?;
        while let Some(at) = self.eat(&Tok::OrOr) {
            let r = self.xor()?;
            l = self.logic(LogicOp::Or, l, r, at)?;
        }
        Ok(l)
    }

    fn xor(&mut self) -> Result<Expr, ParseError> {
        let mut l = self.and()?;
        while let Some(at) = self.eat(&Tok::Caret) {
            let r = self.and()?;
            l = self.logic(LogicOp::Xor, l, r, at)?;
        }
        Ok(l)
    }

    fn and(&mut self) -> Result<Expr, ParseError> {
        let mut l = self.not()?;
        while let Some(at) = self.eat(&Tok::AndAnd) {
            let r = self.not()?;
            l = self.logic(LogicOp::And, l, r, at)?;
        }
        Ok(l)
    }

    fn not(&mut self) -> Result<Expr, ParseError> {
        if let Some(at) = self.eat(&Tok::Bang) {
            let e = self.not()?;
            Self::expect_type(&e, VarType::Boolean, at, "!")?;
            return Ok(Expr::not(e));
        }
        self.comparison()
    }

    fn comparison(&mut self) -> Result<Expr, ParseError> {
        let mut l = self.additive()?;
        loop {
            let op = match self.peek() {
                Some(Tok::EqEq) => CmpOp::Eq,
                Some(Tok::NotEq) => CmpOp::Ne,
                Some(Tok::Lt) => CmpOp::Lt,
                Some(Tok::Le) => CmpOp::Le,
                Some(Tok::Gt) => CmpOp::Gt,
                Some(Tok::Ge) => CmpOp::Ge,
                _ => return Ok(l),
            };
            let at = self.offset();
            self.pos += 1;
            let r = self.additive()?;
            Self::expect_type(&l, VarType::Number, at, op.symbol())?;
            Self::expect_type(&r, VarType::Number, at, op.symbol())?;
            l = Expr::cmp(op, l, r);
        }
    }

    fn additive(&mut self) -> Result<Expr, ParseError> {
        let mut l = self.multiplicative()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Plus) => ArithOp::Add,
                Some(Tok::Minus) => ArithOp::Sub,
                _ => return Ok(l),
            };
            let at = self.offset();
            self.pos += 1;
            let r = self.multiplicative()?;
            l = self.arith(op, l, r, at)?;
        }
    }

    fn multiplicative(&mut self) -> Result<Expr, ParseError> {
        let mut l = self.unary()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Star) => ArithOp::Mul,
                Some(Tok::Slash) => ArithOp::Div,
                Some(Tok::Percent) => ArithOp::Rem,
                _ => return Ok(l),
            };
            let at = self.offset();
            self.pos += 1;
            let r = self.unary()?;
            l = self.arith(op, l, r, at)?;
        }
    }

    fn arith(&self, op: ArithOp, l: Expr, r: Expr, at: usize) -> Result<Expr, ParseError> {
        Self::expect_type(&l, VarType::Number, at, op.symbol())?;
        Self::expect_type(&r, VarType::Number, at, op.symbol())?;
        Ok(Expr::arith(op, l, r))
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if let Some(at) = self.eat(&Tok::Minus) {
            let e = self.unary()?;
            return self.arith(ArithOp::Sub, Expr::Const(0.0), e, at);
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let at = self.offset();
        match self.toks.get(self.pos).map(|(_, t)| t.clone()) {
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                match self.sig.lookup(&name) {
                    Some((i, VarType::Number)) => Ok(Expr::NumVar(self.sig.var_ref(i))),
                    Some((i, VarType::Boolean)) => Ok(Expr::BoolVar(self.sig.var_ref(i))),
                    None => Err(ParseError::UnknownIdentifier { pos: at, name }),
                }
            }
            Some(Tok::Num(v)) => {
                self.pos += 1;
                Ok(Expr::Const(v))
            }
            Some(Tok::LParen) => {
                self.pos += 1;
                let e = self.implies()?;
                if self.eat(&Tok::RParen).is_none() {
                    return Err(ParseError::Syntax {
                        pos: self.offset(),
                        message: match self.peek() {
                            Some(t) => format!("expected `)`, found {}", describe(t)),
                            None => "expected `)`, found end of input".into(),
                        },
                    });
                }
                Ok(e)
            }
            Some(t) => Err(ParseError::Syntax {
                pos: at,
                message: format!("unexpected {}", describe(&t)),
            }),
            None => Err(ParseError::Syntax {
                pos: at,
                message: "unexpected end of input".into(),
            }),
        }
    }
}
