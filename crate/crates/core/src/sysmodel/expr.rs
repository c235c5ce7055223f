//! Expression mini-language for nonlinear right-hand sides.
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := factor (('*' | '/') factor)*
//! factor := base ('^' unsigned-integer)?
//! base   := number | var | func '(' expr ')' | '(' expr ')' | '-' base
//! var    := x1..x9 | u1..u9
//! func   := sin | cos | tanh | exp | abs | sqrt
//! ```
//!
//! Note that `-x1^2` parses as `(-x1)^2`, since unary minus binds inside `base`.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Tanh,
    Exp,
    Abs,
    Sqrt,
}

impl Func {
    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tanh" => Func::Tanh,
            "exp" => Func::Exp,
            "abs" => Func::Abs,
            "sqrt" => Func::Sqrt,
            _ => return None,
        })
    }

    fn apply(self, v: f64) -> f64 {
        match self {
            Func::Sin => v.sin(),
            Func::Cos => v.cos(),
            Func::Tanh => v.tanh(),
            Func::Exp => v.exp(),
            Func::Abs => v.abs(),
            Func::Sqrt => v.sqrt(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

/// Parsed expression tree. Variable indices are zero-based.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    State(usize),
    Input(usize),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, u32),
    Call(Func, Box<Expr>),
}

impl Expr {
    pub fn eval(&self, x: &[f64], u: &[f64]) -> Result<f64> {
        Ok(match self {
            Expr::Num(v) => *v,
            Expr::State(i) => *x.get(*i).ok_or_else(|| out_of_range('x', *i, x.len()))?,
            Expr::Input(i) => *u.get(*i).ok_or_else(|| out_of_range('u', *i, u.len()))?,
            Expr::Neg(e) => -e.eval(x, u)?,
            Expr::Bin(op, a, b) => {
                let (a, b) = (a.eval(x, u)?, b.eval(x, u)?);
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => {
                        if b == 0.0 {
                            return Err(Error::DivisionByZero);
                        }
                        a / b
                    }
                }
            }
            Expr::Pow(e, k) => e.eval(x, u)?.powi(*k as i32),
            Expr::Call(f, e) => f.apply(e.eval(x, u)?),
        })
    }

    fn visit(&self, f: &mut impl FnMut(&Expr)) {
        f(self);
        match self {
            Expr::Neg(e) | Expr::Pow(e, _) | Expr::Call(_, e) => e.visit(f),
            Expr::Bin(_, a, b) => {
                a.visit(f);
                b.visit(f);
            }
            _ => {}
        }
    }
}

fn out_of_range(kind: char, i: usize, len: usize) -> Error {
    Error::InvalidArgument(format!("variable {kind}{} used but only {len} available", i + 1))
}

/// An expression together with its source text.
#[derive(Debug, Clone, PartialEq)]
pub struct Expression {
    source: String,
    root: Expr,
}

impl Expression {
    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn root(&self) -> &Expr {
        &self.root
    }

    pub fn eval(&self, x: &[f64], u: &[f64]) -> Result<f64> {
        self.root.eval(x, u)
    }

    /// Highest state index referenced (one-based), 0 if none.
    pub fn max_state_index(&self) -> usize {
        let mut m = 0;
        self.root.visit(&mut |e| {
            if let Expr::State(i) = e {
                m = m.max(i + 1)
            }
        });
        m
    }

    /// Highest input index referenced (one-based), 0 if none.
    pub fn max_input_index(&self) -> usize {
        let mut m = 0;
        self.root.visit(&mut |e| {
            if let Expr::Input(i) = e {
                m = m.max(i + 1)
            }
        });
        m
    }

    /// Whether any input variable appears syntactically.
    pub fn uses_input(&self) -> bool {
        self.max_input_index() > 0
    }
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

impl Serialize for Expression {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.source)
    }
}

impl<'de> Deserialize<'de> for Expression {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        parse_dynamics(&text).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num { value: f64, integer: bool },
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    End,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Num { value, .. } => format!("number {value}"),
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Plus => "`+`".into(),
            Tok::Minus => "`-`".into(),
            Tok::Star => "`*`".into(),
            Tok::Slash => "`/`".into(),
            Tok::Caret => "`^`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::End => "end of input".into(),
        }
    }
}

fn tokenize(text: &str) -> Result<Vec<(Tok, usize)>> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        let tok = match c {
            '+' => Tok::Plus,
            '-' => Tok::Minus,
            '*' => Tok::Star,
            '/' => Tok::Slash,
            '^' => Tok::Caret,
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            c if c.is_ascii_digit() || c == '.' => {
                let mut integer = true;
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    integer &= bytes[i] != b'.';
                    i += 1;
                }
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        integer = false;
                        i = j;
                        while i < bytes.len() && bytes[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let lit = &text[start..i];
                let value = lit
                    .parse::<f64>()
                    .map_err(|_| Error::Syntax { offset: start, message: format!("malformed number `{lit}`") })?;
                out.push((Tok::Num { value, integer }, start));
                continue;
            }
            c if c.is_ascii_alphabetic() => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push((Tok::Ident(text[start..i].to_string()), start));
                continue;
            }
            other => {
                return Err(Error::Syntax { offset: start, message: format!("unexpected character `{other}`") })
            }
        };
        out.push((tok, start));
        i += 1;
    }
    out.push((Tok::End, text.len()));
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> (Tok, usize) {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn unexpected(&self, wanted: &str) -> Error {
        Error::Syntax { offset: self.offset(), message: format!("expected {wanted}, found {}", self.peek().describe()) }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.factor()?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.factor()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn factor(&mut self) -> Result<Expr> {
        let base = self.base()?;
        if *self.peek() != Tok::Caret {
            return Ok(base);
        }
        self.bump();
        match self.peek().clone() {
            Tok::Num { value, integer: true } if value <= u32::MAX as f64 => {
                self.bump();
                Ok(Expr::Pow(Box::new(base), value as u32))
            }
            _ => Err(self.unexpected("an unsigned integer exponent")),
        }
    }

    fn base(&mut self) -> Result<Expr> {
        let (tok, offset) = self.bump();
        match tok {
            Tok::Num { value, .. } => Ok(Expr::Num(value)),
            Tok::Minus => Ok(Expr::Neg(Box::new(self.base()?))),
            Tok::LParen => {
                let inner = self.expr()?;
                self.expect_rparen()?;
                Ok(inner)
            }
            Tok::Ident(name) => {
                if *self.peek() == Tok::LParen {
                    let func = Func::from_name(&name).ok_or(Error::UnknownIdentifier { name: name.clone(), offset })?;
                    self.bump();
                    let arg = self.expr()?;
                    self.expect_rparen()?;
                    return Ok(Expr::Call(func, Box::new(arg)));
                }
                variable(&name).ok_or(Error::UnknownIdentifier { name, offset })
            }
            other => {
                self.pos -= usize::from(other != Tok::End);
                Err(Error::Syntax { offset, message: format!("expected an operand, found {}", other.describe()) })
            }
        }
    }

    fn expect_rparen(&mut self) -> Result<()> {
        if *self.peek() == Tok::RParen {
            self.bump();
            Ok(())
        } else {
            Err(self.unexpected("`)`"))
        }
    }
}

fn variable(name: &str) -> Option<Expr> {
    let mut chars = name.chars();
    let kind = chars.next()?;
    let digit = chars.next()?.to_digit(10)?;
    if chars.next().is_some() || digit == 0 {
        return None;
    }
    match kind {
        'x' => Some(Expr::State(digit as usize - 1)),
        'u' => Some(Expr::Input(digit as usize - 1)),
        _ => None,
    }
}

/// Parses a right-hand-side expression.
pub fn parse_dynamics(text: &str) -> Result<Expression> {
    let mut p = Parser { toks: tokenize(text)?, pos: 0 };
    let root = p.expr()?;
    if *p.peek() != Tok::End {
        return Err(p.unexpected("an operator or end of input"));
    }
    Ok(Expression { source: text.to_string(), root })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn evaluates_nonlinear_damping_term() {
        let e = parse_dynamics("-3*x1 - x2/(1 + x2^2) + u1").unwrap();
        let v = e.eval(&[1.0, 2.0], &[1.0]).unwrap();
        assert!((v - (-2.4)).abs() < 1e-15);
        assert_eq!(e.max_state_index(), 2);
        assert!(e.uses_input());
    }

    #[test]
    fn constant_zero() {
        let e = parse_dynamics("0").unwrap();
        assert_eq!(e.eval(&[3.0], &[-1.0]).unwrap(), 0.0);
        assert!(!e.uses_input());
    }

    #[test]
    fn trailing_operator_reports_offset() {
        match parse_dynamics("x1 +") {
            Err(Error::Syntax { offset, .. }) => assert_eq!(offset, 4),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn errors() {
        assert!(matches!(parse_dynamics("y1 + 1"), Err(Error::UnknownIdentifier { offset: 0, .. })));
        assert!(matches!(parse_dynamics("sinh(x1)"), Err(Error::UnknownIdentifier { .. })));
        assert!(matches!(parse_dynamics("x0"), Err(Error::UnknownIdentifier { .. })));
        assert!(matches!(parse_dynamics("x1^2.5"), Err(Error::Syntax { offset: 3, .. })));
        assert!(matches!(parse_dynamics("(x1"), Err(Error::Syntax { offset: 3, .. })));
        assert!(matches!(parse_dynamics("x1 $"), Err(Error::Syntax { offset: 3, .. })));
        assert!(matches!(parse_dynamics("x1 x2"), Err(Error::Syntax { offset: 3, .. })));
        let div = parse_dynamics("1/x1").unwrap();
        assert_eq!(div.eval(&[0.0], &[]), Err(Error::DivisionByZero));
    }

    #[test]
    fn precedence_and_functions() {
        let e = parse_dynamics("2 + 3*4^2 - -1").unwrap();
        assert_eq!(e.eval(&[], &[]).unwrap(), 51.0);
        let e = parse_dynamics("-x1^2").unwrap();
        assert_eq!(e.eval(&[3.0], &[]).unwrap(), 9.0);
        let e = parse_dynamics("sqrt(abs(x1)) + exp(0) + tanh(0) + sin(0) + cos(0)").unwrap();
        assert_eq!(e.eval(&[-4.0], &[]).unwrap(), 4.0);
        let e = parse_dynamics("1.5e-1 * u2").unwrap();
        assert!((e.eval(&[], &[0.0, 2.0]).unwrap() - 0.3).abs() < 1e-15);
        assert_eq!(e.max_input_index(), 2);
    }
}
