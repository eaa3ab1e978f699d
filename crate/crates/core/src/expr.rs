//! Arithmetic expressions over variables `x1..xd` with exact first
//! derivatives.
//!
//! Expressions define implicit surfaces `F = 0` and the components of custom
//! transverse fields. The grammar has standard precedence (`^` right
//! associative, then unary minus, then `*` `/`, then `+` `-`), parentheses
//! and function application for `sin cos sinh cosh exp sqrt abs`.
//!
//! Evaluation returns the value together with the exact gradient, computed by
//! forward-mode dual numbers, one pass per coordinate.

use std::fmt;

use nalgebra::DVector;

use crate::error::{Error, Result};

/// Built-in unary functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Sinh,
    Cosh,
    Exp,
    Sqrt,
    Abs,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Sinh => "sinh",
            Func::Cosh => "cosh",
            Func::Exp => "exp",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
        }
    }

    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "sinh" => Func::Sinh,
            "cosh" => Func::Cosh,
            "exp" => Func::Exp,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            _ => return None,
        })
    }
}

/// Expression tree. Variables are stored with 0-based indices; `Var(0)` is
/// the textual `x1`.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Number(f64),
    Var(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

impl Expr {
    fn precedence(&self) -> u8 {
        match self {
            Expr::Add(..) | Expr::Sub(..) => 1,
            Expr::Mul(..) | Expr::Div(..) => 2,
            Expr::Neg(..) => 3,
            Expr::Pow(..) => 4,
            Expr::Number(_) | Expr::Var(_) | Expr::Call(..) => 5,
        }
    }

    fn fmt_prec(&self, f: &mut fmt::Formatter<'_>, min: u8) -> fmt::Result {
        let prec = self.precedence();
        if prec < min {
            write!(f, "(")?;
        }
        match self {
            Expr::Number(v) => write!(f, "{v}")?,
            Expr::Var(i) => write!(f, "x{}", i + 1)?,
            Expr::Neg(x) => {
                write!(f, "-")?;
                x.fmt_prec(f, 3)?;
            }
            Expr::Add(l, r) => {
                l.fmt_prec(f, 1)?;
                write!(f, " + ")?;
                r.fmt_prec(f, 2)?;
            }
            Expr::Sub(l, r) => {
                l.fmt_prec(f, 1)?;
                write!(f, " - ")?;
                r.fmt_prec(f, 2)?;
            }
            Expr::Mul(l, r) => {
                l.fmt_prec(f, 2)?;
                write!(f, "*")?;
                r.fmt_prec(f, 3)?;
            }
            Expr::Div(l, r) => {
                l.fmt_prec(f, 2)?;
                write!(f, "/")?;
                r.fmt_prec(f, 3)?;
            }
            Expr::Pow(l, r) => {
                l.fmt_prec(f, 5)?;
                write!(f, "^")?;
                r.fmt_prec(f, 3)?;
            }
            Expr::Call(func, arg) => {
                write!(f, "{}(", func.name())?;
                arg.fmt_prec(f, 0)?;
                write!(f, ")")?;
            }
        }
        if prec < min {
            write!(f, ")")?;
        }
        Ok(())
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_prec(f, 0)
    }
}

/// A parsed expression bound to a fixed ambient dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Expression {
    root: Expr,
    dimension: usize,
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.root.fmt(f)
    }
}

/// One dual number: value and one directional derivative.
#[derive(Debug, Clone, Copy)]
struct Dual {
    v: f64,
    d: f64,
}

impl Dual {
    const fn con(v: f64) -> Self {
        Dual { v, d: 0.0 }
    }
}

fn eval_dual(expr: &Expr, x: &[f64], seed: usize) -> Result<Dual> {
    let err = |node: &Expr, message: &str| Error::Eval {
        node: node.to_string(),
        message: message.to_string(),
    };
    Ok(match expr {
        Expr::Number(v) => Dual::con(*v),
        Expr::Var(i) => Dual {
            v: x[*i],
            d: if *i == seed { 1.0 } else { 0.0 },
        },
        Expr::Neg(a) => {
            let a = eval_dual(a, x, seed)?;
            Dual { v: -a.v, d: -a.d }
        }
        Expr::Add(a, b) => {
            let (a, b) = (eval_dual(a, x, seed)?, eval_dual(b, x, seed)?);
            Dual {
                v: a.v + b.v,
                d: a.d + b.d,
            }
        }
        Expr::Sub(a, b) => {
            let (a, b) = (eval_dual(a, x, seed)?, eval_dual(b, x, seed)?);
            Dual {
                v: a.v - b.v,
                d: a.d - b.d,
            }
        }
        Expr::Mul(a, b) => {
            let (a, b) = (eval_dual(a, x, seed)?, eval_dual(b, x, seed)?);
            Dual {
                v: a.v * b.v,
                d: a.d * b.v + a.v * b.d,
            }
        }
        Expr::Div(a, b) => {
            let (a, b) = (eval_dual(a, x, seed)?, eval_dual(b, x, seed)?);
            if b.v == 0.0 {
                return Err(err(expr, "division by zero"));
            }
            Dual {
                v: a.v / b.v,
                d: (a.d * b.v - a.v * b.d) / (b.v * b.v),
            }
        }
        Expr::Pow(a, b) => {
            let (a, b) = (eval_dual(a, x, seed)?, eval_dual(b, x, seed)?);
            // Integer constant exponents keep negative bases legal.
            if b.d == 0.0 && b.v == b.v.round() && b.v.abs() < 1e9 {
                let k = b.v as i32;
                if a.v == 0.0 && k < 0 {
                    return Err(err(expr, "zero base with negative exponent"));
                }
                let v = a.v.powi(k);
                let d = if k == 0 {
                    0.0
                } else {
                    f64::from(k) * a.v.powi(k - 1) * a.d
                };
                Dual { v, d }
            } else if a.v > 0.0 {
                let v = a.v.powf(b.v);
                Dual {
                    v,
                    d: v * (b.d * a.v.ln() + b.v * a.d / a.v),
                }
            } else {
                return Err(err(expr, "non-integer power of a non-positive base"));
            }
        }
        Expr::Call(func, arg) => {
            let a = eval_dual(arg, x, seed)?;
            match func {
                Func::Sin => Dual {
                    v: a.v.sin(),
                    d: a.v.cos() * a.d,
                },
                Func::Cos => Dual {
                    v: a.v.cos(),
                    d: -a.v.sin() * a.d,
                },
                Func::Sinh => Dual {
                    v: a.v.sinh(),
                    d: a.v.cosh() * a.d,
                },
                Func::Cosh => Dual {
                    v: a.v.cosh(),
                    d: a.v.sinh() * a.d,
                },
                Func::Exp => {
                    let v = a.v.exp();
                    Dual { v, d: v * a.d }
                }
                Func::Sqrt => {
                    if a.v < 0.0 {
                        return Err(err(expr, "square root of a negative value"));
                    }
                    if a.v == 0.0 {
                        if a.d == 0.0 {
                            Dual::con(0.0)
                        } else {
                            return Err(err(expr, "square root derivative singular at zero"));
                        }
                    } else {
                        let v = a.v.sqrt();
                        Dual {
                            v,
                            d: a.d / (2.0 * v),
                        }
                    }
                }
                Func::Abs => Dual {
                    v: a.v.abs(),
                    d: if a.v > 0.0 {
                        a.d
                    } else if a.v < 0.0 {
                        -a.d
                    } else {
                        0.0
                    },
                },
            }
        }
    })
}

impl Expression {
    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn root(&self) -> &Expr {
        &self.root
    }

    /// Evaluate the expression at `x`.
    pub fn eval(&self, x: &DVector<f64>) -> Result<f64> {
        self.check_point(x)?;
        // Seed index `dimension` never matches a variable: plain evaluation.
        Ok(eval_dual(&self.root, x.as_slice(), self.dimension)?.v)
    }

    /// Evaluate value and exact gradient, one dual pass per coordinate.
    pub fn eval_with_gradient(&self, x: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        self.check_point(x)?;
        let mut grad = DVector::zeros(self.dimension);
        let mut value = 0.0;
        for i in 0..self.dimension {
            let out = eval_dual(&self.root, x.as_slice(), i)?;
            value = out.v;
            grad[i] = out.d;
        }
        Ok((value, grad))
    }

    fn check_point(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.dimension {
            return Err(Error::Input(format!(
                "point has dimension {}, expression expects {}",
                x.len(),
                self.dimension
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("point has non-finite coordinates".into()));
        }
        Ok(())
    }
}

// ── Lexer ──────────────────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Number(f64),
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

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer {
            src: src.as_bytes(),
            pos: 0,
        }
    }

    fn next_token(&mut self) -> Result<(Tok, usize)> {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        let start = self.pos;
        if self.pos >= self.src.len() {
            return Ok((Tok::End, start));
        }
        let c = self.src[self.pos];
        let tok = match c {
            b'+' => Tok::Plus,
            b'-' => Tok::Minus,
            b'*' => Tok::Star,
            b'/' => Tok::Slash,
            b'^' => Tok::Caret,
            b'(' => Tok::LParen,
            b')' => Tok::RParen,
            b'0'..=b'9' | b'.' => return self.lex_number(start),
            c if c.is_ascii_alphabetic() || c == b'_' => {
                let mut end = self.pos;
                while end < self.src.len()
                    && (self.src[end].is_ascii_alphanumeric() || self.src[end] == b'_')
                {
                    end += 1;
                }
                let name = std::str::from_utf8(&self.src[self.pos..end])
                    .expect("identifier bytes are ASCII")
                    .to_string();
                self.pos = end;
                return Ok((Tok::Ident(name), start));
            }
            _ => {
                return Err(Error::Parse {
                    offset: start,
                    message: format!("unexpected character `{}`", c as char),
                })
            }
        };
        self.pos += 1;
        Ok((tok, start))
    }

    fn lex_number(&mut self, start: usize) -> Result<(Tok, usize)> {
        let mut end = self.pos;
        while end < self.src.len() && self.src[end].is_ascii_digit() {
            end += 1;
        }
        if end < self.src.len() && self.src[end] == b'.' {
            end += 1;
            while end < self.src.len() && self.src[end].is_ascii_digit() {
                end += 1;
            }
        }
        if end < self.src.len() && (self.src[end] == b'e' || self.src[end] == b'E') {
            let mut probe = end + 1;
            if probe < self.src.len() && (self.src[probe] == b'+' || self.src[probe] == b'-') {
                probe += 1;
            }
            if probe < self.src.len() && self.src[probe].is_ascii_digit() {
                end = probe;
                while end < self.src.len() && self.src[end].is_ascii_digit() {
                    end += 1;
                }
            }
        }
        let text = std::str::from_utf8(&self.src[start..end]).expect("number bytes are ASCII");
        let value: f64 = text.parse().map_err(|_| Error::Parse {
            offset: start,
            message: format!("invalid numeric literal `{text}`"),
        })?;
        self.pos = end;
        Ok((Tok::Number(value), start))
    }
}

// ── Parser ─────────────────────────────────────────────────────────────────

struct Parser {
    tokens: Vec<(Tok, usize)>,
    cursor: usize,
    dimension: usize,
    source_len: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.cursor].0
    }

    fn offset(&self) -> usize {
        self.tokens[self.cursor].1
    }

    fn bump(&mut self) -> Tok {
        let tok = self.tokens[self.cursor].0.clone();
        if self.cursor + 1 < self.tokens.len() {
            self.cursor += 1;
        }
        tok
    }

    fn expect(&mut self, want: &Tok, what: &str) -> Result<()> {
        if self.peek() == want {
            self.bump();
            Ok(())
        } else {
            Err(Error::Parse {
                offset: self.offset(),
                message: format!("expected {what}"),
            })
        }
    }

    fn parse_expr(&mut self) -> Result<Expr> {
        let mut lhs = self.parse_term()?;
        loop {
            match self.peek() {
                Tok::Plus => {
                    self.bump();
                    let rhs = self.parse_term()?;
                    lhs = Expr::Add(Box::new(lhs), Box::new(rhs));
                }
                Tok::Minus => {
                    self.bump();
                    let rhs = self.parse_term()?;
                    lhs = Expr::Sub(Box::new(lhs), Box::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn parse_term(&mut self) -> Result<Expr> {
        let mut lhs = self.parse_unary()?;
        loop {
            match self.peek() {
                Tok::Star => {
                    self.bump();
                    let rhs = self.parse_unary()?;
                    lhs = Expr::Mul(Box::new(lhs), Box::new(rhs));
                }
                Tok::Slash => {
                    self.bump();
                    let rhs = self.parse_unary()?;
                    lhs = Expr::Div(Box::new(lhs), Box::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn parse_unary(&mut self) -> Result<Expr> {
        if matches!(self.peek(), Tok::Minus) {
            self.bump();
            let inner = self.parse_unary()?;
            return Ok(Expr::Neg(Box::new(inner)));
        }
        self.parse_power()
    }

    fn parse_power(&mut self) -> Result<Expr> {
        let base = self.parse_atom()?;
        if matches!(self.peek(), Tok::Caret) {
            self.bump();
            // Right associativity, with unary minus allowed in the exponent.
            let exponent = self.parse_unary()?;
            return Ok(Expr::Pow(Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn parse_atom(&mut self) -> Result<Expr> {
        let offset = self.offset();
        match self.bump() {
            Tok::Number(v) => Ok(Expr::Number(v)),
            Tok::LParen => {
                let inner = self.parse_expr()?;
                self.expect(&Tok::RParen, "closing `)`")?;
                Ok(inner)
            }
            Tok::Ident(name) => self.parse_ident(name, offset),
            Tok::End => Err(Error::Parse {
                offset: self.source_len,
                message: "unexpected end of input".into(),
            }),
            _ => Err(Error::Parse {
                offset,
                message: "expected a number, variable, function or `(`".into(),
            }),
        }
    }

    fn parse_ident(&mut self, name: String, offset: usize) -> Result<Expr> {
        if let Some(func) = Func::from_name(&name) {
            self.expect(&Tok::LParen, "`(` after function name")?;
            let arg = self.parse_expr()?;
            self.expect(&Tok::RParen, "closing `)`")?;
            return Ok(Expr::Call(func, Box::new(arg)));
        }
        if let Some(rest) = name.strip_prefix('x') {
            if !rest.is_empty() && rest.bytes().all(|b| b.is_ascii_digit()) {
                let index: usize = rest.parse().map_err(|_| Error::Parse {
                    offset,
                    message: format!("variable index `{rest}` out of range"),
                })?;
                if index == 0 || index > self.dimension {
                    return Err(Error::Input(format!(
                        "variable x{index} exceeds dimension {}",
                        self.dimension
                    )));
                }
                return Ok(Expr::Var(index - 1));
            }
        }
        Err(Error::Parse {
            offset,
            message: format!("unknown identifier `{name}`"),
        })
    }
}

/// Parse `text` as an expression over `x1..x<dimension>`.
pub fn parse_expression(text: &str, dimension: usize) -> Result<Expression> {
    if dimension == 0 {
        return Err(Error::Input("dimension must be at least 1".into()));
    }
    let mut lexer = Lexer::new(text);
    let mut tokens = Vec::new();
    loop {
        let (tok, offset) = lexer.next_token()?;
        let end = tok == Tok::End;
        tokens.push((tok, offset));
        if end {
            break;
        }
    }
    let mut parser = Parser {
        tokens,
        cursor: 0,
        dimension,
        source_len: text.len(),
    };
    let root = parser.parse_expr()?;
    if !matches!(parser.peek(), Tok::End) {
        return Err(Error::Parse {
            offset: parser.offset(),
            message: "trailing input after expression".into(),
        });
    }
    Ok(Expression { root, dimension })
}
