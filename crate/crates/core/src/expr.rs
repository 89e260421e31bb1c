//! Arithmetic expressions for user-supplied Lagrangians, dynamics,
//! prehistories and potentials.
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := primary ('^' unary)?
//! primary := number | ident | func '(' expr ')' | '(' expr ')'
//! ```
//!
//! `^` binds tighter than unary minus and is right-associative, so
//! `-2^2 = -4` and `2^3^2 = 512`. Variables resolve to slots of an [`Env`]
//! at parse time.

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

/// Limit on parenthesis/unary nesting seen by the parser.
const MAX_NESTING: usize = 256;
/// Limit on the depth of the resulting tree.
const MAX_TREE_DEPTH: usize = 1024;

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown identifier '{name}' at byte {offset}")]
    UnknownIdentifier { name: String, offset: usize },
}

impl ParseError {
    pub fn offset(&self) -> usize {
        match self {
            ParseError::Syntax { offset, .. } | ParseError::UnknownIdentifier { offset, .. } => *offset,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum EvalError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("log of non-positive value {0}")]
    LogDomain(f64),
    #[error("sqrt of negative value {0}")]
    SqrtDomain(f64),
    #[error("negative base {base} with non-integer exponent {exponent}")]
    NegativeBase { base: f64, exponent: f64 },
    #[error("no value bound for '{0}'")]
    Unbound(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
            BinOp::Pow => '^',
        }
    }

    pub fn apply(self, l: f64, r: f64) -> Result<f64, EvalError> {
        match self {
            BinOp::Add => Ok(l + r),
            BinOp::Sub => Ok(l - r),
            BinOp::Mul => Ok(l * r),
            BinOp::Div => {
                if r == 0.0 {
                    Err(EvalError::DivisionByZero)
                } else {
                    Ok(l / r)
                }
            }
            BinOp::Pow => {
                if l < 0.0 && r.fract() != 0.0 {
                    Err(EvalError::NegativeBase { base: l, exponent: r })
                } else if l == 0.0 && r < 0.0 {
                    Err(EvalError::DivisionByZero)
                } else {
                    Ok(l.powf(r))
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
    Abs,
}

impl Func {
    pub const ALL: [Func; 6] = [Func::Sin, Func::Cos, Func::Exp, Func::Log, Func::Sqrt, Func::Abs];

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        Func::ALL.into_iter().find(|f| f.name() == name)
    }

    pub fn apply(self, v: f64) -> Result<f64, EvalError> {
        match self {
            Func::Sin => Ok(v.sin()),
            Func::Cos => Ok(v.cos()),
            Func::Exp => Ok(v.exp()),
            Func::Log if v <= 0.0 => Err(EvalError::LogDomain(v)),
            Func::Log => Ok(v.ln()),
            Func::Sqrt if v < 0.0 => Err(EvalError::SqrtDomain(v)),
            Func::Sqrt => Ok(v.sqrt()),
            Func::Abs => Ok(v.abs()),
        }
    }
}

/// Declared variable names; the position of a name is its slot.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Env {
    names: Vec<String>,
}

impl Env {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_names<S: AsRef<str>>(names: &[S]) -> Self {
        let mut env = Self::new();
        for n in names {
            env.declare(n.as_ref());
        }
        env
    }

    /// The standard environment for a problem with `n` states and `m`
    /// controls: `x, y1..yn, Dy1..Dyn, yd1..ydn, Dyd1..Dydn, u1..um`,
    /// followed by `params`.
    pub fn problem<S: AsRef<str>>(n: usize, m: usize, params: &[S]) -> Self {
        let mut env = Self::new();
        env.declare("x");
        for prefix in ["y", "Dy", "yd", "Dyd"] {
            for k in 1..=n {
                env.declare(&format!("{prefix}{k}"));
            }
        }
        for k in 1..=m {
            env.declare(&format!("u{k}"));
        }
        for p in params {
            env.declare(p.as_ref());
        }
        env
    }

    /// Returns the slot of `name`, adding it if new.
    pub fn declare(&mut self, name: &str) -> usize {
        match self.slot(name) {
            Some(s) => s,
            None => {
                self.names.push(name.to_string());
                self.names.len() - 1
            }
        }
    }

    pub fn slot(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(f64),
    Var { slot: usize, name: String },
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

impl Expr {
    pub fn parse(source: &str, env: &Env) -> Result<Expr, ParseError> {
        let mut p = Parser { src: source.as_bytes(), pos: 0, env, nesting: 0 };
        let (e, _) = p.expr()?;
        p.skip_ws();
        if p.pos < p.src.len() {
            return Err(p.error("unexpected trailing input"));
        }
        Ok(e)
    }

    /// Evaluates with `vars[slot]` as the value of each variable.
    pub fn eval(&self, vars: &[f64]) -> Result<f64, EvalError> {
        match self {
            Expr::Num(v) => Ok(*v),
            Expr::Var { slot, name } => vars.get(*slot).copied().ok_or_else(|| EvalError::Unbound(name.clone())),
            Expr::Neg(e) => Ok(-e.eval(vars)?),
            Expr::Binary(op, l, r) => op.apply(l.eval(vars)?, r.eval(vars)?),
            Expr::Call(f, e) => f.apply(e.eval(vars)?),
        }
    }

    /// Evaluates with values looked up by name.
    pub fn evaluate(&self, bindings: &HashMap<String, f64>) -> Result<f64, EvalError> {
        match self {
            Expr::Num(v) => Ok(*v),
            Expr::Var { name, .. } => bindings.get(name).copied().ok_or_else(|| EvalError::Unbound(name.clone())),
            Expr::Neg(e) => Ok(-e.evaluate(bindings)?),
            Expr::Binary(op, l, r) => op.apply(l.evaluate(bindings)?, r.evaluate(bindings)?),
            Expr::Call(f, e) => f.apply(e.evaluate(bindings)?),
        }
    }

    /// Names of the variables referenced, in first-use order.
    pub fn variables(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Expr::Num(_) => {}
            Expr::Var { name, .. } => {
                if !out.contains(&name.as_str()) {
                    out.push(name);
                }
            }
            Expr::Neg(e) | Expr::Call(_, e) => e.collect_vars(out),
            Expr::Binary(_, l, r) => {
                l.collect_vars(out);
                r.collect_vars(out);
            }
        }
    }
}

/// Fully parenthesized, so printing and re-parsing gives the same tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{v:?}"),
            Expr::Var { name, .. } => f.write_str(name),
            Expr::Neg(e) => write!(f, "(-{e})"),
            Expr::Binary(op, l, r) => write!(f, "({l} {} {r})", op.symbol()),
            Expr::Call(func, e) => write!(f, "{}({e})", func.name()),
        }
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    env: &'a Env,
    nesting: usize,
}

type Parsed = (Expr, usize);

impl Parser<'_> {
    fn error(&self, message: &str) -> ParseError {
        ParseError::Syntax { offset: self.pos, message: message.to_string() }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn binary(&self, op: BinOp, l: Parsed, r: Parsed) -> Result<Parsed, ParseError> {
        let depth = l.1.max(r.1) + 1;
        if depth > MAX_TREE_DEPTH {
            return Err(self.error("expression too deep"));
        }
        Ok((Expr::Binary(op, Box::new(l.0), Box::new(r.0)), depth))
    }

    fn enter(&mut self) -> Result<(), ParseError> {
        self.nesting += 1;
        if self.nesting > MAX_NESTING {
            return Err(self.error("expression nested too deeply"));
        }
        Ok(())
    }

    fn expr(&mut self) -> Result<Parsed, ParseError> {
        let mut acc = self.term()?;
        loop {
            let op = match self.peek() {
                Some(b'+') => BinOp::Add,
                Some(b'-') => BinOp::Sub,
                _ => return Ok(acc),
            };
            self.pos += 1;
            let rhs = self.term()?;
            acc = self.binary(op, acc, rhs)?;
        }
    }

    fn term(&mut self) -> Result<Parsed, ParseError> {
        let mut acc = self.unary()?;
        loop {
            let op = match self.peek() {
                Some(b'*') => BinOp::Mul,
                Some(b'/') => BinOp::Div,
                _ => return Ok(acc),
            };
            self.pos += 1;
            let rhs = self.unary()?;
            acc = self.binary(op, acc, rhs)?;
        }
    }

    fn unary(&mut self) -> Result<Parsed, ParseError> {
        self.enter()?;
        let out = if self.peek() == Some(b'-') {
            self.pos += 1;
            let (e, d) = self.unary()?;
            if d + 1 > MAX_TREE_DEPTH {
                return Err(self.error("expression too deep"));
            }
            (Expr::Neg(Box::new(e)), d + 1)
        } else {
            self.power()?
        };
        self.nesting -= 1;
        Ok(out)
    }

    fn power(&mut self) -> Result<Parsed, ParseError> {
        let base = self.primary()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            let exp = self.unary()?;
            return self.binary(BinOp::Pow, base, exp);
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Parsed, ParseError> {
        match self.peek() {
            None => Err(self.error("unexpected end of input")),
            Some(b'(') => {
                self.pos += 1;
                self.enter()?;
                let inner = self.expr()?;
                self.nesting -= 1;
                self.expect_close()?;
                Ok(inner)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => self.ident(),
            Some(_) => Err(self.error("expected a number, variable, function or '('")),
        }
    }

    fn expect_close(&mut self) -> Result<(), ParseError> {
        if self.peek() == Some(b')') {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error("expected ')'"))
        }
    }

    fn number(&mut self) -> Result<Parsed, ParseError> {
        let start = self.pos;
        let digits = |p: &mut Self| {
            let s = p.pos;
            while p.pos < p.src.len() && p.src[p.pos].is_ascii_digit() {
                p.pos += 1;
            }
            p.pos - s
        };
        let mut count = digits(self);
        if self.src.get(self.pos) == Some(&b'.') {
            self.pos += 1;
            count += digits(self);
        }
        if count == 0 {
            self.pos = start;
            return Err(self.error("malformed number"));
        }
        if matches!(self.src.get(self.pos), Some(b'e' | b'E')) {
            let mark = self.pos;
            self.pos += 1;
            if matches!(self.src.get(self.pos), Some(b'+' | b'-')) {
                self.pos += 1;
            }
            if digits(self) == 0 {
                self.pos = mark;
                return Err(self.error("malformed exponent"));
            }
        }
        // The slice is ASCII by construction.
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap_or_default();
        match text.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok((Expr::Num(v), 1)),
            _ => Err(ParseError::Syntax { offset: start, message: format!("numeric literal '{text}' out of range") }),
        }
    }

    fn ident(&mut self) -> Result<Parsed, ParseError> {
        let start = self.pos;
        while self.pos < self.src.len() && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_') {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).unwrap_or_default().to_string();
        if let Some(func) = Func::from_name(&name) {
            if self.peek() != Some(b'(') {
                return Err(self.error(&format!("expected '(' after '{name}'")));
            }
            self.pos += 1;
            self.enter()?;
            let (arg, d) = self.expr()?;
            self.nesting -= 1;
            self.expect_close()?;
            if d + 1 > MAX_TREE_DEPTH {
                return Err(self.error("expression too deep"));
            }
            return Ok((Expr::Call(func, Box::new(arg)), d + 1));
        }
        match self.env.slot(&name) {
            Some(slot) => Ok((Expr::Var { slot, name }, 1)),
            None => Err(ParseError::UnknownIdentifier { name, offset: start }),
        }
    }
}
