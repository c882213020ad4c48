//! Piecewise-analytic functions of time.
//!
//! Interest rates, transition intensities and payment functions are written
//! in a small closed expression language:
//!
//! ```text
//! expr   := term (("+"|"-") term)* ;
//! term   := factor (("*"|"/") factor)* ;
//! factor := base ("^" factor)? ;
//! base   := number | "t" | "(" expr ")" | "-" base
//!         | "exp" "(" expr ")" | "ln" "(" expr ")" | "ind" "(" cmp ")" ;
//! cmp    := expr ("<"|"<="|">"|">=") expr ;
//! ```
//!
//! Both operands of a comparison must be affine in `t`, so every indicator
//! switches at most once and its threshold is known exactly. The thresholds
//! are the function's breakpoints; between consecutive breakpoints the
//! function is continuous.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("syntax error at byte {pos}: expected {expected}, found {found}")]
    Syntax {
        pos: usize,
        expected: String,
        found: String,
    },
    #[error("unknown identifier `{name}` at byte {pos}")]
    UnknownIdentifier { pos: usize, name: String },
    #[error("invalid numeric literal `{text}` at byte {pos}")]
    InvalidNumber { pos: usize, text: String },
    #[error("comparison operand at byte {pos} is not affine in t")]
    NotAffine { pos: usize },
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("domain error at t = {t}: {what}")]
pub struct EvalError {
    pub t: f64,
    pub what: String,
}

/// Which value to take at a point where the function may jump.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Side {
    /// The value exactly as written, with the comparison semantics of each
    /// indicator.
    #[default]
    Exact,
    /// Limit from the left, `f(t-)`.
    Below,
    /// Limit from the right, `f(t+)`.
    Above,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    fn symbol(self) -> &'static str {
        match self {
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }

    fn holds(self, a: f64, b: f64) -> bool {
        match self {
            CmpOp::Lt => a < b,
            CmpOp::Le => a <= b,
            CmpOp::Gt => a > b,
            CmpOp::Ge => a >= b,
        }
    }

    /// Truth value of `d op 0` when `d` is an infinitesimal of the given sign.
    fn holds_for_sign(self, sign: f64) -> bool {
        match self {
            CmpOp::Lt | CmpOp::Le => sign < 0.0,
            CmpOp::Gt | CmpOp::Ge => sign > 0.0,
        }
    }
}

/// `slope * t + intercept`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Affine {
    slope: f64,
    intercept: f64,
}

#[derive(Debug, Clone, PartialEq)]
struct Indicator {
    lhs: Expr,
    op: CmpOp,
    rhs: Expr,
    /// `lhs - rhs` in affine form.
    diff: Affine,
}

impl Indicator {
    fn threshold(&self) -> Option<f64> {
        if self.diff.slope == 0.0 {
            None
        } else {
            Some(-self.diff.intercept / self.diff.slope)
        }
    }

    fn eval(&self, t: f64, side: Side) -> Result<f64, EvalError> {
        if side != Side::Exact {
            if let Some(t0) = self.threshold() {
                if (t - t0).abs() <= 1e-12 * t0.abs().max(1.0) {
                    let sign = match side {
                        Side::Below => -self.diff.slope,
                        _ => self.diff.slope,
                    };
                    return Ok(if self.op.holds_for_sign(sign) {
                        1.0
                    } else {
                        0.0
                    });
                }
            }
        }
        let a = self.lhs.eval(t, side)?;
        let b = self.rhs.eval(t, side)?;
        Ok(if self.op.holds(a, b) { 1.0 } else { 0.0 })
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Expr {
    Num(f64),
    Var,
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Exp(Box<Expr>),
    Ln(Box<Expr>),
    Ind(Box<Indicator>),
}

fn domain(t: f64, what: impl Into<String>) -> EvalError {
    EvalError {
        t,
        what: what.into(),
    }
}

impl Expr {
    fn eval(&self, t: f64, side: Side) -> Result<f64, EvalError> {
        let v = match self {
            Expr::Num(x) => *x,
            Expr::Var => t,
            Expr::Neg(a) => -a.eval(t, side)?,
            Expr::Add(a, b) => a.eval(t, side)? + b.eval(t, side)?,
            Expr::Sub(a, b) => a.eval(t, side)? - b.eval(t, side)?,
            Expr::Mul(a, b) => {
                // Masked factors are evaluated first so that a switched-off
                // indicator never lets the other factor raise a domain error.
                if let Expr::Ind(ind) = b.as_ref() {
                    let m = ind.eval(t, side)?;
                    if m == 0.0 {
                        return Ok(0.0);
                    }
                    return Ok(a.eval(t, side)? * m);
                }
                let x = a.eval(t, side)?;
                if x == 0.0 && matches!(a.as_ref(), Expr::Ind(_)) {
                    return Ok(0.0);
                }
                x * b.eval(t, side)?
            }
            Expr::Div(a, b) => {
                let d = b.eval(t, side)?;
                if d == 0.0 {
                    return Err(domain(t, "division by zero"));
                }
                a.eval(t, side)? / d
            }
            Expr::Pow(a, b) => {
                let base = a.eval(t, side)?;
                let ex = b.eval(t, side)?;
                if ex.fract() == 0.0 && ex.abs() <= i32::MAX as f64 {
                    if base == 0.0 && ex < 0.0 {
                        return Err(domain(t, "zero raised to a negative power"));
                    }
                    base.powi(ex as i32)
                } else if base > 0.0 {
                    base.powf(ex)
                } else {
                    return Err(domain(
                        t,
                        format!("non-positive base {base} with non-integer exponent {ex}"),
                    ));
                }
            }
            Expr::Exp(a) => a.eval(t, side)?.exp(),
            Expr::Ln(a) => {
                let x = a.eval(t, side)?;
                if x <= 0.0 {
                    return Err(domain(t, format!("ln of non-positive value {x}")));
                }
                x.ln()
            }
            Expr::Ind(ind) => ind.eval(t, side)?,
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(domain(t, "non-finite value"))
        }
    }

    /// Affine form of the expression, if it has one.
    fn affine(&self) -> Option<Affine> {
        let constant = |c: f64| Affine {
            slope: 0.0,
            intercept: c,
        };
        match self {
            Expr::Num(x) => Some(constant(*x)),
            Expr::Var => Some(Affine {
                slope: 1.0,
                intercept: 0.0,
            }),
            Expr::Neg(a) => a.affine().map(|f| Affine {
                slope: -f.slope,
                intercept: -f.intercept,
            }),
            Expr::Add(a, b) | Expr::Sub(a, b) => {
                let (fa, fb) = (a.affine()?, b.affine()?);
                let sign = if matches!(self, Expr::Sub(..)) {
                    -1.0
                } else {
                    1.0
                };
                Some(Affine {
                    slope: fa.slope + sign * fb.slope,
                    intercept: fa.intercept + sign * fb.intercept,
                })
            }
            Expr::Mul(a, b) => {
                let (fa, fb) = (a.affine()?, b.affine()?);
                if fa.slope == 0.0 {
                    Some(Affine {
                        slope: fa.intercept * fb.slope,
                        intercept: fa.intercept * fb.intercept,
                    })
                } else if fb.slope == 0.0 {
                    Some(Affine {
                        slope: fb.intercept * fa.slope,
                        intercept: fb.intercept * fa.intercept,
                    })
                } else {
                    None
                }
            }
            Expr::Div(a, b) => {
                let (fa, fb) = (a.affine()?, b.affine()?);
                if fb.slope != 0.0 || fb.intercept == 0.0 {
                    return None;
                }
                Some(Affine {
                    slope: fa.slope / fb.intercept,
                    intercept: fa.intercept / fb.intercept,
                })
            }
            // Anything else is affine only when it does not involve t.
            other => {
                if other.mentions_t() {
                    None
                } else {
                    other.eval(0.0, Side::Exact).ok().map(constant)
                }
            }
        }
    }

    fn mentions_t(&self) -> bool {
        match self {
            Expr::Num(_) => false,
            Expr::Var => true,
            Expr::Neg(a) | Expr::Exp(a) | Expr::Ln(a) => a.mentions_t(),
            Expr::Add(a, b)
            | Expr::Sub(a, b)
            | Expr::Mul(a, b)
            | Expr::Div(a, b)
            | Expr::Pow(a, b) => a.mentions_t() || b.mentions_t(),
            Expr::Ind(ind) => ind.lhs.mentions_t() || ind.rhs.mentions_t(),
        }
    }

    fn collect_thresholds(&self, out: &mut Vec<f64>) {
        match self {
            Expr::Num(_) | Expr::Var => {}
            Expr::Neg(a) | Expr::Exp(a) | Expr::Ln(a) => a.collect_thresholds(out),
            Expr::Add(a, b)
            | Expr::Sub(a, b)
            | Expr::Mul(a, b)
            | Expr::Div(a, b)
            | Expr::Pow(a, b) => {
                a.collect_thresholds(out);
                b.collect_thresholds(out);
            }
            Expr::Ind(ind) => {
                ind.lhs.collect_thresholds(out);
                ind.rhs.collect_thresholds(out);
                out.extend(ind.threshold());
            }
        }
    }
}

impl fmt::Display for Expr {
    /// Fully parenthesised, so that re-parsing reproduces the same tree.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(x) => write!(f, "{x:?}"),
            Expr::Var => f.write_str("t"),
            Expr::Neg(a) => write!(f, "-({a})"),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "({a} * {b})"),
            Expr::Div(a, b) => write!(f, "({a} / {b})"),
            Expr::Pow(a, b) => write!(f, "(({a}) ^ ({b}))"),
            Expr::Exp(a) => write!(f, "exp({a})"),
            Expr::Ln(a) => write!(f, "ln({a})"),
            Expr::Ind(ind) => write!(f, "ind({} {} {})", ind.lhs, ind.op.symbol(), ind.rhs),
        }
    }
}

/// A parsed time function together with its breakpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeFunction {
    expr: Expr,
    breakpoints: Vec<f64>,
}

impl TimeFunction {
    pub fn parse(src: &str) -> Result<Self, ParseError> {
        let expr = Parser::new(src)?.parse_all()?;
        let mut breakpoints = Vec::new();
        expr.collect_thresholds(&mut breakpoints);
        breakpoints.sort_by(f64::total_cmp);
        breakpoints.dedup();
        Ok(TimeFunction { expr, breakpoints })
    }

    pub fn constant(value: f64) -> Self {
        TimeFunction {
            expr: Expr::Num(value),
            breakpoints: Vec::new(),
        }
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    pub fn eval(&self, t: f64) -> Result<f64, EvalError> {
        self.expr.eval(t, Side::Exact)
    }

    pub fn eval_side(&self, t: f64, side: Side) -> Result<f64, EvalError> {
        self.expr.eval(t, side)
    }

    /// Every indicator threshold, sorted and deduplicated.
    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    /// Breakpoints strictly inside `(s, t)`.
    pub fn breakpoints_in(&self, s: f64, t: f64) -> Vec<f64> {
        self.breakpoints
            .iter()
            .copied()
            .filter(|&b| b > s && b < t)
            .collect()
    }

    /// True when the expression is the literal constant zero.
    pub fn is_zero(&self) -> bool {
        matches!(self.expr, Expr::Num(x) if x == 0.0)
    }
}

impl fmt::Display for TimeFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.expr.fmt(f)
    }
}

impl std::str::FromStr for TimeFunction {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TimeFunction::parse(s)
    }
}

pub fn parse_timefun(src: &str) -> Result<TimeFunction, ParseError> {
    TimeFunction::parse(src)
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Cmp(CmpOp),
    End,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Num(x) => write!(f, "number {x}"),
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Plus => f.write_str("`+`"),
            Tok::Minus => f.write_str("`-`"),
            Tok::Star => f.write_str("`*`"),
            Tok::Slash => f.write_str("`/`"),
            Tok::Caret => f.write_str("`^`"),
            Tok::LParen => f.write_str("`(`"),
            Tok::RParen => f.write_str("`)`"),
            Tok::Cmp(op) => write!(f, "`{}`", op.symbol()),
            Tok::End => f.write_str("end of input"),
        }
    }
}

fn lex(src: &str) -> Result<Vec<(usize, Tok)>, ParseError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        match c {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
                continue;
            }
            b'+' => out.push((start, Tok::Plus)),
            b'-' => out.push((start, Tok::Minus)),
            b'*' => out.push((start, Tok::Star)),
            b'/' => out.push((start, Tok::Slash)),
            b'^' => out.push((start, Tok::Caret)),
            b'(' => out.push((start, Tok::LParen)),
            b')' => out.push((start, Tok::RParen)),
            b'<' | b'>' => {
                let eq = bytes.get(i + 1) == Some(&b'=');
                let op = match (c, eq) {
                    (b'<', false) => CmpOp::Lt,
                    (b'<', true) => CmpOp::Le,
                    (_, false) => CmpOp::Gt,
                    (_, true) => CmpOp::Ge,
                };
                out.push((start, Tok::Cmp(op)));
                i += if eq { 2 } else { 1 };
                continue;
            }
            b'0'..=b'9' | b'.' => {
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    i += 1;
                    if i < bytes.len() && (bytes[i] == b'+' || bytes[i] == b'-') {
                        i += 1;
                    }
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
                // Trailing identifier characters belong to the bad literal.
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                let text = &src[start..i];
                let value: f64 = text.parse().map_err(|_| ParseError::InvalidNumber {
                    pos: start,
                    text: text.to_string(),
                })?;
                out.push((start, Tok::Num(value)));
                continue;
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push((start, Tok::Ident(src[start..i].to_string())));
                continue;
            }
            _ => {
                let ch = src[start..].chars().next().unwrap_or('?');
                return Err(ParseError::Syntax {
                    pos: start,
                    expected: "an expression".into(),
                    found: format!("character `{ch}`"),
                });
            }
        }
        i += 1;
    }
    out.push((src.len(), Tok::End));
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    at: usize,
}

impl Parser {
    fn new(src: &str) -> Result<Self, ParseError> {
        Ok(Parser {
            toks: lex(src)?,
            at: 0,
        })
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.at].1
    }

    fn pos(&self) -> usize {
        self.toks[self.at].0
    }

    fn bump(&mut self) -> Tok {
        let tok = self.toks[self.at].1.clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        tok
    }

    fn fail<T>(&self, expected: &str) -> Result<T, ParseError> {
        Err(ParseError::Syntax {
            pos: self.pos(),
            expected: expected.to_string(),
            found: self.peek().to_string(),
        })
    }

    fn expect(&mut self, tok: Tok) -> Result<(), ParseError> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            self.fail(&tok.to_string())
        }
    }

    fn parse_all(mut self) -> Result<Expr, ParseError> {
        let e = self.expr()?;
        if *self.peek() != Tok::End {
            return self.fail("an operator or end of input");
        }
        Ok(e)
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Tok::Plus => {
                    self.bump();
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Tok::Minus => {
                    self.bump();
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.factor()?;
        loop {
            match self.peek() {
                Tok::Star => {
                    self.bump();
                    lhs = Expr::Mul(Box::new(lhs), Box::new(self.factor()?));
                }
                Tok::Slash => {
                    self.bump();
                    lhs = Expr::Div(Box::new(lhs), Box::new(self.factor()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn factor(&mut self) -> Result<Expr, ParseError> {
        let base = self.base()?;
        if *self.peek() == Tok::Caret {
            self.bump();
            let exponent = self.factor()?;
            return Ok(Expr::Pow(Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn base(&mut self) -> Result<Expr, ParseError> {
        let pos = self.pos();
        if !matches!(
            self.peek(),
            Tok::Num(_) | Tok::Minus | Tok::LParen | Tok::Ident(_)
        ) {
            return self.fail("a number, `t`, `(`, `-`, `exp`, `ln` or `ind`");
        }
        match self.bump() {
            Tok::Num(x) => Ok(Expr::Num(x)),
            Tok::Minus => Ok(Expr::Neg(Box::new(self.base()?))),
            Tok::LParen => {
                let e = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            Tok::Ident(name) => match name.as_str() {
                "t" => Ok(Expr::Var),
                "exp" | "ln" => {
                    self.expect(Tok::LParen)?;
                    let arg = Box::new(self.expr()?);
                    self.expect(Tok::RParen)?;
                    Ok(if name == "exp" {
                        Expr::Exp(arg)
                    } else {
                        Expr::Ln(arg)
                    })
                }
                "ind" => {
                    self.expect(Tok::LParen)?;
                    let ind = self.comparison()?;
                    self.expect(Tok::RParen)?;
                    Ok(Expr::Ind(Box::new(ind)))
                }
                _ => Err(ParseError::UnknownIdentifier { pos, name }),
            },
            _ => unreachable!(),
        }
    }

    fn comparison(&mut self) -> Result<Indicator, ParseError> {
        let lhs_pos = self.pos();
        let lhs = self.expr()?;
        let op = match self.peek() {
            Tok::Cmp(op) => *op,
            _ => return self.fail("a comparison operator"),
        };
        self.bump();
        let rhs_pos = self.pos();
        let rhs = self.expr()?;
        let fa = lhs.affine().ok_or(ParseError::NotAffine { pos: lhs_pos })?;
        let fb = rhs.affine().ok_or(ParseError::NotAffine { pos: rhs_pos })?;
        Ok(Indicator {
            lhs,
            op,
            rhs,
            diff: Affine {
                slope: fa.slope - fb.slope,
                intercept: fa.intercept - fb.intercept,
            },
        })
    }
}
