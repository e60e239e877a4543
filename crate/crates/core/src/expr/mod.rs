//! Closed-form coefficient functions of chart coordinates.
//!
//! Every geometric object in this crate (connection coefficients, metric
//! entries, gauge transformations) is a matrix of [`Expr`] values. An
//! expression is an immutable, reference-counted DAG over real constants,
//! the coordinate variables `x1..x9`, arithmetic, `^`, and the functions
//! `exp`, `log`, `sin`, `cos`, `sqrt`.
//!
//! Constructors fold constants and drop neutral elements so derived
//! expressions (duals, inverses, curvature) stay small. Differentiation is
//! exact and shares structure: a subexpression referenced twice is
//! differentiated once.
//!
//! Batch evaluation goes through [`Tape`], which compiles a set of
//! expressions into a flat instruction list with common subexpressions
//! merged. Tapes evaluate either at a point (`f64`) or as truncated Taylor
//! series ([`jet::Jet`]), which is how higher covariant derivatives are
//! obtained without growing the symbolic trees.

pub mod jet;
mod parser;
mod tape;

use std::collections::HashMap;
use std::fmt;
use std::ops;
use std::sync::Arc;

pub use parser::{parse, parse_in_dim, ParseError};
pub use tape::Tape;

/// Largest coordinate index accepted by the grammar (`x1..x9`).
pub const MAX_VARS: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Exp,
    Log,
    Sin,
    Cos,
    Sqrt,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Sqrt => "sqrt",
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "sqrt" => Func::Sqrt,
            _ => return None,
        })
    }
}

#[derive(Debug)]
pub enum Node {
    Const(f64),
    /// Zero-based coordinate index; `Var(0)` prints as `x1`.
    Var(usize),
    Neg(Expr),
    Add(Expr, Expr),
    Sub(Expr, Expr),
    Mul(Expr, Expr),
    Div(Expr, Expr),
    Pow(Expr, Expr),
    Call(Func, Expr),
}

/// A closed-form real function of chart coordinates.
#[derive(Clone)]
pub struct Expr(Arc<Node>);

/// Evaluation failure, naming the offending subexpression.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("division by zero in `{subtree}`")]
    DivisionByZero { subtree: String },
    #[error("{op} undefined for argument {arg} in `{subtree}`")]
    Domain {
        op: &'static str,
        arg: f64,
        subtree: String,
    },
    #[error("non-finite value in `{subtree}`")]
    NonFinite { subtree: String },
    #[error("expression uses x{index} but the point has {dim} coordinates")]
    MissingCoordinate { index: usize, dim: usize },
}

impl Expr {
    fn new(node: Node) -> Self {
        Expr(Arc::new(node))
    }

    pub fn node(&self) -> &Node {
        &self.0
    }

    pub fn constant(value: f64) -> Self {
        Expr::new(Node::Const(value))
    }

    pub fn zero() -> Self {
        Expr::constant(0.0)
    }

    pub fn one() -> Self {
        Expr::constant(1.0)
    }

    /// Coordinate `x{index+1}`.
    pub fn var(index: usize) -> Self {
        assert!(index < MAX_VARS, "coordinate index {index} out of range");
        Expr::new(Node::Var(index))
    }

    pub fn as_const(&self) -> Option<f64> {
        match *self.0 {
            Node::Const(c) => Some(c),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.as_const() == Some(0.0)
    }

    pub fn ptr_eq(&self, other: &Expr) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
    }

    pub fn pow(&self, exponent: &Expr) -> Expr {
        match (self.as_const(), exponent.as_const()) {
            (_, Some(e)) if e == 0.0 => Expr::one(),
            (_, Some(e)) if e == 1.0 => self.clone(),
            (Some(b), Some(e)) => fold(b.powf(e)).unwrap_or_else(|| self.pow_raw(exponent)),
            (Some(b), _) if b == 1.0 => Expr::one(),
            _ => self.pow_raw(exponent),
        }
    }

    fn pow_raw(&self, exponent: &Expr) -> Expr {
        Expr::new(Node::Pow(self.clone(), exponent.clone()))
    }

    pub fn powi(&self, n: i32) -> Expr {
        self.pow(&Expr::constant(n as f64))
    }

    pub fn call(func: Func, arg: &Expr) -> Expr {
        if let Some(a) = arg.as_const() {
            if let Ok(v) = apply_func(func, a) {
                if let Some(folded) = fold(v) {
                    return folded;
                }
            }
        }
        Expr::new(Node::Call(func, arg.clone()))
    }

    pub fn exp(&self) -> Expr {
        Expr::call(Func::Exp, self)
    }

    pub fn ln(&self) -> Expr {
        Expr::call(Func::Log, self)
    }

    pub fn sin(&self) -> Expr {
        Expr::call(Func::Sin, self)
    }

    pub fn cos(&self) -> Expr {
        Expr::call(Func::Cos, self)
    }

    pub fn sqrt(&self) -> Expr {
        Expr::call(Func::Sqrt, self)
    }

    /// Highest coordinate index referenced plus one (0 for constants).
    pub fn arity(&self) -> usize {
        let mut seen = HashMap::new();
        arity_rec(self, &mut seen)
    }

    /// Number of distinct DAG nodes.
    pub fn node_count(&self) -> usize {
        let mut seen = std::collections::HashSet::new();
        let mut stack = vec![self.clone()];
        while let Some(e) = stack.pop() {
            if !seen.insert(Arc::as_ptr(&e.0) as usize) {
                continue;
            }
            e.for_each_child(|c| stack.push(c.clone()));
        }
        seen.len()
    }

    fn for_each_child(&self, mut f: impl FnMut(&Expr)) {
        match &*self.0 {
            Node::Const(_) | Node::Var(_) => {}
            Node::Neg(a) | Node::Call(_, a) => f(a),
            Node::Add(a, b)
            | Node::Sub(a, b)
            | Node::Mul(a, b)
            | Node::Div(a, b)
            | Node::Pow(a, b) => {
                f(a);
                f(b);
            }
        }
    }

    /// Evaluate at a point. Compiles a one-off tape; use [`Tape`] directly
    /// when evaluating many expressions or many points.
    pub fn eval(&self, x: &[f64]) -> Result<f64, EvalError> {
        let tape = Tape::compile(std::slice::from_ref(self));
        Ok(tape.eval(x)?[0])
    }

    /// Exact partial derivative with respect to `x{index+1}`.
    pub fn differentiate(&self, index: usize) -> Expr {
        let mut memo = HashMap::new();
        diff_rec(self, index, &mut memo)
    }

    /// Partial derivatives in every direction `0..dim`, sharing one memo per
    /// direction.
    pub fn gradient(&self, dim: usize) -> Vec<Expr> {
        (0..dim).map(|i| self.differentiate(i)).collect()
    }
}

/// Keep folded constants only when they are finite and exactly printable.
fn fold(v: f64) -> Option<Expr> {
    v.is_finite().then(|| Expr::constant(v))
}

fn arity_rec(e: &Expr, seen: &mut HashMap<usize, usize>) -> usize {
    let key = Arc::as_ptr(&e.0) as usize;
    if let Some(&a) = seen.get(&key) {
        return a;
    }
    let a = match &*e.0 {
        Node::Const(_) => 0,
        Node::Var(i) => i + 1,
        _ => {
            let mut best = 0;
            e.for_each_child(|c| best = best.max(arity_rec(c, seen)));
            best
        }
    };
    seen.insert(key, a);
    a
}

pub(crate) fn apply_func(func: Func, a: f64) -> Result<f64, &'static str> {
    match func {
        Func::Exp => Ok(a.exp()),
        Func::Log if a > 0.0 => Ok(a.ln()),
        Func::Log => Err("log"),
        Func::Sin => Ok(a.sin()),
        Func::Cos => Ok(a.cos()),
        Func::Sqrt if a >= 0.0 => Ok(a.sqrt()),
        Func::Sqrt => Err("sqrt"),
    }
}

fn diff_rec(e: &Expr, index: usize, memo: &mut HashMap<usize, Expr>) -> Expr {
    let key = Arc::as_ptr(&e.0) as usize;
    if let Some(d) = memo.get(&key) {
        return d.clone();
    }
    let d = match &*e.0 {
        Node::Const(_) => Expr::zero(),
        Node::Var(i) => {
            if *i == index {
                Expr::one()
            } else {
                Expr::zero()
            }
        }
        Node::Neg(a) => -diff_rec(a, index, memo),
        Node::Add(a, b) => diff_rec(a, index, memo) + diff_rec(b, index, memo),
        Node::Sub(a, b) => diff_rec(a, index, memo) - diff_rec(b, index, memo),
        Node::Mul(a, b) => {
            let da = diff_rec(a, index, memo);
            let db = diff_rec(b, index, memo);
            &da * b + a * &db
        }
        Node::Div(a, b) => {
            let da = diff_rec(a, index, memo);
            let db = diff_rec(b, index, memo);
            if db.is_zero() {
                &da / b
            } else {
                (&da * b - a * &db) / b.powi(2)
            }
        }
        Node::Pow(a, b) => {
            let da = diff_rec(a, index, memo);
            let db = diff_rec(b, index, memo);
            match b.as_const() {
                Some(c) => Expr::constant(c) * a.pow(&Expr::constant(c - 1.0)) * da,
                None => {
                    // d(a^b) = a^b (b' log a + b a'/a)
                    let log_term = &db * &a.ln();
                    let ratio_term = if da.is_zero() {
                        Expr::zero()
                    } else {
                        b * &da / a
                    };
                    e * &(log_term + ratio_term)
                }
            }
        }
        Node::Call(func, a) => {
            let da = diff_rec(a, index, memo);
            if da.is_zero() {
                Expr::zero()
            } else {
                let outer = match func {
                    Func::Exp => e.clone(),
                    Func::Log => Expr::one() / a,
                    Func::Sin => a.cos(),
                    Func::Cos => -a.sin(),
                    Func::Sqrt => Expr::constant(0.5) / e,
                };
                outer * da
            }
        }
    };
    memo.insert(key, d.clone());
    d
}

impl ops::Neg for &Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        match &*self.0 {
            Node::Const(c) => Expr::constant(-c),
            Node::Neg(a) => a.clone(),
            _ => Expr::new(Node::Neg(self.clone())),
        }
    }
}

impl ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        -&self
    }
}

impl ops::Add for &Expr {
    type Output = Expr;
    fn add(self, rhs: &Expr) -> Expr {
        match (self.as_const(), rhs.as_const()) {
            (Some(a), Some(b)) => Expr::constant(a + b),
            (Some(a), _) if a == 0.0 => rhs.clone(),
            (_, Some(b)) if b == 0.0 => self.clone(),
            _ => match &*rhs.0 {
                Node::Neg(b) => Expr::new(Node::Sub(self.clone(), b.clone())),
                _ => Expr::new(Node::Add(self.clone(), rhs.clone())),
            },
        }
    }
}

impl ops::Sub for &Expr {
    type Output = Expr;
    fn sub(self, rhs: &Expr) -> Expr {
        match (self.as_const(), rhs.as_const()) {
            (Some(a), Some(b)) => Expr::constant(a - b),
            (Some(a), _) if a == 0.0 => -rhs,
            (_, Some(b)) if b == 0.0 => self.clone(),
            _ => match &*rhs.0 {
                Node::Neg(b) => Expr::new(Node::Add(self.clone(), b.clone())),
                _ => Expr::new(Node::Sub(self.clone(), rhs.clone())),
            },
        }
    }
}

impl ops::Mul for &Expr {
    type Output = Expr;
    fn mul(self, rhs: &Expr) -> Expr {
        match (self.as_const(), rhs.as_const()) {
            (Some(a), Some(b)) => Expr::constant(a * b),
            (Some(a), _) if a == 0.0 => Expr::zero(),
            (_, Some(b)) if b == 0.0 => Expr::zero(),
            (Some(a), _) if a == 1.0 => rhs.clone(),
            (_, Some(b)) if b == 1.0 => self.clone(),
            (Some(a), _) if a == -1.0 => -rhs,
            (_, Some(b)) if b == -1.0 => -self,
            _ => Expr::new(Node::Mul(self.clone(), rhs.clone())),
        }
    }
}

impl ops::Div for &Expr {
    type Output = Expr;
    fn div(self, rhs: &Expr) -> Expr {
        match (self.as_const(), rhs.as_const()) {
            (Some(a), Some(b)) if b != 0.0 => Expr::constant(a / b),
            (Some(a), _) if a == 0.0 => Expr::zero(),
            (_, Some(b)) if b == 1.0 => self.clone(),
            (_, Some(b)) if b == -1.0 => -self,
            _ => Expr::new(Node::Div(self.clone(), rhs.clone())),
        }
    }
}

macro_rules! forward_owned {
    ($trait:ident, $method:ident) => {
        impl ops::$trait<Expr> for Expr {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                (&self).$method(&rhs)
            }
        }
        impl ops::$trait<&Expr> for Expr {
            type Output = Expr;
            fn $method(self, rhs: &Expr) -> Expr {
                (&self).$method(rhs)
            }
        }
        impl ops::$trait<Expr> for &Expr {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                self.$method(&rhs)
            }
        }
    };
}

forward_owned!(Add, add);
forward_owned!(Sub, sub);
forward_owned!(Mul, mul);
forward_owned!(Div, div);

impl std::iter::Sum for Expr {
    fn sum<I: Iterator<Item = Expr>>(iter: I) -> Expr {
        iter.fold(Expr::zero(), |acc, e| acc + e)
    }
}

impl From<f64> for Expr {
    fn from(v: f64) -> Self {
        Expr::constant(v)
    }
}

impl std::str::FromStr for Expr {
    type Err = ParseError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse(s)
    }
}

// Printing follows the grammar's precedence levels so that the output parses
// back to an equivalent tree. Note `-` binds to a base only, so `-x1^2` would
// read as `(-x1)^2`; negations under `^` are therefore parenthesized.
#[derive(Clone, Copy, PartialEq, PartialOrd)]
enum Level {
    Expr,
    Term,
    Factor,
    Base,
}

fn write_expr(e: &Expr, level: Level, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    match &*e.0 {
        Node::Const(c) => {
            if c.is_sign_negative() {
                write!(f, "-{}", -c)
            } else {
                write!(f, "{c}")
            }
        }
        Node::Var(i) => write!(f, "x{}", i + 1),
        Node::Neg(a) => {
            f.write_str("-")?;
            write_expr(a, Level::Base, f)
        }
        Node::Add(a, b) | Node::Sub(a, b) => {
            let op = if matches!(&*e.0, Node::Add(..)) { " + " } else { " - " };
            wrap(level > Level::Expr, f, |f| {
                write_expr(a, Level::Expr, f)?;
                f.write_str(op)?;
                write_expr(b, Level::Term, f)
            })
        }
        Node::Mul(a, b) | Node::Div(a, b) => {
            let op = if matches!(&*e.0, Node::Mul(..)) { " * " } else { " / " };
            wrap(level > Level::Term, f, |f| {
                write_expr(a, Level::Term, f)?;
                f.write_str(op)?;
                write_expr(b, Level::Factor, f)
            })
        }
        Node::Pow(a, b) => wrap(level > Level::Factor, f, |f| {
            write_base(a, f)?;
            f.write_str("^")?;
            write_expr(b, Level::Factor, f)
        }),
        Node::Call(func, a) => {
            write!(f, "{}(", func.name())?;
            write_expr(a, Level::Expr, f)?;
            f.write_str(")")
        }
    }
}

/// The base of a power must not start with a bare minus sign.
fn write_base(e: &Expr, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    let negative_leading = match &*e.0 {
        Node::Neg(_) => true,
        Node::Const(c) => c.is_sign_negative(),
        _ => false,
    };
    if negative_leading {
        wrap(true, f, |f| write_expr(e, Level::Expr, f))
    } else {
        write_expr(e, Level::Base, f)
    }
}

fn wrap(
    paren: bool,
    f: &mut fmt::Formatter<'_>,
    body: impl FnOnce(&mut fmt::Formatter<'_>) -> fmt::Result,
) -> fmt::Result {
    if paren {
        f.write_str("(")?;
        body(f)?;
        f.write_str(")")
    } else {
        body(f)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_expr(self, Level::Expr, f)
    }
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Expr({self})")
    }
}

/// Display text of a subtree, shortened for error messages.
pub(crate) fn excerpt(e: &Expr) -> String {
    const LIMIT: usize = 160;
    let s = e.to_string();
    if s.len() <= LIMIT {
        s
    } else {
        let cut = (0..=LIMIT).rev().find(|&i| s.is_char_boundary(i)).unwrap_or(0);
        format!("{}...", &s[..cut])
    }
}
