//! Real-valued arithmetic expressions.
//!
//! An [`Expr`] is an immutable tree over named variables. The text grammar is
//! the usual one: `^` binds tighter than unary minus, which binds tighter than
//! `*` and `/`, which bind tighter than `+` and `-`. `^` is right associative,
//! the other binary operators are left associative. The unary functions are
//! `sin`, `cos`, `exp`, `log`, `sqrt` and `neg`.
//!
//! Expressions print back in the same grammar, so `parse(&e.to_string())`
//! evaluates like `e`.

mod diff;
mod equiv;
mod parse;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

pub use equiv::{equivalence, Equivalence, EQUIVALENCE_POINTS};
pub use parse::{parse, ParseError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
    Neg,
}

impl Func {
    pub const ALL: [Func; 6] = [
        Func::Sin,
        Func::Cos,
        Func::Exp,
        Func::Log,
        Func::Sqrt,
        Func::Neg,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Neg => "neg",
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        Func::ALL.into_iter().find(|f| f.name() == name)
    }

    fn apply(self, x: f64) -> Result<f64, EvalError> {
        let value = match self {
            Func::Sin => x.sin(),
            Func::Cos => x.cos(),
            Func::Exp => x.exp(),
            Func::Neg => -x,
            Func::Log => {
                if x <= 0.0 {
                    return Err(EvalError::domain(
                        "log",
                        format!("argument {x} is not positive"),
                    ));
                }
                x.ln()
            }
            Func::Sqrt => {
                if x < 0.0 {
                    return Err(EvalError::domain(
                        "sqrt",
                        format!("argument {x} is negative"),
                    ));
                }
                x.sqrt()
            }
        };
        finite(self.name(), value)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    pub fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
            BinOp::Pow => '^',
        }
    }

    fn apply(self, a: f64, b: f64) -> Result<f64, EvalError> {
        let value = match self {
            BinOp::Add => a + b,
            BinOp::Sub => a - b,
            BinOp::Mul => a * b,
            BinOp::Div => {
                if b == 0.0 {
                    return Err(EvalError::domain("/", format!("division of {a} by zero")));
                }
                a / b
            }
            BinOp::Pow => {
                if a == 0.0 && b < 0.0 {
                    return Err(EvalError::domain(
                        "^",
                        format!("0 raised to negative power {b}"),
                    ));
                }
                if a < 0.0 && b.fract() != 0.0 {
                    return Err(EvalError::domain(
                        "^",
                        format!("negative base {a} with non-integer exponent {b}"),
                    ));
                }
                a.powf(b)
            }
        };
        finite(
            match self {
                BinOp::Add => "+",
                BinOp::Sub => "-",
                BinOp::Mul => "*",
                BinOp::Div => "/",
                BinOp::Pow => "^",
            },
            value,
        )
    }

    fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div => 2,
            BinOp::Pow => 4,
        }
    }
}

fn finite(op: &'static str, value: f64) -> Result<f64, EvalError> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(EvalError::domain(
            op,
            format!("result {value} is not finite"),
        ))
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("unbound variable `{0}`")]
    Unbound(String),
    #[error("domain error in `{op}`: {detail}")]
    Domain { op: &'static str, detail: String },
}

impl EvalError {
    fn domain(op: &'static str, detail: String) -> Self {
        EvalError::Domain { op, detail }
    }
}

/// Values for the free variables of an expression.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Assignment {
    values: BTreeMap<String, f64>,
}

impl Assignment {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: impl Into<String>, value: f64) -> Self {
        self.set(name, value);
        self
    }

    pub fn set(&mut self, name: impl Into<String>, value: f64) {
        self.values.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.values.get(name).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.values.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

impl<S: Into<String>> FromIterator<(S, f64)> for Assignment {
    fn from_iter<I: IntoIterator<Item = (S, f64)>>(iter: I) -> Self {
        Assignment {
            values: iter.into_iter().map(|(k, v)| (k.into(), v)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(String),
    Unary(Func, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn constant(value: f64) -> Expr {
        Expr::Const(value)
    }

    pub fn var(name: impl Into<String>) -> Expr {
        Expr::Var(name.into())
    }

    pub fn zero() -> Expr {
        Expr::Const(0.0)
    }

    pub fn one() -> Expr {
        Expr::Const(1.0)
    }

    pub fn unary(func: Func, arg: Expr) -> Expr {
        Expr::Unary(func, Box::new(arg))
    }

    pub fn binary(op: BinOp, lhs: Expr, rhs: Expr) -> Expr {
        Expr::Binary(op, Box::new(lhs), Box::new(rhs))
    }

    pub fn pow(self, exponent: Expr) -> Expr {
        Expr::binary(BinOp::Pow, self, exponent)
    }

    pub fn powi(self, exponent: i32) -> Expr {
        self.pow(Expr::Const(exponent as f64))
    }

    pub fn sin(self) -> Expr {
        Expr::unary(Func::Sin, self)
    }

    pub fn cos(self) -> Expr {
        Expr::unary(Func::Cos, self)
    }

    pub fn exp(self) -> Expr {
        Expr::unary(Func::Exp, self)
    }

    pub fn log(self) -> Expr {
        Expr::unary(Func::Log, self)
    }

    pub fn sqrt(self) -> Expr {
        Expr::unary(Func::Sqrt, self)
    }

    /// Sum of the given terms; `0` when empty.
    pub fn sum<I: IntoIterator<Item = Expr>>(terms: I) -> Expr {
        terms
            .into_iter()
            .reduce(|acc, term| acc + term)
            .unwrap_or_else(Expr::zero)
    }

    pub fn as_const(&self) -> Option<f64> {
        match self {
            Expr::Const(c) => Some(*c),
            _ => None,
        }
    }

    pub fn is_const(&self, value: f64) -> bool {
        self.as_const() == Some(value)
    }

    pub fn evaluate(&self, at: &Assignment) -> Result<f64, EvalError> {
        match self {
            Expr::Const(c) => Ok(*c),
            Expr::Var(name) => at.get(name).ok_or_else(|| EvalError::Unbound(name.clone())),
            Expr::Unary(f, arg) => f.apply(arg.evaluate(at)?),
            Expr::Binary(op, lhs, rhs) => op.apply(lhs.evaluate(at)?, rhs.evaluate(at)?),
        }
    }

    pub fn free_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::Const(_) => {}
            Expr::Var(name) => {
                out.insert(name.clone());
            }
            Expr::Unary(_, arg) => arg.collect_vars(out),
            Expr::Binary(_, lhs, rhs) => {
                lhs.collect_vars(out);
                rhs.collect_vars(out);
            }
        }
    }

    pub fn depends_on(&self, name: &str) -> bool {
        match self {
            Expr::Const(_) => false,
            Expr::Var(v) => v == name,
            Expr::Unary(_, arg) => arg.depends_on(name),
            Expr::Binary(_, lhs, rhs) => lhs.depends_on(name) || rhs.depends_on(name),
        }
    }

    pub fn substitute(&self, name: &str, with: &Expr) -> Expr {
        match self {
            Expr::Var(v) if v == name => with.clone(),
            Expr::Const(_) | Expr::Var(_) => self.clone(),
            Expr::Unary(f, arg) => Expr::unary(*f, arg.substitute(name, with)),
            Expr::Binary(op, lhs, rhs) => {
                Expr::binary(*op, lhs.substitute(name, with), rhs.substitute(name, with))
            }
        }
    }

    /// Simultaneous substitution: replacements are not themselves rewritten.
    pub fn substitute_all(&self, map: &BTreeMap<String, Expr>) -> Expr {
        match self {
            Expr::Var(v) => map.get(v).cloned().unwrap_or_else(|| self.clone()),
            Expr::Const(_) => self.clone(),
            Expr::Unary(f, arg) => Expr::unary(*f, arg.substitute_all(map)),
            Expr::Binary(op, lhs, rhs) => {
                Expr::binary(*op, lhs.substitute_all(map), rhs.substitute_all(map))
            }
        }
    }

    pub fn node_count(&self) -> usize {
        match self {
            Expr::Const(_) | Expr::Var(_) => 1,
            Expr::Unary(_, arg) => 1 + arg.node_count(),
            Expr::Binary(_, lhs, rhs) => 1 + lhs.node_count() + rhs.node_count(),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Const(c) if *c < 0.0 => 3,
            Expr::Unary(Func::Neg, _) => 3,
            Expr::Const(_) | Expr::Var(_) | Expr::Unary(..) => 5,
            Expr::Binary(op, ..) => op.precedence(),
        }
    }
}

impl FromStr for Expr {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse(s)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn child(f: &mut fmt::Formatter<'_>, e: &Expr, parens: bool) -> fmt::Result {
            if parens {
                write!(f, "({e})")
            } else {
                write!(f, "{e}")
            }
        }

        match self {
            Expr::Const(c) => write!(f, "{}", if *c == 0.0 { 0.0 } else { *c }),
            Expr::Var(name) => f.write_str(name),
            Expr::Unary(Func::Neg, arg) => {
                f.write_str("-")?;
                child(f, arg, arg.precedence() < 3)
            }
            Expr::Unary(func, arg) => write!(f, "{}({arg})", func.name()),
            Expr::Binary(op, lhs, rhs) => {
                let p = op.precedence();
                if *op == BinOp::Pow {
                    child(f, lhs, lhs.precedence() <= p)?;
                    f.write_str("^")?;
                    child(f, rhs, rhs.precedence() < p)
                } else {
                    child(f, lhs, lhs.precedence() < p)?;
                    write!(f, " {} ", op.symbol())?;
                    child(f, rhs, rhs.precedence() <= p)
                }
            }
        }
    }
}

macro_rules! impl_op {
    ($trait:ident, $method:ident, $op:expr) => {
        impl std::ops::$trait for Expr {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                Expr::binary($op, self, rhs)
            }
        }
    };
}

impl_op!(Add, add, BinOp::Add);
impl_op!(Sub, sub, BinOp::Sub);
impl_op!(Mul, mul, BinOp::Mul);
impl_op!(Div, div, BinOp::Div);

impl std::ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::unary(Func::Neg, self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eval(text: &str, at: &Assignment) -> Result<f64, EvalError> {
        parse(text).unwrap().evaluate(at)
    }

    #[test]
    fn evaluates_hand_examples() {
        let at = Assignment::new()
            .with("x1", 1.0)
            .with("x2", 2.0)
            .with("t", 3.0);
        assert_eq!(eval("2*x1*x2 - t/3", &at).unwrap(), 3.0);
        assert_eq!(eval("t", &Assignment::new().with("t", 5.0)).unwrap(), 5.0);
        let at = Assignment::new().with("x1", 3.0).with("x2", 4.0);
        assert_eq!(eval("x1^2+x2^2", &at).unwrap(), 25.0);
    }

    #[test]
    fn domain_errors_are_reported() {
        let neg = Assignment::new().with("x1", -1.0);
        assert!(matches!(
            eval("log(x1)", &neg),
            Err(EvalError::Domain { op: "log", .. })
        ));
        assert!(matches!(
            eval("sqrt(x1)", &neg),
            Err(EvalError::Domain { .. })
        ));
        assert!(matches!(
            eval("x1^0.5", &neg),
            Err(EvalError::Domain { .. })
        ));
        let zero = Assignment::new().with("x1", 0.0);
        assert!(matches!(eval("1/x1", &zero), Err(EvalError::Domain { .. })));
        assert!(matches!(
            eval("x1^(-1)", &zero),
            Err(EvalError::Domain { .. })
        ));
        assert!(matches!(
            eval("log(x1)", &zero),
            Err(EvalError::Domain { .. })
        ));
        assert!(matches!(
            eval("exp(1000)", &zero),
            Err(EvalError::Domain { op: "exp", .. })
        ));
    }

    #[test]
    fn unbound_variable() {
        assert_eq!(
            eval("x1 + x2", &Assignment::new().with("x1", 1.0)),
            Err(EvalError::Unbound("x2".into()))
        );
    }

    #[test]
    fn negative_integer_powers_of_negative_bases() {
        let at = Assignment::new().with("x1", -2.0);
        assert_eq!(eval("x1^3", &at).unwrap(), -8.0);
        assert_eq!(eval("x1^(-2)", &at).unwrap(), 0.25);
    }

    #[test]
    fn printing_uses_minimal_parentheses() {
        let cases = [
            ("x1^2 + sin(t)", "x1^2 + sin(t)"),
            ("(x1 - x2) - t", "x1 - x2 - t"),
            ("x1 - (x2 - t)", "x1 - (x2 - t)"),
            ("x1 / (x2 * t)", "x1 / (x2 * t)"),
            ("-x1^2", "-x1^2"),
            ("(-x1)^2", "(-x1)^2"),
            ("x1^x2^t", "x1^x2^t"),
            ("(x1^x2)^t", "(x1^x2)^t"),
            ("x1^-2", "x1^(-2)"),
            ("-(x1 + t)", "-(x1 + t)"),
        ];
        for (input, printed) in cases {
            assert_eq!(parse(input).unwrap().to_string(), printed, "input {input}");
        }
    }

    #[test]
    fn substitution_is_simultaneous() {
        let e = parse("x1 + x2").unwrap();
        let map: BTreeMap<String, Expr> = [
            ("x1".to_string(), parse("x2").unwrap()),
            ("x2".to_string(), parse("x1").unwrap()),
        ]
        .into_iter()
        .collect();
        assert_eq!(e.substitute_all(&map), parse("x2 + x1").unwrap());
    }

    #[test]
    fn free_vars_are_sorted_and_unique() {
        let e = parse("x2*t + x1*x2 + sin(t)").unwrap();
        let vars: Vec<_> = e.free_vars().into_iter().collect();
        assert_eq!(vars, ["t", "x1", "x2"]);
        assert!(e.depends_on("x1"));
        assert!(!e.depends_on("x3"));
    }
}
