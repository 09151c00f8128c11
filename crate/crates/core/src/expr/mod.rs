//! Symbolic arithmetic over parameters and place markings.
//!
//! Arc weights and rate laws are rational expressions in a handful of
//! symbols. This module parses them, evaluates them, differentiates them
//! exactly and performs the light simplification needed to cancel the
//! net-sum terms produced by stochastic encodings.
//!
//! The symbol `N` is reserved: it stands for the total marking of the net.
//! Evaluation expects the caller to bind it (see [`Bindings::bind_marking`]),
//! and [`Expr::diff_with_total`] applies the chain rule through it.

mod compile;
mod diff;
mod parse;
mod simplify;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

pub use compile::CompiledExpr;
pub use parse::parse_expr;

/// Name of the reserved total-population symbol.
pub const TOTAL_SYMBOL: &str = "N";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExprError {
    #[error("empty expression")]
    Empty,
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("exponent at byte {offset} must be a numeric constant")]
    NonConstantExponent { offset: usize },
    #[error("unbound symbol `{0}`")]
    Unbound(String),
    #[error("division by zero")]
    DivisionByZero,
    #[error("zero raised to a negative power")]
    ZeroToNegativePower,
}

/// Expression tree.
///
/// `Add` and `Mul` are n-ary; `Sub` and `Div` are binary and left-associative
/// in the concrete syntax. Exponents are numeric constants.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Constant(f64),
    Symbol(String),
    Add(Vec<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Vec<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, f64),
    Neg(Box<Expr>),
}

/// Symbol-to-value map used for evaluation.
#[derive(Debug, Clone, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Bindings(BTreeMap<String, f64>);

impl Bindings {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, name: impl Into<String>, value: f64) -> &mut Self {
        self.0.insert(name.into(), value);
        self
    }

    pub fn with(mut self, name: impl Into<String>, value: f64) -> Self {
        self.set(name, value);
        self
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.0.get(name).copied()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.0.contains_key(name)
    }

    pub fn remove(&mut self, name: &str) -> Option<f64> {
        self.0.remove(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.0.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Overlay `other` on top of `self`; entries in `other` win.
    pub fn merged(&self, other: &Bindings) -> Bindings {
        let mut out = self.clone();
        for (k, v) in other.iter() {
            out.set(k, v);
        }
        out
    }

    /// Bind every place name to its marking and `N` to the marking total.
    pub fn bind_marking<S: AsRef<str>>(&mut self, places: &[S], marking: &[f64]) -> &mut Self {
        debug_assert_eq!(places.len(), marking.len());
        for (name, value) in places.iter().zip(marking) {
            self.set(name.as_ref(), *value);
        }
        self.set(TOTAL_SYMBOL, marking.iter().sum());
        self
    }
}

impl FromIterator<(String, f64)> for Bindings {
    fn from_iter<I: IntoIterator<Item = (String, f64)>>(iter: I) -> Self {
        Bindings(iter.into_iter().collect())
    }
}

impl<'a> FromIterator<(&'a str, f64)> for Bindings {
    fn from_iter<I: IntoIterator<Item = (&'a str, f64)>>(iter: I) -> Self {
        Bindings(iter.into_iter().map(|(k, v)| (k.to_string(), v)).collect())
    }
}

impl Expr {
    pub fn constant(value: f64) -> Self {
        Expr::Constant(value)
    }

    pub fn symbol(name: impl Into<String>) -> Self {
        Expr::Symbol(name.into())
    }

    pub fn zero() -> Self {
        Expr::Constant(0.0)
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Expr::Constant(c) if *c == 0.0)
    }

    /// Sum of `terms`, collapsing the trivial cases.
    pub fn sum(mut terms: Vec<Expr>) -> Expr {
        match terms.len() {
            0 => Expr::zero(),
            1 => terms.pop().unwrap(),
            _ => Expr::Add(terms),
        }
    }

    /// Product of `factors`, collapsing the trivial cases.
    pub fn product(mut factors: Vec<Expr>) -> Expr {
        match factors.len() {
            0 => Expr::Constant(1.0),
            1 => factors.pop().unwrap(),
            _ => Expr::Mul(factors),
        }
    }

    pub fn scaled(self, factor: f64) -> Expr {
        if factor == 1.0 {
            self
        } else {
            Expr::Mul(vec![Expr::Constant(factor), self])
        }
    }

    pub fn eval(&self, bindings: &Bindings) -> Result<f64, ExprError> {
        Ok(match self {
            Expr::Constant(c) => *c,
            Expr::Symbol(name) => bindings
                .get(name)
                .ok_or_else(|| ExprError::Unbound(name.clone()))?,
            Expr::Add(terms) => {
                let mut acc = 0.0;
                for t in terms {
                    acc += t.eval(bindings)?;
                }
                acc
            }
            Expr::Sub(a, b) => a.eval(bindings)? - b.eval(bindings)?,
            Expr::Mul(factors) => {
                let mut acc = 1.0;
                for f in factors {
                    acc *= f.eval(bindings)?;
                }
                acc
            }
            Expr::Div(a, b) => {
                let num = a.eval(bindings)?;
                let den = b.eval(bindings)?;
                checked_div(num, den)?
            }
            Expr::Pow(base, exp) => checked_pow(base.eval(bindings)?, *exp)?,
            Expr::Neg(a) => -a.eval(bindings)?,
        })
    }

    pub fn free_symbols(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_symbols(&mut out);
        out
    }

    fn collect_symbols(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::Constant(_) => {}
            Expr::Symbol(s) => {
                out.insert(s.clone());
            }
            Expr::Add(items) | Expr::Mul(items) => items.iter().for_each(|e| e.collect_symbols(out)),
            Expr::Sub(a, b) | Expr::Div(a, b) => {
                a.collect_symbols(out);
                b.collect_symbols(out);
            }
            Expr::Pow(a, _) | Expr::Neg(a) => a.collect_symbols(out),
        }
    }

    pub fn contains_symbol(&self, name: &str) -> bool {
        match self {
            Expr::Constant(_) => false,
            Expr::Symbol(s) => s == name,
            Expr::Add(items) | Expr::Mul(items) => items.iter().any(|e| e.contains_symbol(name)),
            Expr::Sub(a, b) | Expr::Div(a, b) => a.contains_symbol(name) || b.contains_symbol(name),
            Expr::Pow(a, _) | Expr::Neg(a) => a.contains_symbol(name),
        }
    }

    /// Number of nodes in the tree.
    pub fn size(&self) -> usize {
        1 + match self {
            Expr::Constant(_) | Expr::Symbol(_) => 0,
            Expr::Add(items) | Expr::Mul(items) => items.iter().map(Expr::size).sum(),
            Expr::Sub(a, b) | Expr::Div(a, b) => a.size() + b.size(),
            Expr::Pow(a, _) | Expr::Neg(a) => a.size(),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Add(_) | Expr::Sub(..) => 1,
            Expr::Mul(_) | Expr::Div(..) => 2,
            Expr::Neg(_) => 3,
            Expr::Constant(c) if *c < 0.0 || c.is_sign_negative() => 3,
            Expr::Pow(..) => 4,
            Expr::Constant(_) | Expr::Symbol(_) => 5,
        }
    }

    fn is_negative_leading(&self) -> bool {
        matches!(self, Expr::Neg(_)) || matches!(self, Expr::Constant(c) if c.is_sign_negative())
    }
}

pub(crate) fn checked_div(num: f64, den: f64) -> Result<f64, ExprError> {
    if den == 0.0 {
        Err(ExprError::DivisionByZero)
    } else {
        Ok(num / den)
    }
}

pub(crate) fn checked_pow(base: f64, exp: f64) -> Result<f64, ExprError> {
    if base == 0.0 && exp < 0.0 {
        return Err(ExprError::ZeroToNegativePower);
    }
    if exp.fract() == 0.0 && exp.abs() <= i32::MAX as f64 {
        Ok(base.powi(exp as i32))
    } else {
        Ok(base.powf(exp))
    }
}

fn write_wrapped(f: &mut fmt::Formatter<'_>, e: &Expr, wrap: bool) -> fmt::Result {
    if wrap {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

fn write_number(f: &mut fmt::Formatter<'_>, value: f64) -> fmt::Result {
    if value == 0.0 {
        // -0 prints as "0" so that printing never emits a bare unary minus.
        write!(f, "0")
    } else {
        write!(f, "{value}")
    }
}

/// Printed form re-parses to the same tree: parentheses are emitted wherever
/// flattening, associativity or literal folding would otherwise change it.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Constant(c) => write_number(f, *c),
            Expr::Symbol(s) => write!(f, "{s}"),
            Expr::Add(terms) => {
                for (i, t) in terms.iter().enumerate() {
                    if i == 0 {
                        write_wrapped(f, t, matches!(t, Expr::Add(_)))?;
                    } else {
                        write!(f, "+")?;
                        let wrap = t.precedence() <= 1 || t.is_negative_leading();
                        write_wrapped(f, t, wrap)?;
                    }
                }
                Ok(())
            }
            Expr::Sub(a, b) => {
                write_wrapped(f, a, false)?;
                write!(f, "-")?;
                write_wrapped(f, b, b.precedence() <= 1 || b.is_negative_leading())
            }
            Expr::Mul(factors) => {
                for (i, t) in factors.iter().enumerate() {
                    if i == 0 {
                        let wrap = t.precedence() < 2 || matches!(t, Expr::Mul(_));
                        write_wrapped(f, t, wrap)?;
                    } else {
                        write!(f, "*")?;
                        let wrap = t.precedence() <= 2 || t.is_negative_leading();
                        write_wrapped(f, t, wrap)?;
                    }
                }
                Ok(())
            }
            Expr::Div(a, b) => {
                write_wrapped(f, a, a.precedence() < 2)?;
                write!(f, "/")?;
                write_wrapped(f, b, b.precedence() <= 2 || b.is_negative_leading())
            }
            Expr::Pow(base, exp) => {
                let wrap = !matches!(**base, Expr::Symbol(_))
                    && !matches!(**base, Expr::Constant(c) if !c.is_sign_negative());
                write_wrapped(f, base, wrap)?;
                write!(f, "^")?;
                if exp.is_sign_negative() && *exp != 0.0 {
                    write!(f, "(")?;
                    write_number(f, *exp)?;
                    write!(f, ")")
                } else {
                    write_number(f, *exp)
                }
            }
            Expr::Neg(a) => {
                write!(f, "-")?;
                // A bare literal would fold into a negative constant on re-parse.
                let wrap = a.precedence() < 4 || matches!(**a, Expr::Constant(_));
                write_wrapped(f, a, wrap)
            }
        }
    }
}

impl std::str::FromStr for Expr {
    type Err = ExprError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_expr(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(pairs: &[(&str, f64)]) -> Bindings {
        pairs.iter().copied().collect()
    }

    #[test]
    fn eval_mass_action() {
        let e = parse_expr("beta*S*I").unwrap();
        let v = e.eval(&b(&[("beta", 0.3), ("S", 10.0), ("I", 2.0)])).unwrap();
        assert!((v - 6.0).abs() < 1e-15);
    }

    #[test]
    fn eval_inhibited_incidence_at_zero_infected() {
        let e = parse_expr("beta*S*I/(1+alpha*I^2)").unwrap();
        let v = e
            .eval(&b(&[("beta", 1.0), ("S", 1.0), ("I", 0.0), ("alpha", 5.0)]))
            .unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn eval_division_by_zero() {
        let e = parse_expr("x/y").unwrap();
        assert_eq!(e.eval(&b(&[("x", 1.0), ("y", 0.0)])), Err(ExprError::DivisionByZero));
    }

    #[test]
    fn eval_zero_to_negative_power() {
        let e = parse_expr("x^(-1)").unwrap();
        assert_eq!(e.eval(&b(&[("x", 0.0)])), Err(ExprError::ZeroToNegativePower));
    }

    #[test]
    fn eval_unbound_names_symbol() {
        let e = parse_expr("beta*S").unwrap();
        let err = e.eval(&b(&[("S", 1.0)])).unwrap_err();
        assert_eq!(err, ExprError::Unbound("beta".into()));
        assert!(err.to_string().contains("beta"));
    }

    #[test]
    fn free_symbols_examples() {
        let set = |s: &str| parse_expr(s).unwrap().free_symbols();
        assert_eq!(set("beta*S*I"), ["I", "S", "beta"].iter().map(|s| s.to_string()).collect());
        assert!(set("5").is_empty());
        assert_eq!(set("S/N"), ["N", "S"].iter().map(|s| s.to_string()).collect());
    }

    #[test]
    fn bind_marking_sets_total() {
        let mut bind = Bindings::new();
        bind.bind_marking(&["S", "I", "R"], &[990.0, 10.0, 0.0]);
        assert_eq!(bind.get("N"), Some(1000.0));
        assert_eq!(bind.get("I"), Some(10.0));
    }

    #[test]
    fn printing_is_reparseable() {
        for src in [
            "beta*S*I/(1+alpha*I^2)",
            "a-(b-c)",
            "a-b+c",
            "-(2)*x",
            "-2*x",
            "x^(-2)",
            "(a+b)+c",
            "a*(b*c)",
            "a/(b/c)",
            "(-2)^3",
            "-x^2",
            "a+(-b)",
        ] {
            let e = parse_expr(src).unwrap();
            let printed = e.to_string();
            assert_eq!(parse_expr(&printed).unwrap(), e, "{src} -> {printed}");
        }
    }
}
