//! Expressions with symbols resolved to slot indices, for hot loops.

use super::{checked_div, checked_pow, Expr, ExprError, TOTAL_SYMBOL};

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Const(f64),
    Slot(usize),
    Total,
    Add(Vec<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Vec<Node>),
    Div(Box<Node>, Box<Node>),
    Pow(Box<Node>, f64),
    Neg(Box<Node>),
}

/// An [`Expr`] compiled against a fixed symbol table.
///
/// `N` resolves to the `total` argument of [`CompiledExpr::eval`]; every
/// other symbol must appear in the table passed to [`CompiledExpr::new`].
#[derive(Debug, Clone, PartialEq)]
pub struct CompiledExpr {
    root: Node,
}

fn lower(e: &Expr, symbols: &[&str]) -> Result<Node, ExprError> {
    Ok(match e {
        Expr::Constant(c) => Node::Const(*c),
        Expr::Symbol(s) if s == TOTAL_SYMBOL => Node::Total,
        Expr::Symbol(s) => match symbols.iter().position(|x| x == s) {
            Some(i) => Node::Slot(i),
            None => return Err(ExprError::Unbound(s.clone())),
        },
        Expr::Add(items) => Node::Add(items.iter().map(|t| lower(t, symbols)).collect::<Result<_, _>>()?),
        Expr::Mul(items) => Node::Mul(items.iter().map(|t| lower(t, symbols)).collect::<Result<_, _>>()?),
        Expr::Sub(a, b) => Node::Sub(Box::new(lower(a, symbols)?), Box::new(lower(b, symbols)?)),
        Expr::Div(a, b) => Node::Div(Box::new(lower(a, symbols)?), Box::new(lower(b, symbols)?)),
        Expr::Pow(a, p) => Node::Pow(Box::new(lower(a, symbols)?), *p),
        Expr::Neg(a) => Node::Neg(Box::new(lower(a, symbols)?)),
    })
}

fn run(n: &Node, slots: &[f64], total: f64) -> Result<f64, ExprError> {
    Ok(match n {
        Node::Const(c) => *c,
        Node::Slot(i) => slots[*i],
        Node::Total => total,
        Node::Add(items) => {
            let mut acc = 0.0;
            for t in items {
                acc += run(t, slots, total)?;
            }
            acc
        }
        Node::Mul(items) => {
            let mut acc = 1.0;
            for t in items {
                acc *= run(t, slots, total)?;
            }
            acc
        }
        Node::Sub(a, b) => run(a, slots, total)? - run(b, slots, total)?,
        Node::Div(a, b) => checked_div(run(a, slots, total)?, run(b, slots, total)?)?,
        Node::Pow(a, p) => checked_pow(run(a, slots, total)?, *p)?,
        Node::Neg(a) => -run(a, slots, total)?,
    })
}

impl CompiledExpr {
    pub fn new(expr: &Expr, symbols: &[&str]) -> Result<Self, ExprError> {
        Ok(CompiledExpr {
            root: lower(expr, symbols)?,
        })
    }

    /// Evaluate with `slots[i]` bound to `symbols[i]` and `N` to `total`.
    pub fn eval(&self, slots: &[f64], total: f64) -> Result<f64, ExprError> {
        run(&self.root, slots, total)
    }
}
