//! Exact symbolic differentiation.

use super::{Expr, TOTAL_SYMBOL};

fn d(e: &Expr, wrt: &str, total_depends: bool) -> Expr {
    match e {
        Expr::Constant(_) => Expr::zero(),
        Expr::Symbol(s) => {
            if s == wrt || (total_depends && s == TOTAL_SYMBOL) {
                Expr::Constant(1.0)
            } else {
                Expr::zero()
            }
        }
        Expr::Add(items) => Expr::Add(items.iter().map(|t| d(t, wrt, total_depends)).collect()),
        Expr::Sub(a, b) => Expr::Sub(
            Box::new(d(a, wrt, total_depends)),
            Box::new(d(b, wrt, total_depends)),
        ),
        Expr::Neg(a) => Expr::Neg(Box::new(d(a, wrt, total_depends))),
        Expr::Mul(items) => {
            let mut terms = Vec::with_capacity(items.len());
            for i in 0..items.len() {
                let di = d(&items[i], wrt, total_depends);
                if di.is_zero() {
                    continue;
                }
                let mut factors: Vec<Expr> = Vec::with_capacity(items.len());
                for (j, f) in items.iter().enumerate() {
                    factors.push(if i == j { di.clone() } else { f.clone() });
                }
                terms.push(Expr::Mul(factors));
            }
            Expr::sum(terms)
        }
        Expr::Div(a, b) => {
            // (a'b - ab') / b^2
            let da = d(a, wrt, total_depends);
            let db = d(b, wrt, total_depends);
            let num = Expr::Sub(
                Box::new(Expr::Mul(vec![da, (**b).clone()])),
                Box::new(Expr::Mul(vec![(**a).clone(), db])),
            );
            Expr::Div(Box::new(num), Box::new(Expr::Pow(b.clone(), 2.0)))
        }
        Expr::Pow(base, p) => Expr::Mul(vec![
            Expr::Constant(*p),
            Expr::Pow(base.clone(), p - 1.0),
            d(base, wrt, total_depends),
        ]),
    }
}

impl Expr {
    /// Partial derivative with respect to `wrt`, simplified.
    ///
    /// `N` is treated as an independent symbol here.
    pub fn diff(&self, wrt: &str) -> Expr {
        d(self, wrt, false).simplify()
    }

    /// Partial derivative where `N` is the sum of `places`: when `wrt` is a
    /// place, `dN/dwrt = 1` contributes through the chain rule.
    pub fn diff_with_total<S: AsRef<str>>(&self, wrt: &str, places: &[S]) -> Expr {
        let total_depends = places.iter().any(|p| p.as_ref() == wrt);
        d(self, wrt, total_depends).simplify()
    }
}
