//! Light algebraic simplification.
//!
//! An expression is normalised to a sum of terms, each a numeric coefficient
//! times a product of powers of bases. Like terms (same bases with the same
//! exponents) are merged, so net-sum encodings such as `2*b*S*I - b*S*I`
//! collapse to `b*S*I`. Sums that appear as factors are not distributed;
//! they are kept as opaque bases.

use std::collections::HashMap;

use super::Expr;

#[derive(Debug, Clone)]
struct Factor {
    base: Expr,
    key: String,
    exp: f64,
    // Present when `base` is itself a multi-term sum.
    sum: Option<Vec<Term>>,
}

#[derive(Debug, Clone)]
struct Term {
    coeff: f64,
    factors: Vec<Factor>,
}

impl Term {
    fn constant(c: f64) -> Self {
        Term { coeff: c, factors: Vec::new() }
    }

    fn mul(&mut self, other: &Term) {
        self.coeff *= other.coeff;
        for f in &other.factors {
            self.mul_factor(f.clone());
        }
    }

    fn mul_factor(&mut self, f: Factor) {
        if let Some(pos) = self.factors.iter().position(|g| g.key == f.key) {
            self.factors[pos].exp += f.exp;
            if self.factors[pos].exp == 0.0 {
                self.factors.remove(pos);
            }
        } else if f.exp != 0.0 {
            self.factors.push(f);
        }
    }

    fn signature(&self) -> Vec<(String, u64)> {
        let mut sig: Vec<(String, u64)> = self
            .factors
            .iter()
            .map(|f| (f.key.clone(), f.exp.to_bits()))
            .collect();
        sig.sort();
        sig
    }
}

fn negate(terms: &mut [Term]) {
    for t in terms {
        t.coeff = -t.coeff;
    }
}

fn opaque(base: Expr, exp: f64, sum: Option<Vec<Term>>) -> Factor {
    let key = base.to_string();
    Factor { base, key, exp, sum }
}

/// Term `c^exp * (sum / c)^exp` for a multi-term sum, where `c` is the
/// leading coefficient. Normalising the leading coefficient to 1 makes
/// `2*x-1` and `2*(x-0.5)` the same factor.
fn sum_term(mut terms: Vec<Term>, exp: f64) -> Term {
    let c = terms[0].coeff;
    let mut outer = 1.0;
    if c != 1.0 && (is_integer(exp) || c > 0.0) {
        for t in terms.iter_mut() {
            t.coeff /= c;
        }
        outer = c.powf(exp);
    }
    let base = rebuild(&terms);
    Term {
        coeff: outer,
        factors: vec![opaque(base, exp, Some(terms))],
    }
}

fn is_integer(p: f64) -> bool {
    p.fract() == 0.0 && p.abs() < 1e9
}

fn to_sum(e: &Expr) -> Vec<Term> {
    expand_and_merge(to_sum_raw(e))
}

/// Sum for a sub-expression used as a factor. A single term is taken as is,
/// so `c*(sum)` is not expanded only to be re-normalised.
fn factor_sum(e: &Expr) -> Vec<Term> {
    let raw = to_sum_raw(e);
    if raw.len() == 1 && raw[0].coeff != 0.0 {
        raw
    } else {
        expand_and_merge(raw)
    }
}

fn to_sum_raw(e: &Expr) -> Vec<Term> {
    match e {
        Expr::Constant(c) => {
            if *c == 0.0 {
                Vec::new()
            } else {
                vec![Term::constant(*c)]
            }
        }
        Expr::Symbol(s) => vec![Term {
            coeff: 1.0,
            factors: vec![opaque(Expr::Symbol(s.clone()), 1.0, None)],
        }],
        Expr::Add(items) => items.iter().flat_map(to_sum).collect(),
        Expr::Sub(a, b) => {
            let mut out = to_sum(a);
            let mut rhs = to_sum(b);
            negate(&mut rhs);
            out.extend(rhs);
            out
        }
        Expr::Neg(a) => {
            let mut out = to_sum(a);
            negate(&mut out);
            out
        }
        Expr::Mul(items) => {
            let mut acc = Term::constant(1.0);
            for item in items {
                let s = factor_sum(item);
                match s.len() {
                    0 => return Vec::new(),
                    1 => acc.mul(&s[0]),
                    _ => acc.mul(&sum_term(s, 1.0)),
                }
            }
            vec![acc]
        }
        Expr::Div(a, b) => {
            let mut num = factor_sum(a);
            if num.len() > 1 {
                num = vec![sum_term(num, 1.0)];
            }
            let den = factor_sum(b);
            if den.is_empty() {
                // Keep the division visible so evaluation still reports it.
                let atom = Expr::Div(Box::new(rebuild(&num)), Box::new(Expr::zero()));
                return vec![Term {
                    coeff: 1.0,
                    factors: vec![opaque(atom, 1.0, None)],
                }];
            }
            let inverse = match den.len() {
                1 => {
                    let d = &den[0];
                    Term {
                        coeff: 1.0 / d.coeff,
                        factors: d
                            .factors
                            .iter()
                            .map(|f| Factor { exp: -f.exp, ..f.clone() })
                            .collect(),
                    }
                }
                _ => sum_term(den, -1.0),
            };
            num.into_iter()
                .map(|mut t| {
                    t.mul(&inverse);
                    t
                })
                .collect()
        }
        Expr::Pow(base, p) => pow_sum(factor_sum(base), *p),
    }
}

fn pow_sum(s: Vec<Term>, p: f64) -> Vec<Term> {
    if p == 0.0 {
        return vec![Term::constant(1.0)];
    }
    if p == 1.0 {
        return s;
    }
    match s.len() {
        0 if p > 0.0 => Vec::new(),
        0 => vec![Term {
            coeff: 1.0,
            factors: vec![opaque(Expr::Pow(Box::new(Expr::zero()), p), 1.0, None)],
        }],
        1 => {
            let t = &s[0];
            let foldable = is_integer(p)
                || (t.coeff > 0.0 && t.factors.is_empty())
                || (t.coeff > 0.0 && t.factors.len() == 1 && t.factors[0].exp == 1.0);
            if foldable {
                vec![Term {
                    coeff: t.coeff.powf(p),
                    factors: t
                        .factors
                        .iter()
                        .map(|f| Factor { exp: f.exp * p, ..f.clone() })
                        .filter(|f| f.exp != 0.0)
                        .collect(),
                }]
            } else {
                let base = rebuild(&s);
                vec![Term {
                    coeff: 1.0,
                    factors: vec![opaque(base, p, None)],
                }]
            }
        }
        _ => vec![sum_term(s, p)],
    }
}

/// Distribute the coefficient over a term that is just `c * (sum)`, then
/// merge like terms in order of first appearance.
fn expand_and_merge(terms: Vec<Term>) -> Vec<Term> {
    let mut expanded = Vec::with_capacity(terms.len());
    for t in terms {
        if t.factors.len() == 1 && t.factors[0].exp == 1.0 && t.factors[0].sum.is_some() {
            let c = t.coeff;
            for mut inner in t.factors.into_iter().next().unwrap().sum.unwrap() {
                inner.coeff *= c;
                expanded.push(inner);
            }
        } else {
            expanded.push(t);
        }
    }

    let mut index: HashMap<Vec<(String, u64)>, usize> = HashMap::new();
    let mut merged: Vec<(Term, f64)> = Vec::new();
    for t in expanded {
        let sig = t.signature();
        match index.get(&sig) {
            Some(&i) => {
                merged[i].0.coeff += t.coeff;
                merged[i].1 += t.coeff.abs();
            }
            None => {
                index.insert(sig, merged.len());
                let mag = t.coeff.abs();
                merged.push((t, mag));
            }
        }
    }
    merged
        .into_iter()
        .filter(|(t, mag)| t.coeff != 0.0 && t.coeff.abs() > 8.0 * f64::EPSILON * mag)
        .map(|(t, _)| t)
        .collect()
}

fn factor_expr(f: &Factor, exp: f64) -> Expr {
    if exp == 1.0 {
        f.base.clone()
    } else {
        Expr::Pow(Box::new(f.base.clone()), exp)
    }
}

/// Expression for `coeff * factors` with `coeff >= 0`.
fn term_expr(coeff: f64, factors: &[Factor]) -> Expr {
    let mut num = Vec::new();
    let mut den = Vec::new();
    if coeff != 1.0 {
        num.push(Expr::Constant(coeff));
    }
    for f in factors {
        if f.exp > 0.0 {
            num.push(factor_expr(f, f.exp));
        } else {
            den.push(factor_expr(f, -f.exp));
        }
    }
    let numerator = Expr::product(num);
    if den.is_empty() {
        numerator
    } else {
        Expr::Div(Box::new(numerator), Box::new(Expr::product(den)))
    }
}

fn rebuild(terms: &[Term]) -> Expr {
    let mut acc: Option<Expr> = None;
    let mut open_add = false;
    for t in terms {
        let negative = t.coeff < 0.0;
        let magnitude = term_expr(t.coeff.abs(), &t.factors);
        acc = Some(match acc {
            None => {
                if negative {
                    match magnitude {
                        Expr::Constant(c) => Expr::Constant(-c),
                        other => Expr::Neg(Box::new(other)),
                    }
                } else {
                    magnitude
                }
            }
            Some(prev) if negative => {
                open_add = false;
                Expr::Sub(Box::new(prev), Box::new(magnitude))
            }
            Some(Expr::Add(mut items)) if open_add => {
                items.push(magnitude);
                Expr::Add(items)
            }
            Some(prev) => {
                open_add = true;
                Expr::Add(vec![prev, magnitude])
            }
        });
    }
    acc.unwrap_or_else(Expr::zero)
}

impl Expr {
    /// Simplified, value-preserving form. Idempotent.
    pub fn simplify(&self) -> Expr {
        rebuild(&to_sum(self))
    }
}
