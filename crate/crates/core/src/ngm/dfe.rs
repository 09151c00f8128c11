//! Disease-free equilibrium: infected places emptied, the remaining places
//! solving `net_flow = 0`.

use serde::Serialize;

use super::linalg::Matrix;
use super::NgmError;
use crate::expr::{Bindings, CompiledExpr, Expr};
use crate::petri::PetriModel;

const MAX_ITERATIONS: usize = 100;
const DFE_TOL: f64 = 1e-10;

/// A place whose equilibrium value is fixed by an expression over the
/// parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct DfePin {
    pub place: String,
    pub value: Expr,
}

impl DfePin {
    pub fn new(place: impl Into<String>, value: Expr) -> Self {
        DfePin {
            place: place.into(),
            value,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DfeMethod {
    /// Every non-infected place was pinned.
    Annotated,
    Newton,
    /// Newton on the flow equations plus conservation of the total marking.
    ConservationAugmented,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DfeResult {
    pub marking: Vec<f64>,
    pub method: DfeMethod,
    /// Largest absolute net flow of a non-infected place at the solution.
    pub residual: f64,
    pub iterations: usize,
}

struct FlowSystem {
    /// Non-infected places: their flow equations.
    rows: Vec<usize>,
    flows: Vec<CompiledExpr>,
    /// jac[r][u]: derivative of row r with respect to unknown u.
    jac: Vec<Vec<CompiledExpr>>,
}

fn slots(params: &[(String, f64)], marking: &[f64]) -> Vec<f64> {
    let mut s = marking.to_vec();
    s.extend(params.iter().map(|(_, v)| *v));
    s
}

fn eval_all(exprs: &[CompiledExpr], slots: &[f64], total: f64) -> Result<Vec<f64>, NgmError> {
    exprs
        .iter()
        .map(|e| e.eval(slots, total).map_err(NgmError::Eval))
        .collect()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Solve for the disease-free equilibrium of `m` under `params`.
///
/// Infected places are set to zero and pinned places to their values; the
/// rest start from the initial marking and are found by damped Newton. If
/// the flow Jacobian is rank deficient the conservation constraint
/// `sum(marking) = sum(initial)` is appended; if that still leaves the
/// system underdetermined an error is returned.
pub fn compute_dfe(m: &PetriModel, params: &Bindings, pins: &[DfePin]) -> Result<DfeResult, NgmError> {
    let places = m.place_names();
    let n = places.len();
    let init = m.initial_marking();
    let init_total: f64 = init.iter().sum();

    let mut x = init.clone();
    let mut pinned = vec![false; n];
    for i in m.infected_indices() {
        x[i] = 0.0;
    }
    for pin in pins {
        let i = m
            .place_index(&pin.place)
            .ok_or_else(|| NgmError::UnknownPlace(pin.place.clone()))?;
        if m.places[i].infected {
            return Err(NgmError::PinnedInfected(pin.place.clone()));
        }
        x[i] = pin.value.eval(params).map_err(NgmError::Eval)?;
        pinned[i] = true;
    }
    let unknowns: Vec<usize> = (0..n).filter(|&i| !m.places[i].infected && !pinned[i]).collect();

    let param_list: Vec<(String, f64)> = params.iter().map(|(k, v)| (k.to_string(), v)).collect();
    let mut symbols: Vec<&str> = places.clone();
    symbols.extend(param_list.iter().map(|(k, _)| k.as_str()));
    let compile = |e: &Expr| CompiledExpr::new(e, &symbols).map_err(NgmError::Eval);

    let rows: Vec<usize> = (0..n).filter(|&i| !m.places[i].infected).collect();
    let mut system = FlowSystem {
        rows: rows.clone(),
        flows: Vec::with_capacity(rows.len()),
        jac: Vec::with_capacity(rows.len()),
    };
    for &p in &rows {
        let flow = m.net_flow(p);
        system.flows.push(compile(&flow)?);
        let mut jrow = Vec::with_capacity(unknowns.len());
        for &u in &unknowns {
            jrow.push(compile(&flow.diff_with_total(places[u], &places))?);
        }
        system.jac.push(jrow);
    }

    // Scale for the residual test: the largest arc flow at the start.
    let mut flow_scale: f64 = 1.0;
    {
        let s = slots(&param_list, &init);
        for a in &m.arcs {
            let v = compile(&m.arc_flow(a))?.eval(&s, init_total).map_err(NgmError::Eval)?;
            flow_scale = flow_scale.max(v.abs());
        }
    }
    let residual_of = |x: &[f64]| -> Result<Vec<f64>, NgmError> {
        let total: f64 = x.iter().sum();
        eval_all(&system.flows, &slots(&param_list, x), total)
    };

    if unknowns.is_empty() {
        let r = residual_of(&x)?;
        let residual = inf_norm(&r);
        if residual > DFE_TOL * flow_scale {
            return Err(NgmError::DfeInconsistent { residual });
        }
        return Ok(DfeResult {
            marking: x,
            method: DfeMethod::Annotated,
            residual,
            iterations: 0,
        });
    }

    let jacobian_at = |x: &[f64], augmented: bool| -> Result<Matrix, NgmError> {
        let total: f64 = x.iter().sum();
        let s = slots(&param_list, x);
        let extra = usize::from(augmented);
        let mut jm = Matrix::zeros(system.rows.len() + extra, unknowns.len());
        for (r, jrow) in system.jac.iter().enumerate() {
            for (u, e) in jrow.iter().enumerate() {
                jm[(r, u)] = e.eval(&s, total).map_err(NgmError::Eval)?;
            }
        }
        if augmented {
            for u in 0..unknowns.len() {
                jm[(system.rows.len(), u)] = 1.0;
            }
        }
        Ok(jm)
    };

    let j0 = jacobian_at(&x, false)?;
    let rank_tol = |j: &Matrix| 1e-10 * j.max_abs().max(f64::MIN_POSITIVE);
    let mut augmented = false;
    if j0.rank(rank_tol(&j0)) < unknowns.len() {
        augmented = true;
        let ja = jacobian_at(&x, true)?;
        let rank = ja.rank(rank_tol(&ja));
        if rank < unknowns.len() {
            return Err(NgmError::DfeUnderdetermined {
                rank,
                unknowns: unknowns.iter().map(|&u| places[u].to_string()).collect(),
            });
        }
    }

    let cons_scale = init_total.abs().max(1.0);
    let full_residual = |x: &[f64]| -> Result<Vec<f64>, NgmError> {
        let mut r = residual_of(x)?;
        if augmented {
            r.push(x.iter().sum::<f64>() - init_total);
        }
        Ok(r)
    };
    let converged = |r: &[f64]| {
        let flows = &r[..system.rows.len()];
        let flow_ok = inf_norm(flows) <= DFE_TOL * flow_scale;
        let cons_ok = !augmented || r[system.rows.len()].abs() <= DFE_TOL * cons_scale;
        flow_ok && cons_ok
    };
    let merit = |r: &[f64]| {
        let mut s = 0.0;
        for (i, v) in r.iter().enumerate() {
            let w = if i < system.rows.len() { flow_scale } else { cons_scale };
            s += (v / w) * (v / w);
        }
        s
    };

    let mut r = full_residual(&x)?;
    let mut iterations = 0;
    while !converged(&r) {
        if iterations == MAX_ITERATIONS {
            return Err(NgmError::DfeNoConvergence {
                iterations,
                residual: inf_norm(&r),
            });
        }
        iterations += 1;
        let j = jacobian_at(&x, augmented)?;
        let neg: Vec<f64> = r.iter().map(|v| -v).collect();
        let dx = j.solve_least_squares(&neg).ok_or_else(|| NgmError::DfeUnderdetermined {
            rank: j.rank(rank_tol(&j)),
            unknowns: unknowns.iter().map(|&u| places[u].to_string()).collect(),
        })?;
        let current = merit(&r);
        let mut lambda = 1.0;
        loop {
            let mut trial = x.clone();
            for (k, &u) in unknowns.iter().enumerate() {
                trial[u] += lambda * dx[k];
            }
            let rt = full_residual(&trial);
            let accept = match &rt {
                Ok(rt) => merit(rt) < current || lambda < 1e-6,
                Err(_) => lambda < 1e-6,
            };
            if accept {
                x = trial;
                r = rt?;
                break;
            }
            lambda *= 0.5;
        }
    }

    let snap = 1e-12 * cons_scale;
    for &u in &unknowns {
        if x[u] < 0.0 {
            if x[u] >= -snap {
                // Round-off around an exact zero.
                x[u] = 0.0;
            } else {
                return Err(NgmError::DfeNegative {
                    place: places[u].to_string(),
                    value: x[u],
                });
            }
        }
    }
    let residual = inf_norm(&residual_of(&x)?);
    Ok(DfeResult {
        marking: x,
        method: if augmented {
            DfeMethod::ConservationAugmented
        } else {
            DfeMethod::Newton
        },
        residual,
        iterations,
    })
}
