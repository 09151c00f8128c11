//! Basic reproduction number from a Petri net via the next-generation
//! matrix.
//!
//! The pipeline is: disease-free equilibrium, classification of
//! transitions, the new-infection vector 𝓕 and transition matrix 𝓥,
//! their Jacobians with respect to the infected places at the DFE, and
//! finally the spectral radius of `K = F V⁻¹`.

mod dfe;
mod eigen;
pub mod linalg;

use serde::Serialize;

use crate::expr::{Bindings, Expr, ExprError, TOTAL_SYMBOL};
use crate::petri::{
    classify_transitions, validate_assumptions, ArcDirection, Finding, FindingStatus, FlowTable, NetKind,
    PetriModel, TransitionClass,
};

pub use dfe::{compute_dfe, DfeMethod, DfePin, DfeResult};
pub use eigen::{eigenvalues, Complex, EigenError};
pub use linalg::Matrix;

/// Condition number of V above which the model is declared ill-posed.
pub const SINGULAR_CONDITION: f64 = 1e14;
/// Relative width within which two eigenvalue moduli count as tied.
pub const TIE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NgmError {
    #[error("{0}")]
    Precondition(String),
    #[error("unbound parameter `{0}`")]
    Unbound(String),
    #[error("evaluation failed: {0}")]
    Eval(ExprError),
    #[error("unknown place `{0}` in DFE annotation")]
    UnknownPlace(String),
    #[error("place `{0}` is infected; its DFE value is always 0")]
    PinnedInfected(String),
    #[error("DFE annotations leave a net flow of {residual:e}")]
    DfeInconsistent { residual: f64 },
    #[error("DFE is underdetermined: rank {rank} for unknowns {unknowns:?} even with conservation of the total marking; pin values with DFE annotations")]
    DfeUnderdetermined { rank: usize, unknowns: Vec<String> },
    #[error("DFE Newton iteration did not converge after {iterations} iterations (residual {residual:e})")]
    DfeNoConvergence { iterations: usize, residual: f64 },
    #[error("DFE has negative component {place} = {value:e}")]
    DfeNegative { place: String, value: f64 },
    #[error("V is singular (condition number {condition:e}); the model is ill-posed")]
    SingularV { condition: f64 },
    #[error(transparent)]
    Eigen(#[from] EigenError),
}

impl From<ExprError> for NgmError {
    fn from(e: ExprError) -> Self {
        match e {
            ExprError::Unbound(s) => NgmError::Unbound(s),
            other => NgmError::Eval(other),
        }
    }
}

/// New-infection vector: entry k is the net inflow into the k-th infected
/// place over infection transitions.
pub fn build_script_f(flows: &FlowTable) -> Vec<Expr> {
    flows
        .entries
        .iter()
        .map(|entries| {
            let terms = entries
                .iter()
                .filter(|e| flows.classes[e.transition] == TransitionClass::Infection)
                .map(|e| e.flow.clone())
                .collect();
            Expr::sum(terms).simplify()
        })
        .collect()
}

/// Transition matrix 𝓥 over infected places. Row sums equal minus the
/// non-infection net flow of each infected place. Outflows sit on the
/// diagonal; an inflow into place j from a transfer whose infected input is
/// place i goes to (j, i) with a minus sign; self-loop and source inflows
/// are subtracted on the diagonal.
pub fn build_script_v(m: &PetriModel, flows: &FlowTable) -> Vec<Vec<Expr>> {
    let t_count = flows.infected.len();
    let slot_of = |p: usize| flows.infected.iter().position(|&q| q == p);
    let mut terms: Vec<Vec<Vec<Expr>>> = vec![vec![Vec::new(); t_count]; t_count];
    for (t, class) in flows.classes.iter().enumerate() {
        if *class == TransitionClass::Infection {
            continue;
        }
        let infected_input = m
            .inputs_of(t)
            .find(|a| m.places[a.place].infected)
            .and_then(|a| slot_of(a.place));
        for a in m.arcs.iter().filter(|a| a.transition == t) {
            let Some(j) = slot_of(a.place) else { continue };
            let w = m.arc_flow(a);
            match a.direction {
                ArcDirection::Input => terms[j][j].push(w),
                ArcDirection::Output => {
                    let self_loop = m.inputs_of(t).any(|b| b.place == a.place);
                    let col = match infected_input {
                        Some(i) if !self_loop => i,
                        _ => j,
                    };
                    terms[j][col].push(Expr::Neg(Box::new(w)));
                }
            }
        }
    }
    terms
        .into_iter()
        .map(|row| row.into_iter().map(|cell| Expr::sum(cell).simplify()).collect())
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Jacobians {
    pub f: Matrix,
    pub v: Matrix,
    /// Largest entrywise |symbolic − central difference| / (1 + |symbolic|).
    pub fd_max_rel_diff: f64,
}

/// Numeric F and V: partial derivatives of 𝓕 and of the row sums of 𝓥
/// with respect to the infected places, evaluated at `dfe`.
pub fn jacobians_at_dfe(
    m: &PetriModel,
    script_f: &[Expr],
    script_v: &[Vec<Expr>],
    dfe: &[f64],
    params: &Bindings,
) -> Result<Jacobians, NgmError> {
    let places = m.place_names();
    let infected = m.infected_indices();
    let t_count = infected.len();
    let row_sums: Vec<Expr> = script_v
        .iter()
        .map(|row| Expr::sum(row.clone()).simplify())
        .collect();
    let at = |marking: &[f64]| {
        let mut b = params.clone();
        b.bind_marking(&places, marking);
        b
    };
    let base = at(dfe);
    let mut f = Matrix::zeros(t_count, t_count);
    let mut v = Matrix::zeros(t_count, t_count);
    for i in 0..t_count {
        for (j, &pj) in infected.iter().enumerate() {
            f[(i, j)] = script_f[i].diff_with_total(places[pj], &places).eval(&base)?;
            v[(i, j)] = row_sums[i].diff_with_total(places[pj], &places).eval(&base)?;
        }
    }

    let mut fd_max: f64 = 0.0;
    for (j, &pj) in infected.iter().enumerate() {
        let h = 1e-6 * dfe[pj].abs().max(1.0);
        let mut plus = dfe.to_vec();
        plus[pj] += h;
        let mut minus = dfe.to_vec();
        minus[pj] -= h;
        let (bp, bm) = (at(&plus), at(&minus));
        for i in 0..t_count {
            for (exprs, mat) in [(script_f, &f), (row_sums.as_slice(), &v)] {
                let (Ok(a), Ok(b)) = (exprs[i].eval(&bp), exprs[i].eval(&bm)) else {
                    continue;
                };
                let fd = (a - b) / (2.0 * h);
                let sym = mat[(i, j)];
                fd_max = fd_max.max((sym - fd).abs() / (1.0 + sym.abs()));
            }
        }
    }
    Ok(Jacobians {
        f,
        v,
        fd_max_rel_diff: fd_max,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Spectrum {
    pub r0: f64,
    pub dominant: Complex,
    pub eigenvalues: Vec<Complex>,
    /// Another eigenvalue has modulus within `TIE_TOL` of the maximum.
    pub modulus_tie: bool,
    pub qr_sweeps: usize,
}

/// Spectral radius of `k` and the eigenvalue attaining it. Among tied
/// moduli the eigenvalue with the smallest imaginary part is reported.
pub fn spectral_radius(k: &Matrix) -> Result<Spectrum, NgmError> {
    let (eigenvalues, qr_sweeps) = eigenvalues(k)?;
    if eigenvalues.is_empty() {
        return Err(NgmError::Precondition("empty matrix".into()));
    }
    let r0 = eigenvalues.iter().map(Complex::modulus).fold(0.0, f64::max);
    let near: Vec<&Complex> = eigenvalues
        .iter()
        .filter(|e| r0 - e.modulus() <= TIE_TOL * r0.max(f64::MIN_POSITIVE))
        .collect();
    let dominant = **near
        .iter()
        .min_by(|a, b| a.im.abs().total_cmp(&b.im.abs()).then(b.re.total_cmp(&a.re)))
        .unwrap();
    // A complex pair counts once.
    let distinct = near.iter().filter(|e| e.im >= 0.0).count();
    Ok(Spectrum {
        r0,
        dominant,
        modulus_tie: distinct > 1,
        eigenvalues,
        qr_sweeps,
    })
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct NgmOptions {
    pub pins: Vec<DfePin>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostics {
    pub dominant_eigenvalue: Complex,
    pub imag_residue: f64,
    pub modulus_tie: bool,
    pub eigenvalues: Vec<Complex>,
    pub qr_sweeps: usize,
    pub v_condition: f64,
    pub v_eigenvalues: Vec<Complex>,
    pub jacobian_fd_max_rel_diff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NgmResult {
    pub model: String,
    pub kind: NetKind,
    pub places: Vec<String>,
    pub infected: Vec<String>,
    pub params: Bindings,
    pub dfe: DfeResult,
    pub script_f: Vec<String>,
    pub script_v: Vec<Vec<String>>,
    #[serde(rename = "F")]
    pub f: Vec<Vec<f64>>,
    #[serde(rename = "V")]
    pub v: Vec<Vec<f64>>,
    #[serde(rename = "Vinv")]
    pub vinv: Vec<Vec<f64>>,
    #[serde(rename = "K")]
    pub k: Vec<Vec<f64>>,
    pub r0: f64,
    pub diagnostics: Diagnostics,
    pub findings: Vec<Finding>,
}

fn check_bound(m: &PetriModel, params: &Bindings) -> Result<(), NgmError> {
    let mut exprs: Vec<Expr> = m.transitions.iter().filter_map(|t| t.rate.clone()).collect();
    exprs.extend(m.arcs.iter().map(|a| m.arc_flow(a)));
    for e in &exprs {
        for s in e.free_symbols() {
            if s != TOTAL_SYMBOL && m.place_index(&s).is_none() && !params.contains(&s) {
                return Err(NgmError::Unbound(s));
            }
        }
    }
    Ok(())
}

/// R₀ of `m` with `params` overlaid on the model's own parameter values.
pub fn ngm_r0(m: &PetriModel, params: &Bindings) -> Result<NgmResult, NgmError> {
    ngm_r0_with(m, params, &NgmOptions::default())
}

pub fn ngm_r0_with(m: &PetriModel, params: &Bindings, opts: &NgmOptions) -> Result<NgmResult, NgmError> {
    let bindings = m.params.merged(params);
    check_bound(m, &bindings)?;
    let infected = m.infected_indices();
    if infected.is_empty() {
        return Err(NgmError::Precondition(
            "no place is flagged infected; the next-generation matrix is undefined".into(),
        ));
    }
    let dfe = compute_dfe(m, &bindings, &opts.pins)?;
    let flows = classify_transitions(m);
    let script_f = build_script_f(&flows);
    let script_v = build_script_v(m, &flows);
    let jac = jacobians_at_dfe(m, &script_f, &script_v, &dfe.marking, &bindings)?;

    let (vinv, condition) = jac
        .v
        .inverse()
        .ok_or(NgmError::SingularV { condition: f64::INFINITY })?;
    if condition.is_nan() || condition > SINGULAR_CONDITION {
        return Err(NgmError::SingularV { condition });
    }
    let k = jac.f.mul(&vinv);
    let spectrum = spectral_radius(&k)?;
    let (v_eigenvalues, _) = eigenvalues(&jac.v)?;

    let mut findings = validate_assumptions(m);
    let a5_ok = v_eigenvalues.iter().all(|e| e.re > 0.0);
    let a5 = Finding::new(
        "A5",
        if a5_ok {
            FindingStatus::Satisfied
        } else {
            FindingStatus::Violated
        },
        if a5_ok {
            "all eigenvalues of -V have negative real part at the DFE".to_string()
        } else {
            "some eigenvalue of -V has non-negative real part at the DFE".to_string()
        },
    );
    match findings.iter_mut().find(|f| f.code == "A5") {
        Some(slot) => *slot = a5,
        None => findings.push(a5),
    }
    let t_count = infected.len();
    let f_ok = (0..t_count).all(|i| (0..t_count).all(|j| jac.f[(i, j)] >= -1e-12));
    let v_ok = (0..t_count).all(|i| (0..t_count).all(|j| i == j || jac.v[(i, j)] <= 1e-12));
    findings.push(Finding::new(
        "sign-structure",
        if f_ok && v_ok {
            FindingStatus::Satisfied
        } else {
            FindingStatus::Violated
        },
        format!("F nonnegative: {f_ok}; V off-diagonal nonpositive: {v_ok}"),
    ));

    let places = m.place_names();
    Ok(NgmResult {
        model: m.name.clone(),
        kind: m.kind,
        places: places.iter().map(|s| s.to_string()).collect(),
        infected: infected.iter().map(|&i| places[i].to_string()).collect(),
        params: bindings,
        dfe,
        script_f: script_f.iter().map(Expr::to_string).collect(),
        script_v: script_v
            .iter()
            .map(|row| row.iter().map(Expr::to_string).collect())
            .collect(),
        f: jac.f.to_rows(),
        v: jac.v.to_rows(),
        vinv: vinv.to_rows(),
        k: k.to_rows(),
        r0: spectrum.r0,
        diagnostics: Diagnostics {
            dominant_eigenvalue: spectrum.dominant,
            imag_residue: spectrum.dominant.im.abs(),
            modulus_tie: spectrum.modulus_tie,
            eigenvalues: spectrum.eigenvalues,
            qr_sweeps: spectrum.qr_sweeps,
            v_condition: condition,
            v_eigenvalues,
            jacobian_fd_max_rel_diff: jac.fd_max_rel_diff,
        },
        findings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::petri::parse_model;

    const SIRS: &str = "
model sirs kind=vapn
param beta = 0.0003
param gamma = 0.1
param delta = 0.05
place S init=990
place I init=10 infected
place R init=0
trans infect
arc S -> infect weight=\"beta*S*I\"
arc infect -> I weight=\"beta*S*I\"
trans recover
arc I -> recover weight=\"gamma*I\"
arc recover -> R weight=\"gamma*I\"
trans wane
arc R -> wane weight=\"delta*R\"
arc wane -> S weight=\"delta*R\"
";

    const SEIR: &str = "
model seir kind=vapn
param beta = 0.5
param Pi = 1
param mu = 0.1
param eta = 0.3
param alpha = 0.2
place S init=10
place E init=0 infected
place I init=1 infected
place R init=0
trans birth
arc birth -> S weight=\"Pi\"
trans infect
arc S -> infect weight=\"beta*S*I\"
arc infect -> E weight=\"beta*S*I\"
trans onset
arc E -> onset weight=\"eta*E\"
arc onset -> I weight=\"eta*E\"
trans remove
arc I -> remove weight=\"alpha*I\"
arc remove -> R weight=\"alpha*I\"
trans dS
arc S -> dS weight=\"mu*S\"
trans dE
arc E -> dE weight=\"mu*E\"
trans dI
arc I -> dI weight=\"mu*I\"
trans dR
arc R -> dR weight=\"mu*R\"
";

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + b.abs())
    }

    #[test]
    fn one_by_one_radius() {
        let s = spectral_radius(&Matrix::from_rows(&[vec![3.0]])).unwrap();
        assert_eq!(s.r0, 3.0);
        assert!(!s.modulus_tie);
    }

    #[test]
    fn anti_diagonal_radius_is_geometric_mean() {
        let (a, b) = (0.7, 2.3);
        let s = spectral_radius(&Matrix::from_rows(&[vec![0.0, a], vec![b, 0.0]])).unwrap();
        assert!(close(s.r0, (a * b).sqrt(), 1e-14));
        assert!(s.modulus_tie);
        assert!(s.dominant.re > 0.0);
    }

    #[test]
    fn sirs_matrices() {
        let m = parse_model(SIRS).unwrap();
        let p = Bindings::new().with("beta", 0.3 / 1000.0);
        let r = ngm_r0(&m, &p).unwrap();
        assert_eq!(r.dfe.marking, vec![1000.0, 0.0, 0.0]);
        assert!(close(r.f[0][0], 0.3, 1e-12));
        assert!(close(r.v[0][0], 0.1, 1e-12));
        assert!(close(r.r0, 3.0, 1e-12));
        assert!(r.findings.iter().all(|f| !f.is_violation()), "{:?}", r.findings);
    }

    #[test]
    fn seir_closed_form() {
        let m = parse_model(SEIR).unwrap();
        let r = ngm_r0(&m, &Bindings::new()).unwrap();
        assert!(close(r.r0, 12.5, 1e-12), "{}", r.r0);
        assert_eq!(r.dfe.method, DfeMethod::Newton);
        assert_eq!(r.script_f, vec!["beta*S*I", "0"]);
        assert_eq!(r.script_v[1][0], "-(eta*E)");
    }

    #[test]
    fn seir_dfe_from_birth_death_balance() {
        let m = parse_model(SEIR).unwrap();
        let p = m.params.merged(&Bindings::new().with("Pi", 2.0).with("mu", 0.01));
        let d = compute_dfe(&m, &p, &[]).unwrap();
        assert!(close(d.marking[0], 200.0, 1e-12));
        assert_eq!(&d.marking[1..], &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn permuting_infected_places_keeps_r0() {
        let swapped = SEIR.replace(
            "place E init=0 infected\nplace I init=1 infected",
            "place I init=1 infected\nplace E init=0 infected",
        );
        let a = ngm_r0(&parse_model(SEIR).unwrap(), &Bindings::new()).unwrap();
        let b = ngm_r0(&parse_model(&swapped).unwrap(), &Bindings::new()).unwrap();
        assert!(close(a.r0, b.r0, 1e-12));
    }

    #[test]
    fn singular_v_is_rejected() {
        let m = parse_model(SIRS).unwrap();
        let err = ngm_r0(&m, &Bindings::new().with("gamma", 0.0)).unwrap_err();
        assert!(matches!(err, NgmError::SingularV { .. }), "{err}");
    }

    #[test]
    fn unbound_parameter_after_removal() {
        let mut m = parse_model(SIRS).unwrap();
        m.params.remove("delta");
        assert_eq!(ngm_r0(&m, &Bindings::new()).unwrap_err(), NgmError::Unbound("delta".into()));
    }
}
