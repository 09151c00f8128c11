//! R₀ from simulated output by the attack-rate (final-size) method, and
//! its comparison with the next-generation value over parameter grids.

mod sweep;

use serde::Serialize;

use crate::sim::Trajectory;

pub use sweep::{sweep, GridAxis, SweepConfig, SweepReport, SweepRow};

/// Fraction of the samples forming the tail used for the convergence test.
pub const TAIL_FRACTION: f64 = 0.1;
/// Allowed change of the susceptible count over the tail, relative to `n`.
pub const CONVERGENCE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EstimateError {
    #[error("trajectory has no place `{0}`")]
    UnknownPlace(String),
    #[error("trajectory is empty")]
    EmptyTrajectory,
    #[error("susceptible count has not converged: it changed by {change} over the last 10% of samples (tolerance {tol})")]
    NotConverged { change: f64, tol: f64 },
    #[error("{0}")]
    Invalid(String),
    #[error("no rows to compare")]
    EmptyRows,
    #[error("row {index}: algebraic R0 must be positive, got {value}")]
    NonPositiveAlg { index: usize, value: f64 },
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
    #[error("bad grid `{spec}`: {reason}")]
    BadGrid { spec: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateResult {
    pub r0_hat: f64,
    pub attack_rate: f64,
    pub s0: f64,
    pub s_inf: f64,
    pub n: f64,
    /// Initially removed individuals, excluded from the final-size balance.
    pub immune: f64,
    /// The susceptible count never moved; `r0_hat` is the limiting value.
    pub no_outbreak: bool,
    /// Always `None`: deterministic runs give point estimates only.
    pub ci95: Option<(f64, f64)>,
}

/// Attack-rate estimate from the susceptible series of `traj`, with no
/// initially immune individuals.
pub fn attack_rate_r0(traj: &Trajectory, susceptible: &str, n: f64) -> Result<EstimateResult, EstimateError> {
    attack_rate_r0_with(traj, susceptible, n, 0.0)
}

/// Attack-rate estimate solving the final-size relation
/// `ln(S0/S∞) = R0 · (n − S∞ − immune) / n`.
///
/// The right-hand side counts everyone who was ever infected, including
/// the initial cases, so the relation is exact for SIR-type dynamics even
/// when the seed is not negligible or R0 < 1. With `S0 = n` it reduces to
/// `R0 = ln(S0/S∞) / AR`.
pub fn attack_rate_r0_with(
    traj: &Trajectory,
    susceptible: &str,
    n: f64,
    immune: f64,
) -> Result<EstimateResult, EstimateError> {
    let s = traj
        .series(susceptible)
        .ok_or_else(|| EstimateError::UnknownPlace(susceptible.to_string()))?;
    estimate_from_series(&s, n, immune)
}

/// Attack-rate estimate from a bare susceptible series.
pub fn estimate_from_series(s: &[f64], n: f64, immune: f64) -> Result<EstimateResult, EstimateError> {
    if s.is_empty() {
        return Err(EstimateError::EmptyTrajectory);
    }
    if !(n > 0.0 && n.is_finite()) {
        return Err(EstimateError::Invalid(format!("population size must be positive, got {n}")));
    }
    check_converged(s, n)?;
    let s0 = s[0];
    let s_inf = *s.last().unwrap();
    if !(s_inf <= s0 && s0 <= n) {
        return Err(EstimateError::Invalid(format!(
            "need S∞ <= S0 <= n, got S∞ = {s_inf}, S0 = {s0}, n = {n}"
        )));
    }
    if s_inf <= 0.0 {
        return Err(EstimateError::Invalid("susceptible place was emptied; R0 is unbounded".into()));
    }
    let ever_infected = n - s_inf - immune;
    let no_outbreak = s_inf == s0;
    let r0_hat = if no_outbreak {
        // Limit of ln(S0/S∞)·n/(n − S∞ − immune) as S∞ → S0.
        if n - s0 - immune > 1e-12 * n {
            0.0
        } else {
            n / s0
        }
    } else {
        if ever_infected <= 0.0 {
            return Err(EstimateError::Invalid(format!(
                "immune count {immune} leaves no room for infections"
            )));
        }
        (s0 / s_inf).ln() * n / ever_infected
    };
    Ok(EstimateResult {
        r0_hat,
        attack_rate: (s0 - s_inf) / n,
        s0,
        s_inf,
        n,
        immune,
        no_outbreak,
        ci95: None,
    })
}

fn check_converged(s: &[f64], n: f64) -> Result<(), EstimateError> {
    let len = s.len();
    let tail = ((len as f64 * TAIL_FRACTION).ceil() as usize).clamp(1, len);
    let window = &s[len - tail..];
    let (lo, hi) = window
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let change = hi - lo;
    let tol = CONVERGENCE_TOL * n;
    if change > tol {
        return Err(EstimateError::NotConverged { change, tol });
    }
    Ok(())
}

/// Final susceptible fraction `s∞` solving `ln(s0/s) = r0 · (1 − s − immune)`
/// on `(0, s0)` by bisection. For `r0 <= 0` returns `s0`.
pub fn final_size(r0: f64, s0: f64, immune: f64) -> f64 {
    if r0 <= 0.0 {
        return s0;
    }
    let g = |s: f64| (s0 / s).ln() - r0 * (1.0 - s - immune);
    // g > 0 near 0; g(s0) = -r0·(1 − s0 − immune) <= 0.
    let (mut lo, mut hi) = (f64::MIN_POSITIVE, s0);
    if g(hi) >= 0.0 {
        return s0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-16 * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Root mean square of the relative errors `(hat − alg)/alg` over
/// `(alg, hat)` pairs.
pub fn rrmse(rows: &[(f64, f64)]) -> Result<f64, EstimateError> {
    if rows.is_empty() {
        return Err(EstimateError::EmptyRows);
    }
    let mut acc = 0.0;
    for (index, &(alg, hat)) in rows.iter().enumerate() {
        if alg.is_nan() || alg <= 0.0 {
            return Err(EstimateError::NonPositiveAlg { index, value: alg });
        }
        let e = (hat - alg) / alg;
        acc += e * e;
    }
    Ok((acc / rows.len() as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs()
    }

    #[test]
    fn final_size_examples() {
        let r = estimate_from_series(&[1.0, 0.5, 0.0595, 0.0595], 1.0, 0.0).unwrap();
        assert!((r.r0_hat - 3.0005).abs() < 5e-4, "{}", r.r0_hat);
        let r = estimate_from_series(&[1.0, 0.2032, 0.2032], 1.0, 0.0).unwrap();
        assert!((r.r0_hat - 2.0).abs() < 1e-3, "{}", r.r0_hat);
        assert!(close(r.attack_rate, 0.7968, 1e-12));
    }

    #[test]
    fn small_outbreak_limit_is_one() {
        let r = estimate_from_series(&[1.0, 1.0 - 1e-9, 1.0 - 1e-9], 1.0, 0.0).unwrap();
        assert!((r.r0_hat - 1.0).abs() < 1e-6);
        let r = estimate_from_series(&[1.0, 1.0], 1.0, 0.0).unwrap();
        assert!(r.no_outbreak);
        assert_eq!(r.r0_hat, 1.0);
    }

    #[test]
    fn unconverged_series_is_rejected() {
        let s: Vec<f64> = (0..100).map(|k| 1000.0 - k as f64).collect();
        assert!(matches!(
            estimate_from_series(&s, 1000.0, 0.0),
            Err(EstimateError::NotConverged { .. })
        ));
    }

    #[test]
    fn final_size_inverts_estimator() {
        for r0 in [0.5, 1.5, 2.0, 3.0, 5.0] {
            let s0 = 0.999;
            let s_inf = final_size(r0, s0, 0.0);
            let r = estimate_from_series(&[s0, s_inf], 1.0, 0.0).unwrap();
            assert!(close(r.r0_hat, r0, 1e-9), "{r0}: {}", r.r0_hat);
        }
    }

    #[test]
    fn rrmse_examples() {
        assert_eq!(rrmse(&[(2.0, 2.0), (3.0, 3.0)]).unwrap(), 0.0);
        assert!(close(rrmse(&[(2.0, 2.02)]).unwrap(), 0.01, 1e-12));
        assert!(close(rrmse(&[(1.0, 1.01), (4.0, 3.96)]).unwrap(), 0.01, 1e-12));
        assert_eq!(rrmse(&[]), Err(EstimateError::EmptyRows));
        assert!(matches!(rrmse(&[(0.0, 1.0)]), Err(EstimateError::NonPositiveAlg { .. })));
    }
}
