//! Grid sweeps comparing the next-generation R₀ with attack-rate estimates
//! from deterministic runs.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use super::{estimate_from_series, rrmse, EstimateError, EstimateResult};
use crate::expr::Bindings;
use crate::ngm::{ngm_r0_with, DfePin, NgmOptions};
use crate::numfmt::sig12;
use crate::petri::{NetKind, PetriModel};
use crate::sim::VapnStepper;

/// One axis `name=lo:hi:count`, linearly spaced and inclusive.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridAxis {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

impl GridAxis {
    pub fn parse(spec: &str) -> Result<Self, EstimateError> {
        let bad = |reason: &str| EstimateError::BadGrid {
            spec: spec.to_string(),
            reason: reason.to_string(),
        };
        let (name, range) = spec.split_once('=').ok_or_else(|| bad("expected name=lo:hi:count"))?;
        let parts: Vec<&str> = range.split(':').collect();
        if parts.len() != 3 {
            return Err(bad("expected name=lo:hi:count"));
        }
        let lo: f64 = parts[0].trim().parse().map_err(|_| bad("lo is not a number"))?;
        let hi: f64 = parts[1].trim().parse().map_err(|_| bad("hi is not a number"))?;
        let count: usize = parts[2].trim().parse().map_err(|_| bad("count is not a positive integer"))?;
        if count == 0 {
            return Err(bad("count must be at least 1"));
        }
        if !lo.is_finite() || !hi.is_finite() {
            return Err(bad("bounds must be finite"));
        }
        Ok(GridAxis {
            name: name.trim().to_string(),
            lo,
            hi,
            count,
        })
    }

    pub fn values(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.lo];
        }
        let step = (self.hi - self.lo) / (self.count - 1) as f64;
        (0..self.count)
            .map(|k| if k + 1 == self.count { self.hi } else { self.lo + k as f64 * step })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub grid: Vec<GridAxis>,
    /// Parameter values held fixed at every point (e.g. no waning immunity).
    pub fixed: Bindings,
    pub init: Vec<(String, f64)>,
    pub pins: Vec<DfePin>,
    pub susceptible: String,
    pub dt: f64,
    /// First horizon tried; doubled until the susceptible series converges.
    pub t_end: f64,
    pub max_t_end: f64,
    pub jobs: Option<usize>,
}

impl SweepConfig {
    pub fn new(grid: Vec<GridAxis>) -> Self {
        SweepConfig {
            grid,
            fixed: Bindings::new(),
            init: Vec::new(),
            pins: Vec::new(),
            susceptible: "S".into(),
            dt: crate::sim::DEFAULT_DT,
            t_end: 400.0,
            max_t_end: 204_800.0,
            jobs: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub point: Bindings,
    pub r0_alg: Option<f64>,
    pub r0_hat: Option<f64>,
    /// Signed `(r0_hat − r0_alg) / r0_alg`.
    pub rel_err: Option<f64>,
    pub estimate: Option<EstimateResult>,
    /// Horizon at which the susceptible series had converged.
    pub t_end: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub model: String,
    pub params: Vec<String>,
    pub rows: Vec<SweepRow>,
    pub rrmse: Option<f64>,
    pub max_rel_err: Option<f64>,
    pub n_points: usize,
    pub failures: usize,
    pub overrides: Bindings,
}

#[derive(Serialize)]
struct Summary<'a> {
    rrmse: Option<f64>,
    max_rel_err: Option<f64>,
    n_points: usize,
    failures: usize,
    overrides: &'a Bindings,
}

impl SweepReport {
    /// CSV with header `<params>,r0_alg,r0_hat,rel_err`; failed entries are
    /// left empty.
    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = self.params.clone();
        header.extend(["r0_alg", "r0_hat", "rel_err"].map(String::from));
        out.write_record(&header)?;
        let opt = |v: Option<f64>| v.map(sig12).unwrap_or_default();
        for row in &self.rows {
            let mut rec: Vec<String> = self
                .params
                .iter()
                .map(|p| sig12(row.point.get(p).unwrap_or(f64::NAN)))
                .collect();
            rec.extend([opt(row.r0_alg), opt(row.r0_hat), opt(row.rel_err)]);
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Summary `{rrmse, max_rel_err, n_points, failures, overrides}`.
    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::to_value(Summary {
            rrmse: self.rrmse,
            max_rel_err: self.max_rel_err,
            n_points: self.n_points,
            failures: self.failures,
            overrides: &self.overrides,
        })
        .expect("summary serializes")
    }
}

fn grid_points(axes: &[GridAxis]) -> Vec<Vec<f64>> {
    let mut points = vec![Vec::new()];
    for axis in axes {
        let values = axis.values();
        points = points
            .into_iter()
            .flat_map(|p| {
                values.iter().map(move |&v| {
                    let mut q = p.clone();
                    q.push(v);
                    q
                })
            })
            .collect();
    }
    points
}

/// Run the deterministic model until the susceptible series converges,
/// doubling the horizon as needed.
fn simulate_to_convergence(
    m: &PetriModel,
    cfg: &SweepConfig,
    s_index: usize,
    n: f64,
    immune: f64,
) -> Result<(EstimateResult, f64), String> {
    let mut stepper = VapnStepper::new(m).map_err(|e| e.to_string())?;
    let mut x = m.initial_marking();
    let mut s = vec![x[s_index]];
    let mut k: u64 = 0;
    let mut horizon = cfg.t_end;
    loop {
        while (k as f64 + 1.0) * cfg.dt <= horizon * (1.0 + 1e-12) {
            let step = stepper.step(&x, cfg.dt, k as f64 * cfg.dt).map_err(|e| e.to_string())?;
            x = step.marking;
            s.push(x[s_index]);
            k += 1;
        }
        match estimate_from_series(&s, n, immune) {
            Ok(r) => return Ok((r, horizon)),
            Err(EstimateError::NotConverged { .. }) if horizon * 2.0 <= cfg.max_t_end => horizon *= 2.0,
            Err(e) => return Err(format!("{e} (horizon {horizon})")),
        }
    }
}

fn run_point(base: &PetriModel, cfg: &SweepConfig, names: &[String], values: &[f64]) -> SweepRow {
    let mut point = Bindings::new();
    for (n, v) in names.iter().zip(values) {
        point.set(n.clone(), *v);
    }
    let mut row = SweepRow {
        point: point.clone(),
        r0_alg: None,
        r0_hat: None,
        rel_err: None,
        estimate: None,
        t_end: None,
        error: None,
    };
    let mut m = base.clone();
    if let Err(e) = m.set_params(&cfg.fixed.merged(&point)) {
        row.error = Some(e.to_string());
        return row;
    }
    let opts = NgmOptions { pins: cfg.pins.clone() };
    match ngm_r0_with(&m, &Bindings::new(), &opts) {
        Ok(r) => row.r0_alg = Some(r.r0),
        Err(e) => {
            row.error = Some(format!("ngm: {e}"));
            return row;
        }
    }
    let s_index = m.place_index(&cfg.susceptible).expect("checked before the sweep");
    let init = m.initial_marking();
    let n: f64 = init.iter().sum();
    let immune: f64 = (0..init.len())
        .filter(|&i| i != s_index && !m.places[i].infected)
        .map(|i| init[i])
        .sum();
    match simulate_to_convergence(&m, cfg, s_index, n, immune) {
        Ok((est, horizon)) => {
            let alg = row.r0_alg.unwrap();
            row.r0_hat = Some(est.r0_hat);
            row.rel_err = Some((est.r0_hat - alg) / alg);
            row.estimate = Some(est);
            row.t_end = Some(horizon);
        }
        Err(e) => row.error = Some(format!("estimate: {e}")),
    }
    row
}

/// Evaluate every grid point in lexicographic order (last axis fastest).
/// Per-point failures are recorded in the row; configuration errors are
/// returned.
pub fn sweep(m: &PetriModel, cfg: &SweepConfig) -> Result<SweepReport, EstimateError> {
    if m.kind != NetKind::Vapn {
        return Err(EstimateError::Invalid("sweeps need a vapn model".into()));
    }
    if !(cfg.dt > 0.0 && cfg.dt.is_finite()) {
        return Err(EstimateError::Invalid(format!("step size must be positive, got {}", cfg.dt)));
    }
    if !(cfg.t_end > 0.0 && cfg.t_end <= cfg.max_t_end) {
        return Err(EstimateError::Invalid("need 0 < t_end <= max_t_end".into()));
    }
    if cfg.grid.is_empty() {
        return Err(EstimateError::Invalid("grid has no axes".into()));
    }
    for name in cfg.grid.iter().map(|a| a.name.as_str()).chain(cfg.fixed.iter().map(|(k, _)| k)) {
        if !m.declares_param(name) {
            return Err(EstimateError::UnknownParam(name.to_string()));
        }
    }
    if m.place_index(&cfg.susceptible).is_none() {
        return Err(EstimateError::UnknownPlace(cfg.susceptible.clone()));
    }
    let mut base = m.clone();
    for (place, v) in &cfg.init {
        base.set_init(place, *v).map_err(|e| EstimateError::Invalid(e.to_string()))?;
    }

    let names: Vec<String> = cfg.grid.iter().map(|a| a.name.clone()).collect();
    let points = grid_points(&cfg.grid);
    let run = || -> Vec<SweepRow> {
        points
            .par_iter()
            .map(|values| run_point(&base, cfg, &names, values))
            .collect()
    };
    let rows = match cfg.jobs {
        Some(j) => rayon::ThreadPoolBuilder::new()
            .num_threads(j.max(1))
            .build()
            .map_err(|e| EstimateError::Invalid(e.to_string()))?
            .install(run),
        None => run(),
    };

    let pairs: Vec<(f64, f64)> = rows
        .iter()
        .filter_map(|r| Some((r.r0_alg?, r.r0_hat?)))
        .filter(|(alg, _)| *alg > 0.0)
        .collect();
    let rr = rrmse(&pairs).ok();
    let max_rel_err = rows
        .iter()
        .filter_map(|r| r.rel_err.map(f64::abs))
        .fold(None, |m: Option<f64>, e| Some(m.map_or(e, |m| m.max(e))));
    Ok(SweepReport {
        model: m.name.clone(),
        params: names,
        n_points: rows.len(),
        failures: rows.iter().filter(|r| r.error.is_some()).count(),
        rows,
        rrmse: rr,
        max_rel_err,
        overrides: cfg.fixed.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_parsing_and_values() {
        let a = GridAxis::parse("beta=0.1:0.5:5").unwrap();
        assert_eq!(a.values(), vec![0.1, 0.2, 0.30000000000000004, 0.4, 0.5]);
        assert_eq!(GridAxis::parse("x=2:9:1").unwrap().values(), vec![2.0]);
        assert!(GridAxis::parse("beta=0.1:0.5").is_err());
        assert!(GridAxis::parse("beta=0.1:0.5:0").is_err());
        assert!(GridAxis::parse("beta").is_err());
    }

    #[test]
    fn lexicographic_order() {
        let axes = vec![GridAxis::parse("a=0:1:2").unwrap(), GridAxis::parse("b=5:7:3").unwrap()];
        let pts = grid_points(&axes);
        assert_eq!(pts.len(), 6);
        assert_eq!(pts[0], vec![0.0, 5.0]);
        assert_eq!(pts[1], vec![0.0, 6.0]);
        assert_eq!(pts[3], vec![1.0, 5.0]);
    }
}
