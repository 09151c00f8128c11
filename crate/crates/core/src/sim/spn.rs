//! Gillespie's direct method.
//!
//! Each event draws two uniforms from the stream: the first sets the
//! waiting time `-ln(u)/a0`, the second picks the transition in proportion
//! to its propensity.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{compile, SimError, Slots, Trajectory, DEFAULT_SAMPLE_DT};
use crate::expr::CompiledExpr;
use crate::petri::{ArcWeight, NetKind, PetriModel};

/// Recorded in every stochastic trajectory.
pub const RNG_ALGORITHM: &str = "ChaCha8Rng (rand_chacha 0.9)";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpnOptions {
    pub t_end: f64,
    pub seed: u64,
    /// ChaCha stream; replicate k of a batch uses stream k.
    pub stream: u64,
    pub sample_dt: f64,
}

impl SpnOptions {
    pub fn new(t_end: f64, seed: u64) -> Self {
        SpnOptions {
            t_end,
            seed,
            stream: 0,
            sample_dt: DEFAULT_SAMPLE_DT,
        }
    }
}

struct Compiled {
    rates: Vec<CompiledExpr>,
    /// Per transition: (place, multiplicity) of input arcs.
    inputs: Vec<Vec<(usize, f64)>>,
    /// Per transition: net change of each touched place.
    delta: Vec<Vec<(usize, f64)>>,
}

fn compile_spn(m: &PetriModel, names: &[String]) -> Result<Compiled, SimError> {
    let n_t = m.transitions.len();
    let mut rates = Vec::with_capacity(n_t);
    let mut inputs = vec![Vec::new(); n_t];
    let mut delta: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n_t];
    for tr in &m.transitions {
        let rate = tr.rate.clone().unwrap_or_else(crate::expr::Expr::zero);
        rates.push(compile(&rate, names, || format!("rate of `{}`", tr.name))?);
    }
    for a in &m.arcs {
        let k = match a.weight {
            ArcWeight::Mult(k) => k as f64,
            ArcWeight::Expr(_) => 1.0,
        };
        let signed = match a.direction {
            crate::petri::ArcDirection::Input => {
                inputs[a.transition].push((a.place, k));
                -k
            }
            crate::petri::ArcDirection::Output => k,
        };
        let d = &mut delta[a.transition];
        match d.iter_mut().find(|(p, _)| *p == a.place) {
            Some(e) => e.1 += signed,
            None => d.push((a.place, signed)),
        }
    }
    Ok(Compiled { rates, inputs, delta })
}

/// One stochastic trajectory sampled on the grid `0, sample_dt, ...` up to
/// `t_end`, plus the state at `t_end` when it is not on the grid.
pub fn run_spn(m: &PetriModel, opts: &SpnOptions) -> Result<Trajectory, SimError> {
    if m.kind != NetKind::Spn {
        return Err(SimError::WrongKind("SPN", "spn"));
    }
    if !(opts.t_end >= 0.0 && opts.t_end.is_finite()) {
        return Err(SimError::BadHorizon(opts.t_end));
    }
    if !(opts.sample_dt > 0.0 && opts.sample_dt.is_finite()) {
        return Err(SimError::BadStep(opts.sample_dt));
    }
    for p in &m.places {
        if p.init < 0.0 || p.init.fract() != 0.0 {
            return Err(SimError::NonIntegerMarking(p.name.clone()));
        }
    }
    let (mut slots, names) = Slots::new(m);
    let c = compile_spn(m, &names)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    rng.set_stream(opts.stream);

    let mut x = m.initial_marking();
    let mut times = Vec::new();
    let mut markings = Vec::new();
    let mut props = vec![0.0; c.rates.len()];
    let mut t = 0.0;
    let mut next_k = 0u64;
    let grid = |k: u64| k as f64 * opts.sample_dt;
    loop {
        let total = slots.load(&x);
        let mut a0 = 0.0;
        for (j, rate) in c.rates.iter().enumerate() {
            let enabled = c.inputs[j].iter().all(|&(p, k)| x[p] >= k);
            props[j] = if enabled {
                let v = rate.eval(&slots.values, total).map_err(|source| SimError::Eval {
                    what: format!("rate of `{}` at t = {t}", m.transitions[j].name),
                    source,
                })?;
                if v.is_nan() || v < 0.0 || v.is_infinite() {
                    return Err(SimError::BadRate {
                        transition: m.transitions[j].name.clone(),
                        value: v,
                        t,
                    });
                }
                v
            } else {
                0.0
            };
            a0 += props[j];
        }
        let t_next = if a0 > 0.0 {
            let u: f64 = 1.0 - rng.random::<f64>();
            t - u.ln() / a0
        } else {
            f64::INFINITY
        };
        while grid(next_k) <= opts.t_end && grid(next_k) <= t_next {
            times.push(grid(next_k));
            markings.push(x.clone());
            next_k += 1;
        }
        if t_next > opts.t_end {
            break;
        }
        let target = rng.random::<f64>() * a0;
        let mut acc = 0.0;
        let mut chosen = None;
        for (j, &p) in props.iter().enumerate() {
            if p > 0.0 {
                acc += p;
                chosen = Some(j);
                if target < acc {
                    break;
                }
            }
        }
        let j = chosen.expect("a0 > 0 implies an enabled transition");
        for &(p, d) in &c.delta[j] {
            x[p] += d;
        }
        t = t_next;
    }
    if times.last().is_none_or(|&last| last < opts.t_end) {
        times.push(opts.t_end);
        markings.push(x);
    }
    Ok(Trajectory {
        kind: NetKind::Spn,
        place_names: m.places.iter().map(|p| p.name.clone()).collect(),
        times,
        markings,
        clipping_events: 0,
        rng_seed: Some(opts.seed),
        rng_stream: Some(opts.stream),
        rng_algorithm: Some(RNG_ALGORITHM.to_string()),
    })
}

/// `count` independent replicates on streams `0..count`, run in parallel.
pub fn run_spn_replicates(m: &PetriModel, opts: &SpnOptions, count: usize) -> Result<Vec<Trajectory>, SimError> {
    (0..count as u64)
        .into_par_iter()
        .map(|k| run_spn(m, &SpnOptions { stream: k, ..*opts }))
        .collect()
}
