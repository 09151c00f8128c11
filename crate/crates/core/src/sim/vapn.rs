//! Synchronous discrete-time stepping: every arc weight is evaluated at
//! the pre-step marking, scaled by `dt`, and all transitions fire at once.

use super::{compile, step_count, SimError, Slots, Trajectory};
use crate::expr::CompiledExpr;
use crate::petri::{ArcDirection, NetKind, PetriModel};

const MAX_CLIP_ROUNDS: usize = 64;

struct ArcFlow {
    place: usize,
    transition: usize,
    direction: ArcDirection,
    weight: CompiledExpr,
}

/// A VAPN compiled for repeated stepping.
pub struct VapnStepper<'m> {
    model: &'m PetriModel,
    arcs: Vec<ArcFlow>,
    slots: Slots,
    flows: Vec<f64>,
    scale: Vec<f64>,
}

/// Result of one step.
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub marking: Vec<f64>,
    /// Transitions whose flow was scaled down in this step.
    pub clipped: usize,
}

impl<'m> VapnStepper<'m> {
    pub fn new(model: &'m PetriModel) -> Result<Self, SimError> {
        if model.kind != NetKind::Vapn {
            return Err(SimError::WrongKind("VAPN", "vapn"));
        }
        let (slots, names) = Slots::new(model);
        let mut arcs = Vec::with_capacity(model.arcs.len());
        for a in &model.arcs {
            let weight = compile(&model.arc_flow(a), &names, || {
                format!(
                    "weight of arc between `{}` and `{}`",
                    model.places[a.place].name, model.transitions[a.transition].name
                )
            })?;
            arcs.push(ArcFlow {
                place: a.place,
                transition: a.transition,
                direction: a.direction,
                weight,
            });
        }
        Ok(VapnStepper {
            model,
            flows: vec![0.0; arcs.len()],
            scale: vec![1.0; model.transitions.len()],
            arcs,
            slots,
        })
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(x);
        for (a, f) in self.arcs.iter().zip(&self.flows) {
            let v = self.scale[a.transition] * f;
            match a.direction {
                ArcDirection::Output => out[a.place] += v,
                ArcDirection::Input => out[a.place] -= v,
            }
        }
    }

    /// Advance `x` by `dt` at model time `t` (used only in messages).
    pub fn step(&mut self, x: &[f64], dt: f64, t: f64) -> Result<Step, SimError> {
        let total = self.slots.load(x);
        for (k, a) in self.arcs.iter().enumerate() {
            let w = a.weight.eval(&self.slots.values, total).map_err(|source| SimError::Eval {
                what: format!(
                    "weight of arc between `{}` and `{}` at t = {t}",
                    self.model.places[a.place].name, self.model.transitions[a.transition].name
                ),
                source,
            })?;
            if w < 0.0 || w.is_nan() {
                return Err(SimError::NegativeWeight {
                    place: self.model.places[a.place].name.clone(),
                    transition: self.model.transitions[a.transition].name.clone(),
                    value: w,
                    t,
                });
            }
            self.flows[k] = w * dt;
        }
        self.scale.iter_mut().for_each(|s| *s = 1.0);

        let n = x.len();
        let mut next = vec![0.0; n];
        let mut clipped_place = vec![false; n];
        self.apply(x, &mut next);
        let mut round = 0;
        loop {
            // Places that went negative beyond round-off.
            let mut inflow = vec![0.0; n];
            let mut outflow = vec![0.0; n];
            for (a, f) in self.arcs.iter().zip(&self.flows) {
                let v = self.scale[a.transition] * f;
                match a.direction {
                    ArcDirection::Output => inflow[a.place] += v,
                    ArcDirection::Input => outflow[a.place] += v,
                }
            }
            let short: Vec<usize> = (0..n)
                .filter(|&i| next[i] < 0.0 && next[i] < -1e-12 * (x[i] + inflow[i] + outflow[i]))
                .collect();
            if short.is_empty() {
                break;
            }
            round += 1;
            for &i in &short {
                clipped_place[i] = true;
                let k = if round > MAX_CLIP_ROUNDS || outflow[i] == 0.0 {
                    0.0
                } else {
                    ((x[i] + inflow[i]) / outflow[i]).clamp(0.0, 1.0)
                };
                for a in self.arcs.iter().filter(|a| a.place == i && a.direction == ArcDirection::Input) {
                    self.scale[a.transition] *= k;
                }
            }
            self.apply(x, &mut next);
        }
        for i in 0..n {
            if next[i] < 0.0 {
                // Only round-off remains here.
                next[i] = 0.0;
            } else if clipped_place[i] && next[i] <= 1e-12 * x[i].max(1.0) {
                next[i] = 0.0;
            }
        }
        let clipped = self.scale.iter().filter(|&&s| s < 1.0).count();
        Ok(Step { marking: next, clipped })
    }
}

/// One synchronous step of size `dt` from `marking`.
pub fn step_vapn(m: &PetriModel, marking: &[f64], dt: f64) -> Result<Step, SimError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(SimError::BadStep(dt));
    }
    VapnStepper::new(m)?.step(marking, dt, 0.0)
}

/// Repeated steps from the initial marking up to `t_end`. Every step is
/// recorded; the last one is shortened to land exactly on `t_end`.
pub fn run_vapn(m: &PetriModel, t_end: f64, dt: f64) -> Result<Trajectory, SimError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(SimError::BadStep(dt));
    }
    if !(t_end >= 0.0 && t_end.is_finite()) {
        return Err(SimError::BadHorizon(t_end));
    }
    let mut stepper = VapnStepper::new(m)?;
    let steps = step_count(t_end, dt);
    let mut times = Vec::with_capacity(steps + 1);
    let mut markings = Vec::with_capacity(steps + 1);
    let mut x = m.initial_marking();
    times.push(0.0);
    markings.push(x.clone());
    let mut clipping_events = 0;
    for k in 0..steps {
        let t = k as f64 * dt;
        let (h, t_next) = if k + 1 == steps { (t_end - t, t_end) } else { (dt, (k + 1) as f64 * dt) };
        let s = stepper.step(&x, h, t)?;
        clipping_events += s.clipped;
        x = s.marking;
        times.push(t_next);
        markings.push(x.clone());
    }
    Ok(Trajectory {
        kind: NetKind::Vapn,
        place_names: m.places.iter().map(|p| p.name.clone()).collect(),
        times,
        markings,
        clipping_events,
        rng_seed: None,
        rng_stream: None,
        rng_algorithm: None,
    })
}
