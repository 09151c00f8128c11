//! Simulators: synchronous discrete-time stepping of variable-arc-weight
//! nets and Gillespie's direct method for stochastic nets.

mod spn;
mod trajectory;
mod vapn;

use crate::expr::{CompiledExpr, ExprError};
use crate::petri::PetriModel;

pub use spn::{run_spn, run_spn_replicates, SpnOptions, RNG_ALGORITHM};
pub use trajectory::Trajectory;
pub use vapn::{run_vapn, step_vapn, Step, VapnStepper};

/// Default VAPN step size in model time units.
pub const DEFAULT_DT: f64 = 0.1;
/// Default SPN output grid spacing.
pub const DEFAULT_SAMPLE_DT: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("{what}: {source}")]
    Eval { what: String, source: ExprError },
    #[error("arc weight between `{place}` and `{transition}` is negative ({value}) at t = {t}")]
    NegativeWeight {
        place: String,
        transition: String,
        value: f64,
        t: f64,
    },
    #[error("rate of `{transition}` is {value} at t = {t}; rates must be non-negative")]
    BadRate { transition: String, value: f64, t: f64 },
    #[error("initial marking of `{0}` is not a non-negative integer")]
    NonIntegerMarking(String),
    #[error("step size must be positive and finite, got {0}")]
    BadStep(f64),
    #[error("horizon must be non-negative and finite, got {0}")]
    BadHorizon(f64),
    #[error("{0} simulator needs a {1} model")]
    WrongKind(&'static str, &'static str),
}

/// Symbol table for compiled model expressions: places first, then
/// parameters, so that a marking can be copied into the leading slots.
struct Slots {
    values: Vec<f64>,
    n_places: usize,
}

impl Slots {
    fn new(m: &PetriModel) -> (Self, Vec<String>) {
        let mut names: Vec<String> = m.places.iter().map(|p| p.name.clone()).collect();
        let mut values = vec![0.0; names.len()];
        for (k, v) in m.params.iter() {
            names.push(k.to_string());
            values.push(v);
        }
        (
            Slots {
                values,
                n_places: m.places.len(),
            },
            names,
        )
    }

    fn load(&mut self, marking: &[f64]) -> f64 {
        self.values[..self.n_places].copy_from_slice(marking);
        marking.iter().sum()
    }
}

fn compile(e: &crate::expr::Expr, names: &[String], what: impl Fn() -> String) -> Result<CompiledExpr, SimError> {
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    CompiledExpr::new(e, &refs).map_err(|source| SimError::Eval { what: what(), source })
}

/// Number of steps of size `dt` needed to reach `t_end`, treating a
/// quotient within 1e-9 of an integer as exact.
fn step_count(t_end: f64, dt: f64) -> usize {
    let q = t_end / dt;
    let r = q.round();
    if (q - r).abs() <= 1e-9 * q.max(1.0) {
        r as usize
    } else {
        q.ceil() as usize
    }
}
