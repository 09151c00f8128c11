//! Petri-net data model for compartmental epidemic models.
//!
//! Two encodings are supported. A variable-arc-weight net (VAPN) attaches
//! a flow expression to every arc; a stochastic net (SPN) attaches a rate
//! expression to every transition and an integer multiplicity to every arc.
//! In both cases an expression denotes a total flow (tokens per unit time).

mod dsl;
mod flow;
mod validate;

use std::collections::BTreeSet;

use serde::Serialize;

use crate::expr::{Bindings, Expr, ExprError, TOTAL_SYMBOL};

pub use dsl::parse_model;
pub use flow::{classify_transitions, FlowEntry, FlowRole, FlowTable, TransitionClass};
pub use validate::{validate_assumptions, Finding, FindingStatus};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PetriError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: duplicate {what} `{name}`")]
    Duplicate { line: usize, what: &'static str, name: String },
    #[error("line {line}: arc endpoint `{name}` is not a declared place or transition")]
    Dangling { line: usize, name: String },
    #[error("line {line}: arc `{src}` -> `{dst}` must join a place and a transition")]
    NotBipartite { line: usize, src: String, dst: String },
    #[error("line {line}: {message}")]
    KindMismatch { line: usize, message: String },
    #[error("line {line}: {source}")]
    Expr { line: usize, source: ExprError },
    #[error("line {line}: unknown symbol `{name}` (declare it as a param or place)")]
    UnknownSymbol { line: usize, name: String },
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
    #[error("unknown place `{0}`")]
    UnknownPlace(String),
    #[error("invalid model: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NetKind {
    Vapn,
    Spn,
}

impl std::fmt::Display for NetKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            NetKind::Vapn => "vapn",
            NetKind::Spn => "spn",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Place {
    pub name: String,
    pub infected: bool,
    pub init: f64,
}

/// Classification forced by the modeller.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassOverride {
    Infection,
    Transfer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub name: String,
    /// Propensity, SPN only.
    pub rate: Option<Expr>,
    pub class_override: Option<ClassOverride>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArcDirection {
    /// Place to transition: the transition consumes.
    Input,
    /// Transition to place: the transition produces.
    Output,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ArcWeight {
    Expr(Expr),
    Mult(u32),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Arc {
    pub place: usize,
    pub transition: usize,
    pub direction: ArcDirection,
    pub weight: ArcWeight,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PetriModel {
    pub name: String,
    pub kind: NetKind,
    pub places: Vec<Place>,
    pub transitions: Vec<Transition>,
    pub arcs: Vec<Arc>,
    pub params: Bindings,
    /// Parameters declared without a value; they must be supplied before
    /// anything is evaluated.
    pub unbound: BTreeSet<String>,
}

impl PetriModel {
    pub fn place_index(&self, name: &str) -> Option<usize> {
        self.places.iter().position(|p| p.name == name)
    }

    pub fn transition_index(&self, name: &str) -> Option<usize> {
        self.transitions.iter().position(|t| t.name == name)
    }

    pub fn place_names(&self) -> Vec<&str> {
        self.places.iter().map(|p| p.name.as_str()).collect()
    }

    pub fn infected_indices(&self) -> Vec<usize> {
        (0..self.places.len()).filter(|&i| self.places[i].infected).collect()
    }

    pub fn initial_marking(&self) -> Vec<f64> {
        self.places.iter().map(|p| p.init).collect()
    }

    pub fn declares_param(&self, name: &str) -> bool {
        self.params.contains(name) || self.unbound.contains(name)
    }

    /// Override parameter values. Every name must already be declared.
    pub fn set_params(&mut self, values: &Bindings) -> Result<(), PetriError> {
        for (name, _) in values.iter() {
            if !self.declares_param(name) {
                return Err(PetriError::UnknownParam(name.to_string()));
            }
        }
        for (name, _) in values.iter() {
            self.unbound.remove(name);
        }
        self.params = self.params.merged(values);
        Ok(())
    }

    pub fn set_init(&mut self, place: &str, value: f64) -> Result<(), PetriError> {
        let i = self
            .place_index(place)
            .ok_or_else(|| PetriError::UnknownPlace(place.to_string()))?;
        if !(value >= 0.0 && value.is_finite()) {
            return Err(PetriError::Invalid(format!("initial marking of `{place}` must be >= 0")));
        }
        if self.kind == NetKind::Spn && value.fract() != 0.0 {
            return Err(PetriError::Invalid(format!(
                "initial marking of `{place}` must be an integer in a stochastic net"
            )));
        }
        self.places[i].init = value;
        Ok(())
    }

    /// Flow carried by one arc: the weight for VAPN, rate times
    /// multiplicity for SPN.
    pub fn arc_flow(&self, arc: &Arc) -> Expr {
        match &arc.weight {
            ArcWeight::Expr(e) => e.clone(),
            ArcWeight::Mult(k) => {
                let rate = self.transitions[arc.transition]
                    .rate
                    .clone()
                    .unwrap_or_else(Expr::zero);
                rate.scaled(*k as f64)
            }
        }
    }

    pub fn inputs_of(&self, t: usize) -> impl Iterator<Item = &Arc> {
        self.arcs
            .iter()
            .filter(move |a| a.transition == t && a.direction == ArcDirection::Input)
    }

    pub fn outputs_of(&self, t: usize) -> impl Iterator<Item = &Arc> {
        self.arcs
            .iter()
            .filter(move |a| a.transition == t && a.direction == ArcDirection::Output)
    }

    /// Signed net flow into place `p` caused by transition `t`, or `None`
    /// when they are not connected. SPN: rate × (out − in) multiplicity.
    pub fn transition_flow(&self, t: usize, p: usize) -> Option<Expr> {
        let arcs: Vec<&Arc> = self
            .arcs
            .iter()
            .filter(|a| a.transition == t && a.place == p)
            .collect();
        if arcs.is_empty() {
            return None;
        }
        let flow = match self.kind {
            NetKind::Spn => {
                let mut net = 0i64;
                for a in &arcs {
                    let k = match a.weight {
                        ArcWeight::Mult(k) => k as i64,
                        ArcWeight::Expr(_) => 1,
                    };
                    net += if a.direction == ArcDirection::Output { k } else { -k };
                }
                let rate = self.transitions[t].rate.clone().unwrap_or_else(Expr::zero);
                if net == 0 {
                    Expr::zero()
                } else {
                    rate.scaled(net as f64)
                }
            }
            NetKind::Vapn => signed_sum(arcs.iter().map(|a| (self.arc_flow(a), a.direction))),
        };
        Some(flow.simplify())
    }

    /// Symbolic net inflow of place `p`: inflows minus outflows.
    pub fn net_flow(&self, p: usize) -> Expr {
        let terms: Vec<Expr> = (0..self.transitions.len())
            .filter_map(|t| self.transition_flow(t, p))
            .collect();
        Expr::sum(terms).simplify()
    }

    /// Every expression in the net with the line-independent context needed
    /// for error messages.
    fn expressions(&self) -> Vec<(String, &Expr)> {
        let mut out = Vec::new();
        for t in &self.transitions {
            if let Some(r) = &t.rate {
                out.push((format!("rate of `{}`", t.name), r));
            }
        }
        for a in &self.arcs {
            if let ArcWeight::Expr(e) = &a.weight {
                out.push((
                    format!(
                        "weight of arc between `{}` and `{}`",
                        self.places[a.place].name, self.transitions[a.transition].name
                    ),
                    e,
                ));
            }
        }
        out
    }

    /// Structural checks independent of the source text.
    pub fn validate(&self) -> Result<(), PetriError> {
        let invalid = |m: String| Err(PetriError::Invalid(m));
        let mut seen = std::collections::BTreeSet::new();
        let names = self
            .places
            .iter()
            .map(|p| p.name.as_str())
            .chain(self.transitions.iter().map(|t| t.name.as_str()))
            .chain(self.params.iter().map(|(k, _)| k));
        for name in names {
            if name == TOTAL_SYMBOL {
                return invalid(format!("`{TOTAL_SYMBOL}` is reserved for the total marking"));
            }
            if !seen.insert(name.to_string()) {
                return invalid(format!("name `{name}` declared more than once"));
            }
        }
        for p in &self.places {
            if !(p.init >= 0.0 && p.init.is_finite()) {
                return invalid(format!("initial marking of `{}` must be >= 0", p.name));
            }
            if self.kind == NetKind::Spn && p.init.fract() != 0.0 {
                return invalid(format!("initial marking of `{}` must be an integer", p.name));
            }
        }
        for t in &self.transitions {
            match (self.kind, &t.rate) {
                (NetKind::Spn, None) => return invalid(format!("transition `{}` needs a rate", t.name)),
                (NetKind::Vapn, Some(_)) => {
                    return invalid(format!("transition `{}` has a rate in a vapn net", t.name))
                }
                _ => {}
            }
        }
        let mut arc_keys = std::collections::BTreeSet::new();
        for a in &self.arcs {
            if a.place >= self.places.len() || a.transition >= self.transitions.len() {
                return invalid("arc endpoint out of range".into());
            }
            if !arc_keys.insert((a.place, a.transition, a.direction == ArcDirection::Input)) {
                return invalid(format!(
                    "duplicate arc between `{}` and `{}`",
                    self.places[a.place].name, self.transitions[a.transition].name
                ));
            }
            match (self.kind, &a.weight) {
                (NetKind::Vapn, ArcWeight::Mult(_)) => return invalid("vapn arcs need a weight expression".into()),
                (NetKind::Spn, ArcWeight::Expr(_)) => return invalid("spn arcs need an integer multiplicity".into()),
                (NetKind::Spn, ArcWeight::Mult(0)) => return invalid("arc multiplicity must be >= 1".into()),
                _ => {}
            }
        }
        for (what, e) in self.expressions() {
            for s in e.free_symbols() {
                if s != TOTAL_SYMBOL && !self.declares_param(&s) && self.place_index(&s).is_none() {
                    return invalid(format!("{what} uses unknown symbol `{s}`"));
                }
            }
        }
        Ok(())
    }
}

fn signed_sum(items: impl Iterator<Item = (Expr, ArcDirection)>) -> Expr {
    let terms: Vec<Expr> = items
        .map(|(e, d)| match d {
            ArcDirection::Output => e,
            ArcDirection::Input => Expr::Neg(Box::new(e)),
        })
        .collect();
    Expr::sum(terms)
}
