//! Transition classification and per-place flow bookkeeping.

use serde::Serialize;

use super::{ArcDirection, ClassOverride, PetriModel};
use crate::expr::Expr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TransitionClass {
    /// Consumes from a non-infected place and produces into an infected one.
    Infection,
    /// No inputs, produces into an infected place.
    Source,
    Transfer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FlowRole {
    Infection,
    Source,
    TransferIn,
    TransferOut,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowEntry {
    pub transition: usize,
    pub role: FlowRole,
    /// Signed net inflow into the place caused by the transition.
    pub flow: Expr,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowTable {
    /// Place indices of the infected places, in declaration order.
    pub infected: Vec<usize>,
    /// Class of every transition.
    pub classes: Vec<TransitionClass>,
    /// `entries[k]` lists the flows touching `infected[k]`.
    pub entries: Vec<Vec<FlowEntry>>,
}

impl FlowTable {
    /// Sum of the entries for the k-th infected place.
    pub fn total(&self, k: usize) -> Expr {
        Expr::sum(self.entries[k].iter().map(|e| e.flow.clone()).collect()).simplify()
    }
}

fn classify(m: &PetriModel, t: usize) -> TransitionClass {
    match m.transitions[t].class_override {
        Some(ClassOverride::Infection) => return TransitionClass::Infection,
        Some(ClassOverride::Transfer) => return TransitionClass::Transfer,
        None => {}
    }
    let has_input = m.inputs_of(t).next().is_some();
    let input_from_clean = m.inputs_of(t).any(|a| !m.places[a.place].infected);
    let output_to_infected = m.outputs_of(t).any(|a| m.places[a.place].infected);
    if !has_input && output_to_infected {
        TransitionClass::Source
    } else if input_from_clean && output_to_infected {
        TransitionClass::Infection
    } else {
        TransitionClass::Transfer
    }
}

/// Classify every transition and collect the signed flows touching each
/// infected place.
pub fn classify_transitions(m: &PetriModel) -> FlowTable {
    let infected = m.infected_indices();
    let classes: Vec<TransitionClass> = (0..m.transitions.len()).map(|t| classify(m, t)).collect();
    let entries = infected
        .iter()
        .map(|&p| {
            (0..m.transitions.len())
                .filter_map(|t| {
                    let flow = m.transition_flow(t, p)?;
                    let role = match classes[t] {
                        TransitionClass::Infection => FlowRole::Infection,
                        TransitionClass::Source => FlowRole::Source,
                        TransitionClass::Transfer => {
                            let produces = m
                                .arcs
                                .iter()
                                .any(|a| a.transition == t && a.place == p && a.direction == ArcDirection::Output);
                            if produces {
                                FlowRole::TransferIn
                            } else {
                                FlowRole::TransferOut
                            }
                        }
                    };
                    Some(FlowEntry { transition: t, role, flow })
                })
                .collect()
        })
        .collect();
    FlowTable {
        infected,
        classes,
        entries,
    }
}
