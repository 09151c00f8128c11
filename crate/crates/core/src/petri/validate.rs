//! Structural checks of the next-generation assumptions A1–A5.
//!
//! A1 (markings stay non-negative) and A2 (an empty place cannot be
//! consumed from) hold by construction of the simulators. A3 and A4 are
//! structural. A5 needs the numeric V matrix and is filled in by
//! [`crate::ngm::ngm_r0`].

use serde::Serialize;

use super::{classify_transitions, ArcWeight, NetKind, PetriModel, TransitionClass};
use crate::expr::Bindings;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FindingStatus {
    Satisfied,
    Violated,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Finding {
    pub code: String,
    pub status: FindingStatus,
    pub message: String,
}

impl Finding {
    pub fn new(code: &str, status: FindingStatus, message: impl Into<String>) -> Self {
        Finding {
            code: code.to_string(),
            status,
            message: message.into(),
        }
    }

    pub fn is_violation(&self) -> bool {
        self.status == FindingStatus::Violated
    }
}

/// Marking used to compare VAPN weights: the initial marking with empty
/// places set to one token so that mass-action terms do not vanish.
fn probe_bindings(m: &PetriModel) -> Bindings {
    let marking: Vec<f64> = m
        .places
        .iter()
        .map(|p| if p.init > 0.0 { p.init } else { 1.0 })
        .collect();
    let mut b = m.params.clone();
    b.bind_marking(&m.place_names(), &marking);
    b
}

fn a3(m: &PetriModel, classes: &[TransitionClass]) -> Finding {
    let probe = probe_bindings(m);
    let mut offenders = Vec::new();
    for (t, class) in classes.iter().enumerate() {
        if *class != TransitionClass::Infection {
            continue;
        }
        let amount = |infected: bool, output: bool| -> Result<f64, String> {
            let mut total = 0.0;
            for a in m.arcs.iter().filter(|a| a.transition == t) {
                let is_output = a.direction == super::ArcDirection::Output;
                if m.places[a.place].infected != infected || is_output != output {
                    continue;
                }
                total += match (&a.weight, m.kind) {
                    (ArcWeight::Mult(k), NetKind::Spn) => *k as f64,
                    _ => m.arc_flow(a).eval(&probe).map_err(|e| e.to_string())?,
                };
            }
            Ok(total)
        };
        match (amount(false, true), amount(true, false)) {
            (Ok(out_clean), Ok(in_infected)) => {
                if out_clean > in_infected * (1.0 + 1e-12) + 1e-12 {
                    offenders.push(m.transitions[t].name.clone());
                }
            }
            (Err(e), _) | (_, Err(e)) => {
                return Finding::new("A3", FindingStatus::Skipped, format!("could not evaluate weights: {e}"));
            }
        }
    }
    if offenders.is_empty() {
        Finding::new("A3", FindingStatus::Satisfied, "infection transitions do not feed non-infected places")
    } else {
        Finding::new(
            "A3",
            FindingStatus::Violated,
            format!(
                "infection transitions put tokens into non-infected places: {}",
                offenders.join(", ")
            ),
        )
    }
}

fn a4(m: &PetriModel, classes: &[TransitionClass]) -> Finding {
    let offenders: Vec<&str> = classes
        .iter()
        .enumerate()
        .filter(|(_, c)| **c == TransitionClass::Source)
        .map(|(t, _)| m.transitions[t].name.as_str())
        .collect();
    if offenders.is_empty() {
        Finding::new("A4", FindingStatus::Satisfied, "no source transition feeds an infected place")
    } else {
        Finding::new(
            "A4",
            FindingStatus::Violated,
            format!("source transitions feed infected places: {}", offenders.join(", ")),
        )
    }
}

/// Structural findings for A1–A4; A5 is reported as skipped.
pub fn validate_assumptions(m: &PetriModel) -> Vec<Finding> {
    let mut out = Vec::new();
    if m.infected_indices().is_empty() {
        out.push(Finding::new(
            "precondition",
            FindingStatus::Violated,
            "no place is flagged infected; the next-generation matrix is undefined",
        ));
        return out;
    }
    let table = classify_transitions(m);
    out.push(Finding::new(
        "A1",
        FindingStatus::Satisfied,
        "markings are kept non-negative by the simulators",
    ));
    out.push(Finding::new(
        "A2",
        FindingStatus::Satisfied,
        "flows out of an empty place are clipped to zero",
    ));
    out.push(a3(m, &table.classes));
    out.push(a4(m, &table.classes));
    out.push(Finding::new(
        "A5",
        FindingStatus::Skipped,
        "needs the numeric V matrix at the disease-free equilibrium",
    ));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::petri::parse_model;

    const SIR: &str = "
model sir kind=vapn
param beta = 0.3
param gamma = 0.1
place S init=990
place I init=10 infected
place R init=0
trans infect
arc S -> infect weight=\"beta*S*I\"
arc infect -> I weight=\"beta*S*I\"
trans recover
arc I -> recover weight=\"gamma*I\"
arc recover -> R weight=\"gamma*I\"
";

    fn status(f: &[Finding], code: &str) -> FindingStatus {
        f.iter().find(|x| x.code == code).unwrap().status
    }

    #[test]
    fn canonical_model_satisfied() {
        let f = validate_assumptions(&parse_model(SIR).unwrap());
        for code in ["A1", "A2", "A3", "A4"] {
            assert_eq!(status(&f, code), FindingStatus::Satisfied, "{code}");
        }
        assert_eq!(status(&f, "A5"), FindingStatus::Skipped);
    }

    #[test]
    fn source_into_infected_violates_a4() {
        let text = format!("{SIR}trans imm\narc imm -> I weight=\"gamma\"\n");
        let f = validate_assumptions(&parse_model(&text).unwrap());
        assert_eq!(status(&f, "A4"), FindingStatus::Violated);
        assert!(f.iter().find(|x| x.code == "A4").unwrap().message.contains("imm"));
    }

    #[test]
    fn infection_leaking_to_clean_place_violates_a3() {
        let text = SIR.replace(
            "arc infect -> I weight=\"beta*S*I\"",
            "arc infect -> I weight=\"beta*S*I\"\narc infect -> R weight=\"beta*S*I\"",
        );
        let f = validate_assumptions(&parse_model(&text).unwrap());
        assert_eq!(status(&f, "A3"), FindingStatus::Violated);
    }

    #[test]
    fn no_infected_places_is_fatal() {
        let text = SIR.replace("init=10 infected", "init=10");
        let f = validate_assumptions(&parse_model(&text).unwrap());
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].code, "precondition");
        assert!(f[0].is_violation());
    }
}
