//! Line-oriented model description format.
//!
//! ```text
//! model NAME kind=vapn|spn
//! param NAME [= REAL]
//! place NAME init=REAL [infected]
//! trans NAME [rate="EXPR"] [class=infection|transfer]
//! arc SRC -> DST [weight="EXPR"|mult=INT]
//! ```
//!
//! Statements appear one per line in that order (transitions and arcs may
//! interleave). `#` starts a comment outside quotes.

use std::collections::BTreeSet;

use super::{Arc, ArcDirection, ArcWeight, ClassOverride, NetKind, PetriError, PetriModel, Place, Transition};
use crate::expr::{parse_expr, Bindings, Expr, TOTAL_SYMBOL};

fn syntax(line: usize, message: impl Into<String>) -> PetriError {
    PetriError::Syntax {
        line,
        message: message.into(),
    }
}

/// Split on whitespace, keeping double-quoted runs intact (quotes removed).
fn tokens(line: usize, text: &str) -> Result<Vec<String>, PetriError> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut in_quotes = false;
    let mut has_token = false;
    for c in text.chars() {
        match c {
            '"' => {
                in_quotes = !in_quotes;
                has_token = true;
            }
            '#' if !in_quotes => break,
            c if c.is_whitespace() && !in_quotes => {
                if has_token {
                    out.push(std::mem::take(&mut cur));
                    has_token = false;
                }
            }
            c => {
                cur.push(c);
                has_token = true;
            }
        }
    }
    if in_quotes {
        return Err(syntax(line, "unterminated quote"));
    }
    if has_token {
        out.push(cur);
    }
    Ok(out)
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn ident(line: usize, s: &str) -> Result<String, PetriError> {
    if !is_ident(s) {
        return Err(syntax(line, format!("`{s}` is not a valid name")));
    }
    if s == TOTAL_SYMBOL {
        return Err(syntax(line, format!("`{TOTAL_SYMBOL}` is reserved for the total marking")));
    }
    Ok(s.to_string())
}

fn number(line: usize, what: &str, s: &str) -> Result<f64, PetriError> {
    s.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| syntax(line, format!("{what}: `{s}` is not a number")))
}

fn key_value(tok: &str) -> Option<(&str, &str)> {
    tok.split_once('=')
}

fn expression(line: usize, s: &str) -> Result<Expr, PetriError> {
    parse_expr(s).map_err(|source| PetriError::Expr { line, source })
}

struct PendingArc {
    line: usize,
    src: String,
    dst: String,
    weight: Option<Expr>,
    mult: Option<u32>,
}

/// Parse and validate a model description.
pub fn parse_model(text: &str) -> Result<PetriModel, PetriError> {
    let mut header: Option<(String, NetKind)> = None;
    let mut params = Bindings::new();
    let mut unbound: BTreeSet<String> = BTreeSet::new();
    let mut places: Vec<Place> = Vec::new();
    let mut transitions: Vec<Transition> = Vec::new();
    let mut pending: Vec<PendingArc> = Vec::new();
    let mut names: BTreeSet<String> = BTreeSet::new();
    let mut stage = 0u8;
    let mut rate_lines: Vec<usize> = Vec::new();

    let mut declare = |line: usize, what: &'static str, name: &str| -> Result<(), PetriError> {
        if names.insert(name.to_string()) {
            Ok(())
        } else {
            Err(PetriError::Duplicate {
                line,
                what,
                name: name.to_string(),
            })
        }
    };

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let toks = tokens(line, raw)?;
        let Some(head) = toks.first() else { continue };
        let order = match head.as_str() {
            "model" => 0,
            "param" => 1,
            "place" => 2,
            "trans" | "arc" => 3,
            other => return Err(syntax(line, format!("unknown statement `{other}`"))),
        };
        if header.is_none() && order != 0 {
            return Err(syntax(line, "the first statement must be `model`"));
        }
        if order == 0 && header.is_some() {
            return Err(syntax(line, "`model` may appear only once"));
        }
        if order < stage {
            return Err(syntax(
                line,
                format!("`{head}` is out of order (model, param, place, then trans/arc)"),
            ));
        }
        stage = order;
        let kind = header.as_ref().map(|h| h.1);

        match head.as_str() {
            "model" => {
                let [_, name, kind_tok] = toks.as_slice() else {
                    return Err(syntax(line, "expected `model NAME kind=vapn|spn`"));
                };
                let kind = match key_value(kind_tok) {
                    Some(("kind", "vapn")) => NetKind::Vapn,
                    Some(("kind", "spn")) => NetKind::Spn,
                    _ => return Err(syntax(line, format!("expected kind=vapn|spn, found `{kind_tok}`"))),
                };
                if !is_ident(name) {
                    return Err(syntax(line, format!("`{name}` is not a valid model name")));
                }
                header = Some((name.clone(), kind));
            }
            "param" => {
                let rest = toks[1..].join(" ");
                match rest.split_once('=') {
                    Some((name, value)) => {
                        let name = ident(line, name.trim())?;
                        let value = number(line, "param value", value.trim())?;
                        declare(line, "name", &name)?;
                        params.set(name, value);
                    }
                    None if toks.len() == 2 => {
                        let name = ident(line, &toks[1])?;
                        declare(line, "name", &name)?;
                        unbound.insert(name);
                    }
                    None => return Err(syntax(line, "expected `param NAME [= REAL]`")),
                }
            }
            "place" => {
                if toks.len() < 3 {
                    return Err(syntax(line, "expected `place NAME init=REAL [infected]`"));
                }
                let name = ident(line, &toks[1])?;
                let mut init = None;
                let mut infected = false;
                for tok in &toks[2..] {
                    match key_value(tok) {
                        Some(("init", v)) => init = Some(number(line, "init", v)?),
                        None if tok == "infected" => infected = true,
                        _ => return Err(syntax(line, format!("unexpected `{tok}` in place"))),
                    }
                }
                let init = init.ok_or_else(|| syntax(line, "place needs init=REAL"))?;
                if init < 0.0 {
                    return Err(syntax(line, "initial marking must be >= 0"));
                }
                if kind == Some(NetKind::Spn) && init.fract() != 0.0 {
                    return Err(PetriError::KindMismatch {
                        line,
                        message: "spn initial markings must be integers".into(),
                    });
                }
                declare(line, "name", &name)?;
                places.push(Place { name, infected, init });
            }
            "trans" => {
                if toks.len() < 2 {
                    return Err(syntax(line, "expected `trans NAME [rate=\"EXPR\"] [class=...]`"));
                }
                let name = ident(line, &toks[1])?;
                let mut rate = None;
                let mut class_override = None;
                for tok in &toks[2..] {
                    match key_value(tok) {
                        Some(("rate", e)) => rate = Some(expression(line, e)?),
                        Some(("class", "infection")) => class_override = Some(ClassOverride::Infection),
                        Some(("class", "transfer")) => class_override = Some(ClassOverride::Transfer),
                        _ => return Err(syntax(line, format!("unexpected `{tok}` in trans"))),
                    }
                }
                match (kind, &rate) {
                    (Some(NetKind::Spn), None) => {
                        return Err(PetriError::KindMismatch {
                            line,
                            message: format!("spn transition `{name}` needs rate=\"EXPR\""),
                        })
                    }
                    (Some(NetKind::Vapn), Some(_)) => {
                        return Err(PetriError::KindMismatch {
                            line,
                            message: format!("vapn transition `{name}` cannot have a rate"),
                        })
                    }
                    _ => {}
                }
                declare(line, "name", &name)?;
                rate_lines.push(line);
                transitions.push(Transition {
                    name,
                    rate,
                    class_override,
                });
            }
            "arc" => {
                if toks.len() < 4 || toks[2] != "->" {
                    return Err(syntax(line, "expected `arc SRC -> DST [weight=\"EXPR\"|mult=INT]`"));
                }
                let mut weight = None;
                let mut mult = None;
                for tok in &toks[4..] {
                    match key_value(tok) {
                        Some(("weight", e)) => weight = Some(expression(line, e)?),
                        Some(("mult", k)) => {
                            let k: u32 = k
                                .parse()
                                .ok()
                                .filter(|&k| k >= 1)
                                .ok_or_else(|| syntax(line, format!("mult must be a positive integer, found `{k}`")))?;
                            mult = Some(k);
                        }
                        _ => return Err(syntax(line, format!("unexpected `{tok}` in arc"))),
                    }
                }
                match kind {
                    Some(NetKind::Vapn) if mult.is_some() => {
                        return Err(PetriError::KindMismatch {
                            line,
                            message: "vapn arcs take weight=\"EXPR\", not mult".into(),
                        })
                    }
                    Some(NetKind::Vapn) if weight.is_none() => {
                        return Err(PetriError::KindMismatch {
                            line,
                            message: "vapn arcs need weight=\"EXPR\"".into(),
                        })
                    }
                    Some(NetKind::Spn) if weight.is_some() => {
                        return Err(PetriError::KindMismatch {
                            line,
                            message: "spn arcs take mult=INT, not weight".into(),
                        })
                    }
                    _ => {}
                }
                pending.push(PendingArc {
                    line,
                    src: toks[1].clone(),
                    dst: toks[3].clone(),
                    weight,
                    mult,
                });
            }
            _ => unreachable!(),
        }
    }

    let (name, kind) = header.ok_or_else(|| syntax(1, "missing `model` statement"))?;

    let place_of = |n: &str| places.iter().position(|p| p.name == n);
    let trans_of = |n: &str| transitions.iter().position(|t| t.name == n);
    let mut arcs = Vec::with_capacity(pending.len());
    let mut seen = BTreeSet::new();
    for a in pending {
        let endpoint = |n: &str| -> Result<(Option<usize>, Option<usize>), PetriError> {
            let p = place_of(n);
            let t = trans_of(n);
            if p.is_none() && t.is_none() {
                return Err(PetriError::Dangling {
                    line: a.line,
                    name: n.to_string(),
                });
            }
            Ok((p, t))
        };
        let (sp, st) = endpoint(&a.src)?;
        let (dp, dt) = endpoint(&a.dst)?;
        let (place, transition, direction) = match (sp, st, dp, dt) {
            (Some(p), _, _, Some(t)) => (p, t, ArcDirection::Input),
            (_, Some(t), Some(p), _) => (p, t, ArcDirection::Output),
            _ => {
                return Err(PetriError::NotBipartite {
                    line: a.line,
                    src: a.src,
                    dst: a.dst,
                })
            }
        };
        if !seen.insert((place, transition, direction == ArcDirection::Input)) {
            return Err(PetriError::Duplicate {
                line: a.line,
                what: "arc",
                name: format!("{} -> {}", a.src, a.dst),
            });
        }
        let weight = match kind {
            NetKind::Vapn => ArcWeight::Expr(a.weight.expect("checked above")),
            NetKind::Spn => ArcWeight::Mult(a.mult.unwrap_or(1)),
        };
        if let ArcWeight::Expr(e) = &weight {
            check_symbols(a.line, e, &params, &unbound, &places)?;
        }
        arcs.push(Arc {
            place,
            transition,
            direction,
            weight,
        });
    }
    for (t, line) in transitions.iter().zip(&rate_lines) {
        if let Some(r) = &t.rate {
            check_symbols(*line, r, &params, &unbound, &places)?;
        }
    }

    let model = PetriModel {
        name,
        kind,
        places,
        transitions,
        arcs,
        params,
        unbound,
    };
    model.validate()?;
    Ok(model)
}

fn check_symbols(line: usize, e: &Expr, params: &Bindings, unbound: &BTreeSet<String>, places: &[Place]) -> Result<(), PetriError> {
    for s in e.free_symbols() {
        if s != TOTAL_SYMBOL && !params.contains(&s) && !unbound.contains(&s) && !places.iter().any(|p| p.name == s) {
            return Err(PetriError::UnknownSymbol { line, name: s });
        }
    }
    Ok(())
}
