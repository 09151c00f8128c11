//! Bundled models with their reference R₀ and parameter ranges.
//!
//! Every entry ships a model file, the parameter box used for randomized
//! checks and an oracle that evaluates R₀ without going through the
//! next-generation pipeline: a closed-form expression for most models and
//! the explicit F and V⁻¹ matrices for the two-patch model.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::estimate::{GridAxis, SweepConfig};
use crate::expr::{parse_expr, Bindings, Expr, ExprError};
use crate::ngm::DfePin;
use crate::petri::{parse_model, NetKind, PetriError, PetriModel};

const MANIFEST: &str = include_str!("../../models/manifest.json");

const FILES: &[(&str, &str)] = &[
    ("sirs.pnet", include_str!("../../models/sirs.pnet")),
    ("sirs_spn.pnet", include_str!("../../models/sirs_spn.pnet")),
    ("seir.pnet", include_str!("../../models/seir.pnet")),
    ("seir_spn.pnet", include_str!("../../models/seir_spn.pnet")),
    ("seeir.pnet", include_str!("../../models/seeir.pnet")),
    ("covid.pnet", include_str!("../../models/covid.pnet")),
    ("nonlinear.pnet", include_str!("../../models/nonlinear.pnet")),
    ("patch2.pnet", include_str!("../../models/patch2.pnet")),
    ("vector_borne.pnet", include_str!("../../models/vector_borne.pnet")),
];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ZooError {
    #[error("unknown model `{0}`; try `list-models`")]
    UnknownId(String),
    #[error("bundled manifest is invalid: {0}")]
    Manifest(String),
    #[error("bundled model `{id}`: {source}")]
    Model { id: String, source: PetriError },
    #[error("closed form of `{id}`: {source}")]
    Expr { id: String, source: ExprError },
    #[error("parameter `{0}` is not bound")]
    Unbound(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleKind {
    ClosedForm,
    PatchMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPreset {
    pub susceptible: String,
    pub fixed: BTreeMap<String, f64>,
    pub init: BTreeMap<String, f64>,
    pub dt: f64,
    pub grid: Vec<RawAxis>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawAxis {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

#[derive(Debug, Clone, Deserialize)]
struct RawEntry {
    id: String,
    file: String,
    kind: NetKind,
    family: String,
    closed_form: Option<String>,
    oracle: OracleKind,
    params: BTreeMap<String, (f64, f64)>,
    pins: BTreeMap<String, String>,
    twin: Option<String>,
    sweep: Option<SweepPreset>,
}

#[derive(Debug, Deserialize)]
struct Manifest {
    models: Vec<RawEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZooEntry {
    pub id: String,
    pub family: String,
    pub kind: NetKind,
    pub file: String,
    pub source: &'static str,
    pub model: PetriModel,
    pub closed_form: Option<Expr>,
    pub oracle: OracleKind,
    pub param_ranges: BTreeMap<String, (f64, f64)>,
    pub pins: Vec<DfePin>,
    /// The other encoding of the same equations, if bundled.
    pub twin: Option<String>,
    pub sweep: Option<SweepPreset>,
}

impl ZooEntry {
    /// Sweep configuration from the bundled preset, grid included.
    pub fn sweep_config(&self) -> Option<SweepConfig> {
        let p = self.sweep.as_ref()?;
        let grid = p
            .grid
            .iter()
            .map(|a| GridAxis {
                name: a.name.clone(),
                lo: a.lo,
                hi: a.hi,
                count: a.count,
            })
            .collect();
        let mut cfg = SweepConfig::new(grid);
        for (k, v) in &p.fixed {
            cfg.fixed.set(k.clone(), *v);
        }
        cfg.init = p.init.iter().map(|(k, v)| (k.clone(), *v)).collect();
        cfg.susceptible = p.susceptible.clone();
        cfg.dt = p.dt;
        cfg.pins = self.pins.clone();
        Some(cfg)
    }
}

fn manifest() -> Result<Manifest, ZooError> {
    serde_json::from_str(MANIFEST).map_err(|e| ZooError::Manifest(e.to_string()))
}

/// Normalize user spelling: `vector-borne` and `vector_borne` are the same.
fn canonical(id: &str) -> String {
    id.trim().to_ascii_lowercase().replace('-', "_")
}

/// Ids of all bundled models, in manifest order.
pub fn ids() -> Vec<String> {
    manifest()
        .map(|m| m.models.into_iter().map(|e| e.id).collect())
        .unwrap_or_default()
}

pub fn builtin(id: &str) -> Result<ZooEntry, ZooError> {
    let want = canonical(id);
    let raw = manifest()?
        .models
        .into_iter()
        .find(|e| e.id == want)
        .ok_or_else(|| ZooError::UnknownId(id.to_string()))?;
    let source = FILES
        .iter()
        .find(|(f, _)| *f == raw.file)
        .map(|(_, s)| *s)
        .ok_or_else(|| ZooError::Manifest(format!("missing file {}", raw.file)))?;
    let model = parse_model(source).map_err(|source| ZooError::Model {
        id: raw.id.clone(),
        source,
    })?;
    let expr = |text: &str| {
        parse_expr(text).map_err(|source| ZooError::Expr {
            id: raw.id.clone(),
            source,
        })
    };
    let closed_form = raw.closed_form.as_deref().map(expr).transpose()?;
    let pins = raw
        .pins
        .iter()
        .map(|(place, v)| Ok(DfePin::new(place.clone(), expr(v)?)))
        .collect::<Result<Vec<_>, ZooError>>()?;
    Ok(ZooEntry {
        id: raw.id,
        family: raw.family,
        kind: raw.kind,
        file: raw.file,
        source,
        model,
        closed_form,
        oracle: raw.oracle,
        param_ranges: raw.params,
        pins,
        twin: raw.twin,
        sweep: raw.sweep,
    })
}

/// Every bundled entry, in manifest order.
pub fn all() -> Result<Vec<ZooEntry>, ZooError> {
    ids().iter().map(|id| builtin(id)).collect()
}

/// Reference R₀ at the entry's default parameters overlaid with `params`.
pub fn oracle_r0(entry: &ZooEntry, params: &Bindings) -> Result<f64, ZooError> {
    let b = entry.model.params.merged(params);
    match entry.oracle {
        OracleKind::ClosedForm => {
            let e = entry
                .closed_form
                .as_ref()
                .ok_or_else(|| ZooError::Manifest(format!("`{}` has no closed form", entry.id)))?;
            e.eval(&b).map_err(|e| match e {
                ExprError::Unbound(s) => ZooError::Unbound(s),
                source => ZooError::Expr {
                    id: entry.id.clone(),
                    source,
                },
            })
        }
        OracleKind::PatchMatrix => {
            let (f, vinv) = patch2_f_vinv(&b)?;
            // Rows 3 and 4 of F vanish, so the spectrum of F·V⁻¹ is that of
            // its leading 2×2 block plus two zeros.
            let k = |i: usize, j: usize| (0..4).map(|l| f[i][l] * vinv[l][j]).sum::<f64>();
            let (a, bb, c, d) = (k(0, 0), k(0, 1), k(1, 0), k(1, 1));
            let tr = a + d;
            let disc = (a - d) * (a - d) + 4.0 * bb * c;
            Ok(if disc >= 0.0 {
                (0.5 * (tr + disc.sqrt())).abs().max((0.5 * (tr - disc.sqrt())).abs())
            } else {
                (a * d - bb * c).abs().sqrt()
            })
        }
    }
}

fn get(b: &Bindings, name: &str) -> Result<f64, ZooError> {
    b.get(name).ok_or_else(|| ZooError::Unbound(name.to_string()))
}

pub type Mat4 = [[f64; 4]; 4];

/// F and V⁻¹ of the two-patch model at its disease-free equilibrium
/// `S_i = Π_i/μ_i`, written out entry by entry over the infected places
/// (E1, E2, I1, I2).
pub fn patch2_f_vinv(b: &Bindings) -> Result<(Mat4, Mat4), ZooError> {
    let g = |n: &str| get(b, n);
    let s1 = g("Pi1")? / g("mu1")?;
    let s2 = g("Pi2")? / g("mu2")?;
    let (beta1, beta2) = (g("beta1")?, g("beta2")?);
    let (m11, m12, m21, m22) = (g("m11")?, g("m12")?, g("m21")?, g("m22")?);
    let (p11, p12, p21, p22) = (g("p11")?, g("p12")?, g("p21")?, g("p22")?);
    let d1 = m11 * s1 + m21 * s2;
    let d2 = m12 * s1 + m22 * s2;
    let mut f = [[0.0; 4]; 4];
    f[0][2] = beta1 * m11 * p11 * s1 / d1 + beta2 * m12 * p12 * s1 / d2;
    f[0][3] = beta1 * m11 * p21 * s1 / d1 + beta2 * m12 * p22 * s1 / d2;
    f[1][2] = beta1 * m21 * p11 * s2 / d1 + beta2 * m22 * p12 * s2 / d2;
    f[1][3] = beta1 * m21 * p21 * s2 / d1 + beta2 * m22 * p22 * s2 / d2;

    let mut vinv = [[0.0; 4]; 4];
    for i in 0..2 {
        let k = (i + 1).to_string();
        let nu = g(&format!("nu{k}"))?;
        let mu = g(&format!("mu{k}"))?;
        let out_i = g(&format!("gamma{k}"))? + g(&format!("delta{k}"))? + mu;
        vinv[i][i] = 1.0 / (nu + mu);
        vinv[i + 2][i] = nu / ((nu + mu) * out_i);
        vinv[i + 2][i + 2] = 1.0 / out_i;
    }
    Ok((f, vinv))
}

/// V of the two-patch model, for entrywise comparison.
pub fn patch2_v(b: &Bindings) -> Result<Mat4, ZooError> {
    let g = |n: &str| get(b, n);
    let mut v = [[0.0; 4]; 4];
    for i in 0..2 {
        let k = (i + 1).to_string();
        let nu = g(&format!("nu{k}"))?;
        let mu = g(&format!("mu{k}"))?;
        v[i][i] = nu + mu;
        v[i + 2][i] = -nu;
        v[i + 2][i + 2] = g(&format!("gamma{k}"))? + g(&format!("delta{k}"))? + mu;
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_entry_loads() {
        let all = all().unwrap();
        assert_eq!(all.len(), 9);
        for e in &all {
            assert_eq!(e.model.name, e.id);
            assert_eq!(e.model.kind, e.kind);
            for name in e.param_ranges.keys() {
                assert!(e.model.params.contains(name), "{}: {name}", e.id);
            }
            for (name, (lo, hi)) in &e.param_ranges {
                assert!(*lo > 0.0 && lo < hi, "{}: {name}", e.id);
            }
            if let Some(cf) = &e.closed_form {
                for s in cf.free_symbols() {
                    assert!(e.model.params.contains(&s) || s == "N", "{}: {s}", e.id);
                }
            }
            if let Some(t) = &e.twin {
                assert_eq!(builtin(t).unwrap().twin.as_deref(), Some(e.id.as_str()));
            }
        }
    }

    #[test]
    fn shapes() {
        let sirs = builtin("sirs").unwrap();
        assert_eq!(sirs.model.places.len(), 3);
        assert_eq!(sirs.model.infected_indices(), vec![1]);
        let covid = builtin("covid").unwrap();
        assert_eq!(covid.model.places.len(), 6);
        assert_eq!(covid.model.infected_indices().len(), 4);
        let patch = builtin("patch2").unwrap();
        assert_eq!(patch.model.places.len(), 8);
        assert_eq!(patch.model.infected_indices().len(), 4);
        assert!(builtin("vector-borne").is_ok());
        assert_eq!(builtin("nope"), Err(ZooError::UnknownId("nope".into())));
    }

    #[test]
    fn closed_form_values() {
        let sirs = builtin("sirs").unwrap();
        let b = Bindings::new().with("beta", 0.3).with("gamma", 0.1);
        assert!((oracle_r0(&sirs, &b).unwrap() - 3.0).abs() < 1e-15);
        let vb = builtin("vector_borne").unwrap();
        // K = F V⁻¹ is anti-diagonal with entries beta_hv*Sh/mu_v and
        // beta_vh*Sv/(alpha+mu_h+sigma-delta), Sh = 100, Sv = 200.
        let want = ((0.002f64 * 100.0 / 0.2) * (0.001 * 200.0) / (0.1 + 0.05 + 0.2 - 0.05)).sqrt();
        let got = oracle_r0(&vb, &Bindings::new()).unwrap();
        assert!((got - want).abs() < 1e-14 * want, "{got} vs {want}");
    }
}
