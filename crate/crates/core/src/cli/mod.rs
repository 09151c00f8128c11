//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 for domain errors (validation, unbound
//! parameters, estimation failures), 2 for I/O and usage errors.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::Value;

use crate::estimate::{sweep, GridAxis, SweepConfig};
use crate::expr::{parse_expr, Bindings};
use crate::modelzoo::{self, ZooEntry};
use crate::ngm::{ngm_r0_with, DfePin, NgmError, NgmOptions};
use crate::numfmt::round12;
use crate::petri::{parse_model, validate_assumptions, Finding, FindingStatus, NetKind, PetriModel};
use crate::sim::{run_spn_replicates, run_vapn, SpnOptions, Trajectory, DEFAULT_DT, DEFAULT_SAMPLE_DT};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("{0}")]
    Domain(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Domain(_) => 1,
            CliError::Usage(_) | CliError::Io { .. } => 2,
        }
    }
}

fn domain(e: impl std::fmt::Display) -> CliError {
    CliError::Domain(e.to_string())
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Debug, Parser)]
#[command(name = "ngmpn", version, about = "Basic reproduction numbers of Petri-net epidemic models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the structural assumptions behind the next-generation matrix.
    Validate(ValidateArgs),
    /// Compute R0 and print the full result as JSON.
    R0(R0Args),
    /// Simulate a model and write its trajectory.
    Simulate(SimulateArgs),
    /// Compare algebraic and simulated R0 over a parameter grid.
    Sweep(SweepArgs),
    /// List the bundled models.
    ListModels(ListArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Model description file.
    #[arg(required_unless_present = "builtin", conflicts_with = "builtin")]
    pub path: Option<PathBuf>,
    /// Bundled model id (see `list-models`).
    #[arg(long)]
    pub builtin: Option<String>,
    /// Parameter override NAME=VALUE.
    #[arg(short = 'p', long = "param", value_name = "NAME=VALUE", value_parser = parse_number_pair)]
    pub params: Vec<(String, f64)>,
    /// Initial marking override PLACE=VALUE.
    #[arg(long = "init", value_name = "PLACE=VALUE", value_parser = parse_number_pair)]
    pub init: Vec<(String, f64)>,
    /// Disease-free equilibrium annotation PLACE=EXPR.
    #[arg(long = "dfe", value_name = "PLACE=EXPR", value_parser = parse_pin)]
    pub dfe: Vec<DfePin>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct R0Args {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Write the JSON here instead of stdout.
    #[arg(short = 'o', long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Euler step of the deterministic simulator.
    #[arg(long, default_value_t = DEFAULT_DT)]
    pub dt: f64,
    #[arg(long, default_value_t = 100.0)]
    pub t_end: f64,
    /// RNG seed of the stochastic simulator.
    #[arg(long, env = "NGMPN_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub replicates: usize,
    /// Output grid of the stochastic simulator.
    #[arg(long, default_value_t = DEFAULT_SAMPLE_DT)]
    pub sample_dt: f64,
    /// Output file; replicates get a `_rep<k>` suffix.
    #[arg(short = 'o', long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Grid axis NAME=LO:HI:COUNT (repeatable).
    #[arg(long = "grid", value_name = "NAME=LO:HI:COUNT")]
    pub grid: Vec<String>,
    #[arg(long)]
    pub dt: Option<f64>,
    /// Initial horizon; doubled until the susceptible place settles.
    #[arg(long)]
    pub t_end: Option<f64>,
    /// Susceptible place used by the estimator.
    #[arg(long)]
    pub susceptible: Option<String>,
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Rows as CSV (or the full report as JSON) go here instead of stdout.
    #[arg(short = 'o', long)]
    pub output: Option<PathBuf>,
    /// Summary JSON file.
    #[arg(long)]
    pub summary: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct ListArgs {
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
}

fn split_pair(s: &str) -> Result<(&str, &str), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected NAME=VALUE, got `{s}`"))?;
    let k = k.trim();
    if k.is_empty() {
        return Err(format!("missing name in `{s}`"));
    }
    Ok((k, v.trim()))
}

fn parse_number_pair(s: &str) -> Result<(String, f64), String> {
    let (k, v) = split_pair(s)?;
    let v: f64 = v.parse().map_err(|_| format!("`{v}` is not a number"))?;
    Ok((k.to_string(), v))
}

fn parse_pin(s: &str) -> Result<DfePin, String> {
    let (k, v) = split_pair(s)?;
    let e = parse_expr(v).map_err(|e| e.to_string())?;
    Ok(DfePin::new(k, e))
}

struct Loaded {
    model: PetriModel,
    entry: Option<ZooEntry>,
    pins: Vec<DfePin>,
}

fn load(args: &ModelArgs) -> Result<Loaded, CliError> {
    let (model, entry) = match (&args.path, &args.builtin) {
        (Some(path), None) => {
            let text = std::fs::read_to_string(path).map_err(io_err(path))?;
            let m = parse_model(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
            (m, None)
        }
        (None, Some(id)) => {
            let e = modelzoo::builtin(id).map_err(|e| CliError::Usage(e.to_string()))?;
            (e.model.clone(), Some(e))
        }
        _ => return Err(CliError::Usage("give exactly one of PATH or --builtin".into())),
    };
    let mut pins = entry.as_ref().map(|e| e.pins.clone()).unwrap_or_default();
    for p in &args.dfe {
        pins.retain(|q| q.place != p.place);
        pins.push(p.clone());
    }
    Ok(Loaded { model, entry, pins })
}

fn bindings(pairs: &[(String, f64)]) -> Bindings {
    let mut b = Bindings::new();
    for (k, v) in pairs {
        b.set(k.clone(), *v);
    }
    b
}

/// Apply `-p` and `--init` overrides to the model itself.
fn apply_overrides(m: &mut PetriModel, args: &ModelArgs) -> Result<(), CliError> {
    m.set_params(&bindings(&args.params)).map_err(domain)?;
    for (place, v) in &args.init {
        m.set_init(place, *v).map_err(domain)?;
    }
    Ok(())
}

/// Round every float to 12 significant digits.
fn rounded(v: Value) -> Value {
    match v {
        Value::Number(n) => match (n.as_i64(), n.as_u64(), n.as_f64()) {
            (None, None, Some(x)) => serde_json::Number::from_f64(round12(x)).map(Value::Number).unwrap_or(Value::Null),
            _ => Value::Number(n),
        },
        Value::Array(a) => Value::Array(a.into_iter().map(rounded).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, rounded(v))).collect()),
        other => other,
    }
}

fn to_json<T: serde::Serialize>(value: &T) -> String {
    let v = serde_json::to_value(value).expect("output serializes");
    serde_json::to_string_pretty(&rounded(v)).expect("value prints")
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(io_err(path))
}

fn write_text(path: Option<&Path>, out: &mut dyn Write, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => {
            let mut f = create(p)?;
            writeln!(f, "{text}").and_then(|_| f.flush()).map_err(io_err(p))
        }
        None => writeln!(out, "{text}").map_err(io_err(Path::new("<stdout>"))),
    }
}

pub fn cmd_validate(args: &ValidateArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let Loaded { mut model, pins, .. } = load(&args.model)?;
    apply_overrides(&mut model, &args.model)?;
    let mut findings = validate_assumptions(&model);
    let has_infected = findings.iter().all(|f| f.code != "precondition");
    if has_infected {
        match ngm_r0_with(&model, &Bindings::new(), &NgmOptions { pins }) {
            Ok(r) => findings = r.findings,
            Err(e) => {
                if let Some(f) = findings.iter_mut().find(|f| f.code == "A5") {
                    f.message = format!("not checked: {e}");
                }
            }
        }
    }
    let stdout = Path::new("<stdout>");
    match args.format {
        Format::Json => writeln!(out, "{}", to_json(&findings)).map_err(io_err(stdout))?,
        Format::Csv => {
            for f in &findings {
                writeln!(out, "{} {}: {}", f.code, status_word(f), f.message).map_err(io_err(stdout))?;
            }
            writeln!(out, "{}", verdict(&findings)).map_err(io_err(stdout))?;
        }
    }
    let violated: Vec<&str> = findings.iter().filter(|f| f.is_violation()).map(|f| f.code.as_str()).collect();
    if violated.is_empty() {
        Ok(())
    } else {
        Err(CliError::Domain(format!("assumptions violated: {}", violated.join(", "))))
    }
}

fn status_word(f: &Finding) -> &'static str {
    match f.status {
        FindingStatus::Satisfied => "satisfied",
        FindingStatus::Violated => "violated",
        FindingStatus::Skipped => "skipped",
    }
}

fn verdict(findings: &[Finding]) -> String {
    let core = |f: &&Finding| f.code.starts_with('A');
    if findings.iter().filter(core).count() == 5 && findings.iter().all(|f| f.status == FindingStatus::Satisfied) {
        return "A1..A5 satisfied".into();
    }
    let pick = |s: FindingStatus| -> Vec<&str> {
        findings.iter().filter(|f| f.status == s).map(|f| f.code.as_str()).collect()
    };
    let mut parts = Vec::new();
    for (word, s) in [("violated", FindingStatus::Violated), ("skipped", FindingStatus::Skipped)] {
        let codes = pick(s);
        if !codes.is_empty() {
            parts.push(format!("{word}: {}", codes.join(", ")));
        }
    }
    parts.join("; ")
}

pub fn cmd_r0(args: &R0Args, out: &mut dyn Write) -> Result<(), CliError> {
    let Loaded { mut model, pins, .. } = load(&args.model)?;
    apply_overrides(&mut model, &args.model)?;
    let r = ngm_r0_with(&model, &Bindings::new(), &NgmOptions { pins }).map_err(|e| match e {
        NgmError::Unbound(s) => CliError::Domain(format!("unbound parameter `{s}`; pass -p {s}=VALUE")),
        e => domain(e),
    })?;
    write_text(args.output.as_deref(), out, &to_json(&r))
}

fn replicate_path(path: &Path, k: usize) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}_rep{k}.{}", ext.to_string_lossy()),
        None => format!("{stem}_rep{k}"),
    };
    path.with_file_name(name)
}

fn write_trajectory(traj: &Trajectory, format: Format, w: &mut dyn Write) -> io::Result<()> {
    match format {
        Format::Csv => traj.write_csv(&mut *w).map_err(io::Error::other),
        Format::Json => writeln!(w, "{}", to_json(traj)),
    }
}

pub fn cmd_simulate(args: &SimulateArgs, out: &mut dyn Write) -> Result<(), CliError> {
    if !(args.dt > 0.0 && args.dt.is_finite()) {
        return Err(CliError::Usage(format!("--dt must be positive, got {}", args.dt)));
    }
    if !(args.t_end >= 0.0 && args.t_end.is_finite()) {
        return Err(CliError::Usage(format!("--t-end must be >= 0, got {}", args.t_end)));
    }
    if !(args.sample_dt > 0.0 && args.sample_dt.is_finite()) {
        return Err(CliError::Usage(format!("--sample-dt must be positive, got {}", args.sample_dt)));
    }
    if args.replicates == 0 {
        return Err(CliError::Usage("--replicates must be at least 1".into()));
    }
    let Loaded { mut model, .. } = load(&args.model)?;
    apply_overrides(&mut model, &args.model)?;
    let runs = match model.kind {
        NetKind::Vapn => {
            if args.replicates > 1 {
                return Err(CliError::Usage("--replicates needs a stochastic (spn) model".into()));
            }
            vec![run_vapn(&model, args.t_end, args.dt).map_err(domain)?]
        }
        NetKind::Spn => {
            let mut opts = SpnOptions::new(args.t_end, args.seed);
            opts.sample_dt = args.sample_dt;
            run_spn_replicates(&model, &opts, args.replicates).map_err(domain)?
        }
    };
    let many = runs.len() > 1;
    match &args.output {
        Some(path) => {
            for (k, traj) in runs.iter().enumerate() {
                let p = if many { replicate_path(path, k) } else { path.clone() };
                let mut f = create(&p)?;
                write_trajectory(traj, args.format, &mut f).and_then(|_| f.flush()).map_err(io_err(&p))?;
            }
        }
        None => {
            let stdout = Path::new("<stdout>");
            for (k, traj) in runs.iter().enumerate() {
                if many {
                    writeln!(out, "# replicate {k}").map_err(io_err(stdout))?;
                }
                write_trajectory(traj, args.format, out).map_err(io_err(stdout))?;
            }
        }
    }
    Ok(())
}

fn sweep_config(args: &SweepArgs, entry: Option<&ZooEntry>, pins: Vec<DfePin>) -> Result<SweepConfig, CliError> {
    let grid = args
        .grid
        .iter()
        .map(|g| GridAxis::parse(g).map_err(|e| CliError::Usage(e.to_string())))
        .collect::<Result<Vec<_>, _>>()?;
    let mut cfg = match entry.and_then(|e| e.sweep_config()) {
        Some(mut preset) => {
            if !grid.is_empty() {
                preset.grid = grid;
            }
            preset
        }
        None => SweepConfig::new(grid),
    };
    if cfg.grid.is_empty() {
        return Err(CliError::Usage("sweep needs at least one --grid NAME=LO:HI:COUNT".into()));
    }
    cfg.fixed = cfg.fixed.merged(&bindings(&args.model.params));
    for (place, v) in &args.model.init {
        cfg.init.retain(|(p, _)| p != place);
        cfg.init.push((place.clone(), *v));
    }
    cfg.pins = pins;
    if let Some(dt) = args.dt {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(CliError::Usage(format!("--dt must be positive, got {dt}")));
        }
        cfg.dt = dt;
    }
    if let Some(t) = args.t_end {
        if !(t > 0.0 && t.is_finite()) {
            return Err(CliError::Usage(format!("--t-end must be positive, got {t}")));
        }
        cfg.t_end = t;
        cfg.max_t_end = cfg.max_t_end.max(t);
    }
    if let Some(s) = &args.susceptible {
        cfg.susceptible = s.clone();
    }
    if args.jobs == Some(0) {
        return Err(CliError::Usage("--jobs must be at least 1".into()));
    }
    cfg.jobs = args.jobs;
    Ok(cfg)
}

pub fn cmd_sweep(args: &SweepArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let Loaded { model, entry, pins } = load(&args.model)?;
    let cfg = sweep_config(args, entry.as_ref(), pins)?;
    let report = sweep(&model, &cfg).map_err(domain)?;
    let stdout = Path::new("<stdout>");
    let summary = serde_json::to_string_pretty(&rounded(report.summary_json())).expect("value prints");

    match (args.format, &args.output) {
        (Format::Csv, Some(p)) => {
            let mut f = create(p)?;
            report.write_csv(&mut f).map_err(|e| io_err(p)(io::Error::other(e)))?;
        }
        (Format::Csv, None) => {
            report.write_csv(&mut *out).map_err(|e| io_err(stdout)(io::Error::other(e)))?;
        }
        (Format::Json, p) => write_text(p.as_deref(), out, &to_json(&report))?,
    }
    if let Some(p) = &args.summary {
        write_text(Some(p), out, &summary)?;
    } else if args.output.is_some() {
        write_text(None, out, &summary)?;
    }
    if report.failures > 0 {
        return Err(CliError::Domain(format!(
            "{} of {} grid points failed",
            report.failures, report.n_points
        )));
    }
    Ok(())
}

pub fn cmd_list_models(args: &ListArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let entries = modelzoo::all().map_err(domain)?;
    let stdout = Path::new("<stdout>");
    match args.format {
        Format::Json => {
            let rows: Vec<Value> = entries
                .iter()
                .map(|e| {
                    serde_json::json!({
                        "id": e.id,
                        "kind": e.kind,
                        "family": e.family,
                        "params": e.model.params,
                        "twin": e.twin,
                        "sweep": e.sweep.is_some(),
                    })
                })
                .collect();
            writeln!(out, "{}", to_json(&rows)).map_err(io_err(stdout))
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(&mut *out);
            let wrap = |e: csv::Error| io_err(stdout)(io::Error::other(e));
            w.write_record(["id", "kind", "family", "twin"]).map_err(wrap)?;
            for e in &entries {
                let kind = match e.kind {
                    NetKind::Vapn => "vapn",
                    NetKind::Spn => "spn",
                };
                w.write_record([e.id.as_str(), kind, e.family.as_str(), e.twin.as_deref().unwrap_or("")])
                    .map_err(wrap)?;
            }
            w.flush().map_err(io_err(stdout))
        }
    }
}

pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match &cli.command {
        Command::Validate(a) => cmd_validate(a, out),
        Command::R0(a) => cmd_r0(a, out),
        Command::Simulate(a) => cmd_simulate(a, out),
        Command::Sweep(a) => cmd_sweep(a, out),
        Command::ListModels(a) => cmd_list_models(a, out),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn replicate_suffix() {
        assert_eq!(replicate_path(Path::new("out/traj.csv"), 2), PathBuf::from("out/traj_rep2.csv"));
        assert_eq!(replicate_path(Path::new("traj"), 0), PathBuf::from("traj_rep0"));
    }

    #[test]
    fn pairs() {
        assert_eq!(parse_number_pair("beta = 0.3").unwrap(), ("beta".into(), 0.3));
        assert!(parse_number_pair("beta").is_err());
        assert!(parse_number_pair("=1").is_err());
        assert!(parse_number_pair("beta=x").is_err());
        assert!(parse_pin("R=0").is_ok());
    }

    #[test]
    fn rounding_keeps_integers() {
        let v = rounded(serde_json::json!({"a": 0.1 + 0.2, "b": 3, "c": [1.0000000000001]}));
        assert_eq!(v["a"], serde_json::json!(0.3));
        assert_eq!(v["b"], serde_json::json!(3));
        assert_eq!(v["c"][0], serde_json::json!(1.0));
    }
}
