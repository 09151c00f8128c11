use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn ngmpn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ngmpn"))
        .args(args)
        .env_remove("NGMPN_SEED")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

const SIR: &str = "model sir kind=vapn
param beta = 0.3
param gamma = 0.1
place S init=990
place I init=10 infected
place R init=0
trans infect
arc S -> infect weight=\"beta*S*I/N\"
arc infect -> I weight=\"beta*S*I/N\"
trans recover
arc I -> recover weight=\"gamma*I\"
arc recover -> R weight=\"gamma*I\"
";

fn write_model(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn validate_ok_and_violations() {
    let dir = tempfile::tempdir().unwrap();
    let good = write_model(dir.path(), "sir.pnet", SIR);
    let o = ngmpn(&["validate", &good, "--dfe", "R=0"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("A1..A5 satisfied"));
    // Without the annotation the equilibrium is a continuum and A5 cannot
    // be checked, which is not a violation.
    let o = ngmpn(&["validate", &good]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("A5 skipped"), "{}", stdout(&o));

    let bad = write_model(dir.path(), "imm.pnet", &format!("{SIR}trans imm\narc imm -> I weight=\"gamma\"\n"));
    let o = ngmpn(&["validate", &bad, "--dfe", "R=0"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("A4 violated"), "{}", stdout(&o));

    let o = ngmpn(&["validate", dir.path().join("missing.pnet").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("missing.pnet"));

    let broken = write_model(dir.path(), "broken.pnet", "model x kind=petri\n");
    assert_eq!(ngmpn(&["validate", &broken]).status.code(), Some(2));
}

#[test]
fn validate_every_builtin() {
    for id in ["sirs", "sirs_spn", "seir", "seir_spn", "seeir", "covid", "nonlinear", "patch2", "vector_borne"] {
        let o = ngmpn(&["validate", "--builtin", id]);
        assert_eq!(o.status.code(), Some(0), "{id}: {}", stdout(&o));
    }
}

#[test]
fn r0_json() {
    let o = ngmpn(&["r0", "--builtin", "sirs", "-p", "beta=0.3", "-p", "gamma=0.1", "-p", "delta=0.05"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    let v: Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["r0"], serde_json::json!(3.0));
    // Keys come out sorted.
    let keys: Vec<&String> = v.as_object().unwrap().keys().collect();
    let mut sorted = keys.clone();
    sorted.sort();
    assert_eq!(keys, sorted);
    let f_pos = text.find("\"F\"").unwrap();
    let r0_pos = text.find("\"r0\"").unwrap();
    assert!(f_pos < r0_pos);
}

#[test]
fn r0_seeeir_matches_formula() {
    let o = ngmpn(&["r0", "--builtin", "seeir", "-p", "beta=0.8", "-p", "p=0.3", "-p", "mu=0.02"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let r0 = v["r0"].as_f64().unwrap();
    let (beta, p, mu, nu1, nu2, gamma) = (0.8, 0.3, 0.02, 0.2, 0.1, 0.25);
    let want = beta / (gamma + mu) * (p * nu1 / (nu1 + mu) + (1.0 - p) * nu2 / (nu2 + mu));
    assert!((r0 - want).abs() <= 1e-9 * want, "{r0} vs {want}");
}

#[test]
fn r0_unbound_parameter_is_domain_error() {
    let dir = tempfile::tempdir().unwrap();
    let free = write_model(dir.path(), "free.pnet", &SIR.replace("param gamma = 0.1", "param gamma"));
    let o = ngmpn(&["r0", &free]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("gamma"), "{}", stderr(&o));
    let o = ngmpn(&["r0", &free, "-p", "gamma=0.15"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("underdetermined"), "{}", stderr(&o));
    let o = ngmpn(&["r0", &free, "-p", "gamma=0.15", "--dfe", "R=0"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["r0"], serde_json::json!(2.0));

    assert_eq!(ngmpn(&["r0", "--builtin", "sirs", "-p", "zeta=1"]).status.code(), Some(1));
}

#[test]
fn usage_errors() {
    assert_eq!(ngmpn(&["r0"]).status.code(), Some(2));
    assert_eq!(ngmpn(&["r0", "x.pnet", "--builtin", "sirs"]).status.code(), Some(2));
    assert_eq!(ngmpn(&["r0", "--builtin", "nope"]).status.code(), Some(2));
    assert_eq!(ngmpn(&["r0", "--builtin", "sirs", "-p", "beta"]).status.code(), Some(2));
    assert_eq!(ngmpn(&["simulate", "--builtin", "sirs", "--grid", "beta=0:1:2"]).status.code(), Some(2));
}

#[test]
fn simulate_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("traj.csv");
    let o = ngmpn(&["simulate", "--builtin", "sirs", "--dt", "0.1", "--t-end", "300", "-o", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,S,I,R"));
    assert_eq!(lines.next(), Some("0,990,10,0"));
    assert_eq!(text.lines().count(), 3002);
    assert!(text.lines().last().unwrap().starts_with("300,"));
}

#[test]
fn simulate_rejects_bad_step() {
    for dt in ["0", "-0.1"] {
        let o = ngmpn(&["simulate", "--builtin", "sirs", &format!("--dt={dt}")]);
        assert_eq!(o.status.code(), Some(2), "{dt}");
    }
}

#[test]
fn simulate_spn_replicates_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let read_all = |tag: &str, seed_flag: bool| -> Vec<String> {
        let out = dir.path().join(format!("{tag}.csv"));
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_ngmpn"));
        cmd.args(["simulate", "--builtin", "sirs_spn", "--replicates", "3", "--t-end", "50", "-o"])
            .arg(&out);
        if seed_flag {
            cmd.args(["--seed", "42"]).env_remove("NGMPN_SEED");
        } else {
            cmd.env("NGMPN_SEED", "42");
        }
        let o = cmd.output().unwrap();
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        (0..3)
            .map(|k| std::fs::read_to_string(dir.path().join(format!("{tag}_rep{k}.csv"))).unwrap())
            .collect()
    };
    let a = read_all("a", true);
    let b = read_all("b", true);
    let c = read_all("c", false);
    assert_eq!(a, b);
    assert_eq!(a, c);
    assert_ne!(a[0], a[1]);
    assert!(a.iter().all(|t| t.starts_with("t,S,I,R\n")));

    let o = ngmpn(&["simulate", "--builtin", "sirs_spn", "--replicates", "2", "--seed", "42", "--t-end", "5"]);
    let text = stdout(&o);
    assert!(text.contains("# replicate 0\n") && text.contains("# replicate 1\n"));
    assert_ne!(ngmpn(&["simulate", "--builtin", "sirs_spn", "--seed", "43", "--t-end", "50"]).stdout, {
        let o = ngmpn(&["simulate", "--builtin", "sirs_spn", "--seed", "42", "--t-end", "50"]);
        o.stdout
    });
}

#[test]
fn simulate_json_has_provenance() {
    let o = ngmpn(&["simulate", "--builtin", "seir_spn", "--seed", "9", "--t-end", "5", "--format", "json"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["rng_seed"], serde_json::json!(9));
    assert!(v["rng_algorithm"].as_str().unwrap().contains("ChaCha"));
    assert_eq!(v["place_names"], serde_json::json!(["S", "E", "I", "R"]));
}

#[test]
fn sweep_sirs_preset() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("rows.csv");
    let summary = dir.path().join("summary.json");
    let o = ngmpn(&[
        "sweep",
        "--builtin",
        "sirs",
        "--grid",
        "beta=0.1:0.5:5",
        "--grid",
        "gamma=0.05:0.25:5",
        "--jobs",
        "2",
        "-o",
        csv.to_str().unwrap(),
        "--summary",
        summary.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().next(), Some("beta,gamma,r0_alg,r0_hat,rel_err"));
    assert_eq!(text.lines().count(), 26);
    let s: Value = serde_json::from_str(&std::fs::read_to_string(&summary).unwrap()).unwrap();
    assert!(s["rrmse"].as_f64().unwrap() < 0.01);
    assert_eq!(s["n_points"], serde_json::json!(25));
    assert_eq!(s["failures"], serde_json::json!(0));
}

#[test]
fn sweep_is_deterministic_across_jobs() {
    let run = |jobs: &str| {
        let o = ngmpn(&["sweep", "--builtin", "sirs", "--grid", "beta=0.2:0.4:3", "--jobs", jobs]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        o.stdout
    };
    assert_eq!(run("1"), run("4"));
}

#[test]
fn sweep_errors() {
    let o = ngmpn(&["sweep", "--builtin", "sirs", "--grid", "zeta=0.1:0.5:3"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("zeta"));
    assert_eq!(ngmpn(&["sweep", "--builtin", "sirs", "--grid", "beta=0.1:0.5"]).status.code(), Some(2));
    assert_eq!(ngmpn(&["sweep", "--builtin", "seir", "--grid", "beta=0.001:0.002:2", "--dt", "0"]).status.code(), Some(2));
    assert_eq!(ngmpn(&["sweep", "--builtin", "sirs_spn", "--grid", "beta=0.2:0.3:2"]).status.code(), Some(1));
}

#[test]
fn list_models() {
    let o = ngmpn(&["list-models"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.starts_with("id,kind,family,twin\n"));
    assert_eq!(text.lines().count(), 10);
    let o = ngmpn(&["list-models", "--format", "json"]);
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v.as_array().unwrap().len(), 9);
    assert_eq!(v[0]["id"], serde_json::json!("sirs"));
}

#[test]
fn builtin_accepts_dashed_ids() {
    let o = ngmpn(&["r0", "--builtin", "vector-borne"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}
