use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cvar-mdp"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(|rec| rec.unwrap().iter().map(str::to_string).collect()).collect()
}

fn close(value: f64, target: f64, pct: f64) -> bool {
    (value - target).abs() <= pct / 100.0 * target.abs()
}

const TWO_STATE: &str = r#"{
  "n_states": 2,
  "n_actions": 2,
  "transition": [[0.5, 0.5], [0.1, 0.9], [0.3, 0.7], [0.6, 0.4]],
  "cost": [[0.0, 1.0], [2.0, -3.0]]
}"#;

const BAD_ROW: &str = r#"{
  "n_states": 2,
  "n_actions": 2,
  "transition": [[0.5, 0.5], [0.1, 0.8], [0.3, 0.7], [0.6, 0.4]],
  "cost": [[0.0, 1.0], [2.0, -3.0]]
}"#;

fn out_arg(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).to_string_lossy().into_owned()
}

#[test]
fn validate_exit_codes() {
    let dir = TempDir::new().unwrap();
    let good = write(dir.path(), "good.json", TWO_STATE);
    let o = run(&["validate", good.to_str().unwrap(), "--out", &out_arg(&dir, "a")]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(json(&dir.path().join("a/validation.json"))["policies_checked"], 4);

    let bad = write(dir.path(), "bad.json", BAD_ROW);
    let o = run(&["validate", bad.to_str().unwrap(), "--out", &out_arg(&dir, "b")]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("state 0, action 1"), "{}", stderr(&o));
    let manifest = json(&dir.path().join("b/manifest.json"));
    assert_eq!(manifest["command"], "validate");
    assert_ne!(manifest["status"], "ok");

    let o = run(&["validate", dir.path().join("missing.json").to_str().unwrap(), "--out", &out_arg(&dir, "c")]);
    assert_eq!(code(&o), 2);
    let garbage = write(dir.path(), "garbage.json", "{ not json");
    let o = run(&["validate", garbage.to_str().unwrap(), "--out", &out_arg(&dir, "d")]);
    assert_eq!(code(&o), 2);
    let ragged = write(
        dir.path(),
        "ragged.json",
        r#"{"n_states": 2, "n_actions": 1, "transition": [[1.0], [1.0]], "cost": [[1.0], [1.0]]}"#,
    );
    assert_eq!(code(&run(&["validate", ragged.to_str().unwrap(), "--out", &out_arg(&dir, "e")])), 2);

    let o = run(&["validate", "--scenario", "portfolio", "--out", &out_arg(&dir, "f")]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}

#[test]
fn periodic_model_fails_validation() {
    let dir = TempDir::new().unwrap();
    let cycle = write(
        dir.path(),
        "cycle.json",
        r#"{"n_states": 2, "n_actions": 1, "transition": [[0.0, 1.0], [1.0, 0.0]], "cost": [[1.0], [2.0]]}"#,
    );
    assert_eq!(code(&run(&["validate", cycle.to_str().unwrap(), "--out", &out_arg(&dir, "v")])), 3);
    let o = run(&[
        "evaluate",
        cycle.to_str().unwrap(),
        "--alpha",
        "0.5",
        "--policy",
        write(dir.path(), "p", "0 0").to_str().unwrap(),
        "--out",
        &out_arg(&dir, "e"),
    ]);
    assert_eq!(code(&o), 3);
}

#[test]
fn evaluate_single_state_model() {
    let dir = TempDir::new().unwrap();
    let m = write(dir.path(), "one.json", r#"{"n_states": 1, "n_actions": 1, "transition": [[1.0]], "cost": [[7.5]]}"#);
    let p = write(dir.path(), "p.txt", "0\n");
    let out = out_arg(&dir, "o");
    let o = run(&["evaluate", m.to_str().unwrap(), "--alpha", "0.9", "--policy", p.to_str().unwrap(), "--out", &out]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(json(&dir.path().join("o/evaluation.json"))["cvar"], 7.5);

    let o = run(&["evaluate", m.to_str().unwrap(), "--policy", p.to_str().unwrap(), "--out", &out]);
    assert_eq!(code(&o), 2, "alpha is required for model files");
    let wrong = write(dir.path(), "wrong.txt", "[0, 0]");
    let o =
        run(&["evaluate", m.to_str().unwrap(), "--alpha", "0.9", "--policy", wrong.to_str().unwrap(), "--out", &out]);
    assert_eq!(code(&o), 2);
    let o = run(&["evaluate", m.to_str().unwrap(), "--alpha", "1.5", "--policy", p.to_str().unwrap(), "--out", &out]);
    assert_eq!(code(&o), 2);
}

#[test]
fn portfolio_reports() {
    let dir = TempDir::new().unwrap();
    let o = run(&["evaluate", "--scenario", "portfolio", "--mean-optimal", "--out", &out_arg(&dir, "mean")]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let e = json(&dir.path().join("mean/evaluation.json"));
    assert!(close(e["mean_cost"].as_f64().unwrap(), -311.65, 5.0));
    assert!(close(e["std_dev"].as_f64().unwrap(), 322.20, 5.0));
    assert!(close(e["cvar"].as_f64().unwrap(), 45.17, 5.0));

    let o = run(&[
        "solve",
        "--scenario",
        "portfolio",
        "--seed",
        "2024",
        "--starts",
        "20",
        "--out",
        &out_arg(&dir, "solve"),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let optima = csv_rows(&dir.path().join("solve/optima.csv"));
    let values: Vec<f64> = optima.iter().map(|r| r[1].parse().unwrap()).collect();
    assert_eq!(values.len(), 2);
    assert!(close(values[0], 4.43, 5.0) && close(values[1], 12.58, 5.0), "{values:?}");
    assert_eq!(csv_rows(&dir.path().join("solve/policy_matrix.csv")).len(), 6);

    // the worse local optimum, evaluated on its own
    let ms = json(&dir.path().join("solve/multistart.json"));
    let worse: Vec<String> = ms["optima"][1]["policies"][0].as_array().unwrap().iter().map(|a| a.to_string()).collect();
    let p = write(dir.path(), "local.txt", &worse.join("\n"));
    let o = run(&[
        "evaluate",
        "--scenario",
        "portfolio",
        "--policy",
        p.to_str().unwrap(),
        "--out",
        &out_arg(&dir, "local"),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(close(json(&dir.path().join("local/evaluation.json"))["cvar"].as_f64().unwrap(), 12.58, 5.0));

    let o = run(&["global", "--scenario", "portfolio", "--out", &out_arg(&dir, "global")]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let g = json(&dir.path().join("global/global.json"))["best_cvar"].as_f64().unwrap();
    assert!(close(g, 4.43, 5.0));
    assert!(values.iter().all(|&v| g <= v + 1e-9));
}

#[test]
fn portfolio_mean_cvar() {
    let dir = TempDir::new().unwrap();
    let o = run(&[
        "sweep-beta",
        "--scenario",
        "portfolio",
        "--alpha",
        "0.75",
        "--betas",
        "0.1,0.22,0.4,2",
        "--seed",
        "2024",
        "--out",
        &out_arg(&dir, "sweep"),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rows = csv_rows(&dir.path().join("sweep/sweep.csv"));
    let expected =
        [(14.24, -37.55, 10.48), (24.20, -94.64, 3.38), (51.84, -190.42, -24.33), (128.52, -311.65, -494.77)];
    for (row, (cvar, eta, combined)) in rows.iter().zip(expected) {
        let v: Vec<f64> = row[..4].iter().map(|s| s.parse().unwrap()).collect();
        assert!(close(v[1], cvar, 5.0) && close(v[2], eta, 5.0) && close(v[3], combined, 5.0), "{row:?}");
        assert!((v[3] - (v[1] + v[0] * v[2])).abs() <= 1e-6);
    }
    assert_eq!(rows[2][4], "2");

    let o = run(&[
        "solve",
        "--scenario",
        "portfolio",
        "--alpha",
        "0.75",
        "--beta",
        "0.22",
        "--seed",
        "2024",
        "--out",
        &out_arg(&dir, "solve"),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = json(&dir.path().join("solve/result.json"));
    assert!(close(r["trace"].as_array().unwrap().last().unwrap()["objective"].as_f64().unwrap(), 3.38, 5.0));
    assert!(r["objective_kind"]["kind"] == "mean_cvar");
}

#[test]
fn zero_beta_matches_plain_cvar_and_runs_are_reproducible() {
    let dir = TempDir::new().unwrap();
    let m = write(dir.path(), "m.json", TWO_STATE);
    let m = m.to_str().unwrap();
    let a = out_arg(&dir, "a");
    let b = out_arg(&dir, "b");
    let c = out_arg(&dir, "c");
    assert_eq!(code(&run(&["solve", m, "--alpha", "0.7", "--seed", "5", "--starts", "6", "--out", &a])), 0);
    assert_eq!(
        code(&run(&["solve", m, "--alpha", "0.7", "--beta", "0", "--seed", "5", "--starts", "6", "--out", &b])),
        0
    );
    assert_eq!(code(&run(&["solve", m, "--alpha", "0.7", "--seed", "5", "--starts", "6", "--out", &c])), 0);
    for file in ["trace.csv", "runs.csv", "optima.csv", "result.json", "policy.txt"] {
        let first = fs::read(Path::new(&a).join(file)).unwrap();
        assert_eq!(first, fs::read(Path::new(&b).join(file)).unwrap(), "{file}");
        assert_eq!(first, fs::read(Path::new(&c).join(file)).unwrap(), "{file}");
    }
    let trace = csv_rows(&Path::new(&a).join("trace.csv"));
    assert_eq!(trace[0][0], "0");

    let init = write(dir.path(), "init.txt", "1 0");
    let o = run(&["solve", m, "--alpha", "0.7", "--initial", init.to_str().unwrap(), "--out", &out_arg(&dir, "d")]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(json(&dir.path().join("d/manifest.json"))["inputs"]["initial"].is_string());
}

#[test]
fn global_and_maximize_on_small_models() {
    let dir = TempDir::new().unwrap();
    let constant = write(
        dir.path(),
        "k.json",
        r#"{"n_states": 2, "n_actions": 2, "transition": [[0.5, 0.5], [0.1, 0.9], [0.3, 0.7], [0.6, 0.4]], "cost": [[4.0, 4.0], [4.0, 4.0]]}"#,
    );
    for cmd in ["global", "maximize"] {
        let o = run(&[cmd, constant.to_str().unwrap(), "--alpha", "0.8", "--out", &out_arg(&dir, cmd)]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    assert_eq!(json(&dir.path().join("global/global.json"))["best_cvar"], 4.0);
    assert_eq!(json(&dir.path().join("maximize/maximize.json"))["max_cvar"], 4.0);

    let single = write(
        dir.path(),
        "a1.json",
        r#"{"n_states": 2, "n_actions": 1, "transition": [[0.6, 0.4], [0.3, 0.7]], "cost": [[1.0], [5.0]]}"#,
    );
    let o = run(&["maximize", single.to_str().unwrap(), "--alpha", "0.5", "--out", &out_arg(&dir, "a1")]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    // pi = (3/7, 4/7) < alpha at cost 1, so VaR = CVaR = 5
    let v = json(&dir.path().join("a1/maximize.json"))["max_cvar"].as_f64().unwrap();
    assert!((v - 5.0).abs() < 1e-9, "{v}");
    let trace = csv_rows(&dir.path().join("a1/search_trace.csv"));
    assert!(!trace.is_empty());

    let o = run(&["maximize", single.to_str().unwrap(), "--alpha", "0.5", "--tol", "0", "--out", &out_arg(&dir, "t0")]);
    assert_eq!(code(&o), 2);
}

#[test]
fn random_model_global_matches_enumeration() {
    use cvar_mdp::mdp::{MdpModel, Policy};
    use cvar_mdp::risk::{long_run_cvar, RiskParams};
    let dir = TempDir::new().unwrap();
    let text = r#"{"n_states": 3, "n_actions": 2,
      "transition": [[0.2, 0.5, 0.3], [0.6, 0.2, 0.2], [0.1, 0.1, 0.8], [0.3, 0.3, 0.4], [0.5, 0.4, 0.1], [0.25, 0.25, 0.5]],
      "cost": [[3.0, 1.0], [0.0, 6.0], [2.0, 4.0]]}"#;
    let m = write(dir.path(), "r.json", text);
    let o = run(&["global", m.to_str().unwrap(), "--alpha", "0.6", "--out", &out_arg(&dir, "g")]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let got = json(&dir.path().join("g/global.json"))["best_cvar"].as_f64().unwrap();

    let doc: cvar_mdp::document::ModelDocument<f64> = serde_json::from_str(text).unwrap();
    let model: MdpModel<f64> = doc.to_model().unwrap();
    let p = RiskParams::cvar(0.6).unwrap();
    let mut best = f64::INFINITY;
    for k in 0..8usize {
        let d = Policy::Deterministic(vec![k & 1, (k >> 1) & 1, (k >> 2) & 1]);
        best = best.min(long_run_cvar(&model, &d, &p).unwrap().cvar);
    }
    assert!((got - best).abs() < 1e-10);
    assert_eq!(csv_rows(&dir.path().join("g/per_y.csv")).len(), 6);
}

#[test]
fn portfolio_maximization_hits_a_periodic_policy() {
    let dir = TempDir::new().unwrap();
    let o = run(&["maximize", "--scenario", "portfolio", "--out", &out_arg(&dir, "m")]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("period"), "{}", stderr(&o));
    assert!(dir.path().join("m/manifest.json").exists());
}

#[test]
fn scenario_overrides_reach_the_model() {
    let dir = TempDir::new().unwrap();
    let o = run(&[
        "evaluate",
        "--scenario",
        "portfolio",
        "--mean-optimal",
        "--cost-model",
        "expected",
        "--out",
        &out_arg(&dir, "x"),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let e = json(&dir.path().join("x/evaluation.json"));
    assert!(e["std_dev"].as_f64().unwrap() < 100.0);
    let manifest = json(&dir.path().join("x/manifest.json"));
    assert_eq!(manifest["params"]["scenario_config"]["cost_model"], "expected");

    let o = run(&[
        "evaluate",
        "--scenario",
        "portfolio",
        "--mean-optimal",
        "--transaction-cost",
        "-1",
        "--out",
        &out_arg(&dir, "y"),
    ]);
    assert_eq!(code(&o), 2);
    let m = write(dir.path(), "m.json", TWO_STATE);
    let o = run(&["global", m.to_str().unwrap(), "--scenario", "portfolio", "--out", &out_arg(&dir, "z")]);
    assert_eq!(code(&o), 2);
    assert!(stdout(&o).is_empty());
}
