use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::json;

fn setup1(extra: serde_json::Value) -> serde_json::Value {
    let mut cfg = json!({
        "model": {"m0": 0.0, "m1": 0.75, "p": 0.05},
        "sensors": [
            {"sigma_obs_sq": 1.0, "power": 7.5},
            {"sigma_obs_sq": 1.0, "power": 7.5}
        ],
        "mac_sigma_sq": 1.0,
        "lambda": 0.01,
        "trials": 2000
    });
    for (k, v) in extra.as_object().unwrap() {
        cfg[k] = v.clone();
    }
    cfg
}

fn write_config(dir: &Path, cfg: &serde_json::Value) -> String {
    let path = dir.join("config.json");
    fs::write(&path, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    path.to_string_lossy().into_owned()
}

fn phyfusion(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_phyfusion")).args(args).output().unwrap()
}

fn data_rows(csv: &str) -> Vec<&str> {
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("# config-hash: "));
    lines.skip(1).collect()
}

fn parse_grid(csv: &str) -> Vec<(f64, f64)> {
    data_rows(csv)
        .iter()
        .map(|l| {
            let (a, b) = l.split_once(',').unwrap();
            (a.parse().unwrap(), b.parse().unwrap())
        })
        .collect()
}

#[test]
fn unknown_key_exits_with_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &setup1(json!({"lambda_typo": 3})));
    let out = phyfusion(&["solve", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("lambda_typo"));
}

#[test]
fn missing_config_and_unknown_policy_exit_with_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = phyfusion(&["solve", "--config", "/nonexistent/config.json"]);
    assert_eq!(out.status.code(), Some(2));
    let cfg = write_config(dir.path(), &setup1(json!({})));
    let out = phyfusion(&["run", "--config", &cfg, "--policy", "psychic", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn non_convergence_exits_with_numeric_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &setup1(json!({"max_iterations": 2})));
    let out = phyfusion(&["solve", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("lambda = 0.01"));
}

#[test]
fn solve_writes_the_value_function() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &setup1(json!({})));
    let out = phyfusion(&["solve", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("mu_star="));
    let csv = fs::read_to_string(dir.path().join("value_function.csv")).unwrap();
    assert_eq!(csv.lines().nth(1), Some("mu,J"));
    let grid = parse_grid(&csv);
    assert_eq!(grid.len(), 1000);
    assert_eq!(grid[0].0, 0.0);
    assert_eq!(grid[999], (1.0, 0.0));
    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("metadata.json")).unwrap()).unwrap();
    assert_eq!(meta["config"]["grid_points"], 1000);
    assert_eq!(meta["config"]["vi_tol"], 1e-4);
    assert_eq!(meta["config"]["quad_nodes"], 33);
}

#[test]
fn uninformative_model_matches_the_scalar_oracle_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup1(json!({"model": {"m0": 0.4, "m1": 0.4, "p": 0.05}, "vi_tol": 1e-10, "lambda": 0.02}));
    let cfg = write_config(dir.path(), &cfg);
    let out = phyfusion(&["solve", "--validate-scalar", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let j = parse_grid(&fs::read_to_string(dir.path().join("value_function.csv")).unwrap());
    let oracle = parse_grid(&fs::read_to_string(dir.path().join("scalar_oracle.csv")).unwrap());
    assert_eq!(j.len(), oracle.len());
    for ((mu, a), (mu_o, b)) in j.iter().zip(&oracle) {
        assert_eq!(mu, mu_o);
        assert!((a - b).abs() < 1e-6, "mu = {mu}: {a} vs {b}");
    }
}

#[test]
fn scalar_oracle_rejects_informative_models() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &setup1(json!({})));
    let out = phyfusion(&["solve", "--validate-scalar", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn certain_change_run_has_no_delay() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &setup1(json!({"model": {"m0": 0.0, "m1": 0.75, "p": 0.05, "nu": 1.0}})));
    let out = phyfusion(&["run", "--config", &cfg, "--trials", "1", "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("run.csv")).unwrap();
    let rows = data_rows(&csv);
    assert_eq!(rows.len(), 1);
    let fields: Vec<&str> = rows[0].split(',').collect();
    assert_eq!((fields[2], fields[4], fields[6], fields[7]), ("0", "0", "1", "optimal"));
}

#[test]
fn run_appends_rows_under_one_header() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &setup1(json!({"trials": 200})));
    let out_dir = dir.path().to_str().unwrap();
    for seed in ["1", "2"] {
        assert!(phyfusion(&["run", "--config", &cfg, "--seed", seed, "--out", out_dir]).status.success());
    }
    let csv = fs::read_to_string(dir.path().join("run.csv")).unwrap();
    assert_eq!(csv.lines().filter(|l| l.starts_with('#')).count(), 1);
    assert_eq!(data_rows(&csv).len(), 2);
}

#[test]
fn sweep_with_one_lambda_writes_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &setup1(json!({"policy": "suboptimal"})));
    let out = phyfusion(&["sweep", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("curve_suboptimal.csv")).unwrap();
    assert_eq!(csv.lines().nth(1), Some("lambda,mu_star,pfa,pfa_stderr,edd,edd_stderr,trials,policy,seed"));
    assert_eq!(data_rows(&csv).len(), 1);
    assert!(!csv.contains('\r'));
}

#[test]
fn reruns_are_byte_identical() {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let cfg = setup1(json!({
        "lambda": [0.01, 0.05],
        "trials": 3000,
        "seed": 17,
        "compare": {"policies": ["optimal", "quantizer"]}
    }));
    for d in &dirs {
        let cfg = write_config(d.path(), &cfg);
        let out = d.path().to_str().unwrap();
        assert!(phyfusion(&["compare", "--config", &cfg, "--out", out]).status.success());
        assert!(phyfusion(&["run", "--config", &cfg, "--trace", "3", "--out", out]).status.success());
        assert!(phyfusion(&["solve", "--config", &cfg, "--out", out]).status.success());
    }
    for file in ["curve_optimal.csv", "curve_quantizer.csv", "compare.csv", "run.csv", "trace.csv", "value_function.csv"] {
        let a = fs::read(dirs[0].path().join(file)).unwrap();
        let b = fs::read(dirs[1].path().join(file)).unwrap();
        assert_eq!(a, b, "{file}");
    }
}

#[test]
fn seed_override_changes_the_hash_and_the_estimate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &setup1(json!({"trials": 500})));
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert!(phyfusion(&["run", "--config", &cfg, "--out", a.to_str().unwrap()]).status.success());
    assert!(phyfusion(&["run", "--config", &cfg, "--seed", "99", "--out", b.to_str().unwrap()]).status.success());
    let ra = fs::read_to_string(a.join("run.csv")).unwrap();
    let rb = fs::read_to_string(b.join("run.csv")).unwrap();
    assert_ne!(ra.lines().next(), rb.lines().next());
    assert!(data_rows(&rb)[0].ends_with(",99"));
}

#[test]
fn trace_has_one_row_per_sample() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &setup1(json!({"trials": 10})));
    let out = phyfusion(&["run", "--config", &cfg, "--trace", "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success());
    let csv = fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert_eq!(csv.lines().nth(1), Some("stage,alpha_sq,c,mu,policy,gamma"));
    let rows = data_rows(&csv);
    assert!(!rows.is_empty());
    for (i, row) in rows.iter().enumerate() {
        let f: Vec<&str> = row.split(',').collect();
        assert_eq!(f[0].parse::<usize>().unwrap(), i + 1);
        assert_eq!(f[4], "optimal");
    }
}
