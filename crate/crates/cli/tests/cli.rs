use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use divseek::io::{read_grid_csv, read_trajectory_csv};
use divseek::verify::EXAMPLE_IDS;
use divseek::Scenario;
use serde_json::Value;
use tempfile::TempDir;

fn divseek(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_divseek"))
        .args(args)
        .env_remove("DIVSEEK_DEFAULT_JOBS")
        .output()
        .expect("binary runs")
}

fn config_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(format!("{name}.json"))
}

fn load_config(name: &str) -> Value {
    serde_json::from_str(&fs::read_to_string(config_path(name)).unwrap()).unwrap()
}

fn write_json(dir: &TempDir, name: &str, value: &Value) -> String {
    let path = dir.path().join(name);
    fs::write(&path, serde_json::to_string_pretty(value).unwrap()).unwrap();
    path.to_str().unwrap().to_string()
}

fn stdout_json(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stdout);
    serde_json::from_str(text.lines().last().expect("summary line")).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn assert_single_error_line(out: &Output, kind: &str) {
    let err = stderr(out);
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(
        err.starts_with(&format!("divseek-error[{kind}]: ")),
        "{err}"
    );
}

fn sweep_rows(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records()
        .map(|rec| rec.unwrap().iter().map(str::to_string).collect())
        .collect()
}

#[test]
fn shipped_configs_match_builtin_scenarios() {
    for id in EXAMPLE_IDS {
        let text = fs::read_to_string(config_path(id)).unwrap();
        let cfg: Value = serde_json::from_str(&text).unwrap();
        let s = Scenario::builtin(id).unwrap();
        assert_eq!(cfg["objective"]["id"], s.objective.id, "{id}");
        assert_eq!(
            serde_json::from_value::<divseek::ControlParams>(cfg["params"].clone()).unwrap(),
            s.params,
            "{id}"
        );
        assert_eq!(
            serde_json::from_value::<Vec<f64>>(cfg["x0"].clone()).unwrap(),
            s.x0,
            "{id}"
        );
        assert_eq!(
            cfg["integrator"]["t_final"].as_f64(),
            s.integrator.t_final,
            "{id}"
        );
    }
}

#[test]
fn simulate_ex2_large_a_reaches_origin() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("traj.csv");
    let run = divseek(&[
        "simulate",
        "--config",
        config_path("ex2_large_a").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(run.status.success(), "{}", stderr(&run));
    let summary = stdout_json(&run);
    assert!(summary["transformed_radius"].as_f64().unwrap() <= 0.3);
    assert!(summary["objective"].as_f64().unwrap().is_finite());
    assert!(summary["averaged_objective"].as_f64().unwrap().is_finite());

    let text = fs::read_to_string(&out).unwrap();
    assert_eq!(
        text.lines().next().unwrap(),
        "t,x1,x2,x3,eta,y_hat,xt1,xt2,xt3"
    );
    let cols = read_trajectory_csv(text.as_bytes()).unwrap();
    assert_eq!(cols.times.len() as u64, summary["rows"].as_u64().unwrap());
    assert_eq!(cols.states[0], vec![3.0; 3]);
}

#[test]
fn simulate_output_is_byte_identical_across_runs() {
    let dir = TempDir::new().unwrap();
    let mut cfg = load_config("ex1_small_a");
    cfg["disturbance"] =
        serde_json::json!({"kind": "piecewise_uniform", "bound": 0.1, "dwell": 1.0, "seed": 3});
    cfg["integrator"] = serde_json::json!({"t_final": 20.0});
    let path = write_json(&dir, "cfg.json", &cfg);
    let mut files = Vec::new();
    for (i, seed) in ["7", "7", "8"].iter().enumerate() {
        let out = dir.path().join(format!("run{i}.csv"));
        let run = divseek(&[
            "simulate",
            "--config",
            &path,
            "--out",
            out.to_str().unwrap(),
            "--seed",
            seed,
        ]);
        assert!(run.status.success(), "{}", stderr(&run));
        files.push(fs::read(out).unwrap());
    }
    assert_eq!(files[0], files[1]);
    assert_ne!(files[0], files[2]);
}

#[test]
fn simulate_uses_output_from_config() {
    let dir = TempDir::new().unwrap();
    let mut cfg = load_config("ex1_large_a");
    let out = dir.path().join("from_config.csv");
    cfg["output"] = Value::String(out.to_str().unwrap().into());
    cfg["integrator"] = serde_json::json!({"t_final": 5.0});
    let run = divseek(&["simulate", "--config", &write_json(&dir, "cfg.json", &cfg)]);
    assert!(run.status.success(), "{}", stderr(&run));
    assert!(out.exists());
}

#[test]
fn simulate_averaged_and_closed_loop_systems() {
    let dir = TempDir::new().unwrap();
    let mut cfg = load_config("ex2_large_a");
    let mut radii = Vec::new();
    for system in ["averaged", "closed_loop", "transformed"] {
        cfg["system"] = Value::String(system.into());
        let out = dir.path().join(format!("{system}.csv"));
        let run = divseek(&[
            "simulate",
            "--config",
            &write_json(&dir, "cfg.json", &cfg),
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(run.status.success(), "{system}: {}", stderr(&run));
        let summary = stdout_json(&run);
        assert_eq!(summary["system"], system);
        radii.push(summary["transformed_radius"].as_f64().unwrap());
        let cols = read_trajectory_csv(fs::File::open(&out).unwrap()).unwrap();
        assert!(cols.times.len() > 2);
        if system == "averaged" {
            assert!(cols
                .filter_states
                .iter()
                .all(|&e| e == cols.filter_states[0]));
        }
    }
    assert!(radii.iter().all(|&r| r <= 0.3), "{radii:?}");
}

#[test]
fn simulate_rejects_nonpositive_a() {
    let dir = TempDir::new().unwrap();
    for a in [0.0, -1.0] {
        let mut cfg = load_config("ex2_large_a");
        cfg["params"]["a"] = serde_json::json!(a);
        let run = divseek(&[
            "simulate",
            "--config",
            &write_json(&dir, "cfg.json", &cfg),
            "--out",
            "unused.csv",
        ]);
        assert_eq!(run.status.code(), Some(2));
        assert_single_error_line(&run, "validation");
        assert!(stderr(&run).contains("`a`"), "{}", stderr(&run));
    }
}

#[test]
fn simulate_rejects_unknown_keys() {
    let dir = TempDir::new().unwrap();
    let mut cfg = load_config("ex2_large_a");
    cfg["params"]["omgea"] = serde_json::json!(1.0);
    let run = divseek(&[
        "simulate",
        "--config",
        &write_json(&dir, "cfg.json", &cfg),
        "--out",
        "unused.csv",
    ]);
    assert_eq!(run.status.code(), Some(2));
    assert_single_error_line(&run, "config");
    assert!(stderr(&run).contains("omgea"));
}

#[test]
fn simulate_divergence_has_its_own_exit_code() {
    let dir = TempDir::new().unwrap();
    let cfg = serde_json::json!({
        "objective": {"id": "quadratic", "matrix": [[5.0, 0.0], [0.0, 5.0]]},
        "params": {"n": 2, "a": 0.5, "b": 5.0, "h": 1.0, "omega": 2.0, "k": 1},
        "x0": [1.0, 0.0],
        "integrator": {"t_final": 50.0}
    });
    let out = dir.path().join("d.csv");
    let run = divseek(&[
        "simulate",
        "--config",
        &write_json(&dir, "cfg.json", &cfg),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(run.status.code(), Some(3));
    assert_single_error_line(&run, "divergence");
}

#[test]
fn failure_paths_print_one_prefixed_line() {
    let missing = divseek(&[
        "simulate",
        "--config",
        "/nonexistent/cfg.json",
        "--out",
        "x.csv",
    ]);
    assert_eq!(missing.status.code(), Some(4));
    assert_single_error_line(&missing, "io");

    let no_out = divseek(&[
        "simulate",
        "--config",
        config_path("ex1_small_a").to_str().unwrap(),
    ]);
    assert_eq!(no_out.status.code(), Some(2));
    assert_single_error_line(&no_out, "usage");

    let bad_flag = divseek(&["simulate", "--bogus"]);
    assert_eq!(bad_flag.status.code(), Some(2));
    assert_single_error_line(&bad_flag, "usage");

    let bad_suite = divseek(&["verify", "--suite", "nope"]);
    assert_eq!(bad_suite.status.code(), Some(2));
    assert_single_error_line(&bad_suite, "validation");
}

#[test]
fn verify_geometry_suite_reports_each_check() {
    let run = divseek(&["verify", "--suite", "geometry", "--jobs", "2"]);
    assert!(run.status.success(), "{}", stderr(&run));
    let text = String::from_utf8(run.stdout).unwrap();
    let names: Vec<String> = text
        .lines()
        .map(|l| {
            serde_json::from_str::<Value>(l).unwrap()["name"]
                .as_str()
                .unwrap()
                .to_string()
        })
        .collect();
    assert_eq!(names.len(), 6);
    assert!(names.iter().all(|n| n.starts_with("geometry/")));
    for wanted in ["tangency", "periodicity", "gram_cross_check"] {
        assert!(names.iter().any(|n| n.ends_with(wanted)), "{wanted}");
    }
}

#[test]
fn verify_writes_reports_to_file() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("reports.jsonl");
    let run = divseek(&[
        "verify",
        "--suite",
        "geometry",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(run.status.success());
    assert!(run.stdout.is_empty());
    assert_eq!(fs::read_to_string(out).unwrap().lines().count(), 6);
}

#[test]
fn sweep_rejects_empty_value_list() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("s.csv");
    for values in ["", " , "] {
        let run = divseek(&[
            "sweep",
            "--config",
            config_path("ex2_large_a").to_str().unwrap(),
            "--axis",
            "a",
            "--values",
            values,
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(run.status.code(), Some(2));
        assert_single_error_line(&run, "usage");
    }
    assert!(!out.exists());
}

#[test]
fn sweep_over_a_separates_ring_from_origin() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("a.csv");
    let run = divseek(&[
        "sweep",
        "--config",
        config_path("ex2_large_a").to_str().unwrap(),
        "--axis",
        "a",
        "--values",
        "0.5,1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(run.status.success(), "{}", stderr(&run));
    let rows = sweep_rows(&out);
    assert_eq!(rows.len(), 2);
    let radius = |row: &Vec<String>| row[3].parse::<f64>().unwrap();
    assert!((2.52..=2.82).contains(&radius(&rows[0])), "{:?}", rows[0]);
    assert!(radius(&rows[1]) <= 0.3, "{:?}", rows[1]);
}

#[test]
fn sweep_over_k_tightens_averaging() {
    let dir = TempDir::new().unwrap();
    let mut cfg = load_config("ex2_large_a");
    cfg["integrator"] = serde_json::json!({"t_final": 60.0});
    let out = dir.path().join("k.csv");
    let run = divseek(&[
        "sweep",
        "--config",
        &write_json(&dir, "cfg.json", &cfg),
        "--axis",
        "k",
        "--values",
        "1,2,3,4,5",
        "--compare-averaged",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(run.status.success(), "{}", stderr(&run));
    let sup: Vec<f64> = sweep_rows(&out)
        .iter()
        .map(|r| r[6].parse().unwrap())
        .collect();
    assert_eq!(sup.len(), 5);
    for w in sup.windows(2) {
        assert!(w[1] <= 1.1 * w[0], "{sup:?}");
    }
}

#[test]
fn sweep_records_per_run_failures_and_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let mut cfg = load_config("ex1_small_a");
    cfg["integrator"] = serde_json::json!({"t_final": 10.0});
    let path = write_json(&dir, "cfg.json", &cfg);
    let mut files = Vec::new();
    for (i, jobs) in ["1", "3"].iter().enumerate() {
        let out = dir.path().join(format!("s{i}.csv"));
        let run = divseek(&[
            "sweep",
            "--config",
            &path,
            "--axis",
            "delta",
            "--values",
            "0,0.1,-1,0.2",
            "--jobs",
            jobs,
            "--seed",
            "5",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(run.status.success(), "{}", stderr(&run));
        files.push(fs::read(&out).unwrap());
        let rows = sweep_rows(&out);
        let status: Vec<&str> = rows.iter().map(|r| r[1].as_str()).collect();
        assert_eq!(status, ["ok", "ok", "error", "ok"]);
        assert!(!rows[2][7].is_empty());
    }
    assert_eq!(files[0], files[1]);
}

#[test]
fn sweep_rejects_fractional_k_per_row() {
    let dir = TempDir::new().unwrap();
    let mut cfg = load_config("ex1_small_a");
    cfg["integrator"] = serde_json::json!({"t_final": 5.0});
    let out = dir.path().join("k.csv");
    let run = divseek(&[
        "sweep",
        "--config",
        &write_json(&dir, "cfg.json", &cfg),
        "--axis",
        "k",
        "--values",
        "1.5,2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(run.status.success());
    let rows = sweep_rows(&out);
    assert_eq!(rows[0][1], "error");
    assert!(rows[0][7].contains("`k`"));
    assert_eq!(rows[1][1], "ok");
}

fn field(request: &Value) -> (Vec<String>, Vec<Vec<f64>>) {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("grid.csv");
    let run = divseek(&[
        "field",
        "--config",
        &write_json(&dir, "req.json", request),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(run.status.success(), "{}", stderr(&run));
    read_grid_csv(fs::File::open(out).unwrap()).unwrap()
}

#[test]
fn field_of_constant_objective_is_flat() {
    let (header, rows) = field(&serde_json::json!({
        "objective": {"id": "constant", "dim": 2, "value": 1.25},
        "a": 0.5,
        "axes": [{"index": 0, "min": -1, "max": 1, "count": 5}, {"index": 1, "min": -1, "max": 1, "count": 4}]
    }));
    assert_eq!(header, ["x1", "x2", "value"]);
    assert_eq!(rows.len(), 20);
    assert!(rows.iter().all(|r| (r[2] - 1.25).abs() < 1e-12));
    assert_eq!(rows[1][..2], [-1.0, -1.0 + 2.0 / 3.0]);
}

fn radial_sign_changes(rows: &[Vec<f64>]) -> usize {
    let ray: Vec<f64> = rows
        .iter()
        .filter(|r| r[1] == 0.0 && r[0] >= 0.0)
        .map(|r| r[2])
        .collect();
    let diffs: Vec<f64> = ray
        .windows(2)
        .map(|w| w[1] - w[0])
        .filter(|d| *d != 0.0)
        .collect();
    diffs
        .windows(2)
        .filter(|w| w[0].signum() != w[1].signum())
        .count()
}

#[test]
fn field_averaging_removes_ripples_along_ray() {
    let mut raw = load_config("field_ex1_raw");
    let mut avg = load_config("field_ex1_averaged");
    for req in [&mut raw, &mut avg] {
        req["axes"] = serde_json::json!([
            {"index": 0, "min": -4, "max": 4, "count": 161},
            {"index": 1, "min": -4, "max": 4, "count": 3}
        ]);
    }
    let (_, raw_rows) = field(&raw);
    let (_, avg_rows) = field(&avg);
    let (raw_changes, avg_changes) = (
        radial_sign_changes(&raw_rows),
        radial_sign_changes(&avg_rows),
    );
    assert!(
        avg_changes < raw_changes,
        "raw {raw_changes}, averaged {avg_changes}"
    );
}

#[test]
fn field_argmax_of_averaged_ring_is_at_origin() {
    let mut req = load_config("field_ex2_slice");
    req["axes"] = serde_json::json!([
        {"index": 0, "min": -4, "max": 4, "count": 17},
        {"index": 1, "min": -4, "max": 4, "count": 17}
    ]);
    let (_, rows) = field(&req);
    let best = rows.iter().max_by(|a, b| a[2].total_cmp(&b[2])).unwrap();
    assert_eq!(best[..2], [0.0, 0.0]);
}
