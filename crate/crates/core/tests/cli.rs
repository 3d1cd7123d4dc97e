use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mixopt::problem::Problem;

fn bundled(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("problems").join(name)
}

fn mixopt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mixopt")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn bundled_problems_validate() {
    for name in ["mlp.json", "toy.json"] {
        let out = mixopt(&["validate", bundled(name).to_str().unwrap()]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
    }
}

#[test]
fn enumerate_prints_one_row_per_meta_component() {
    let out = mixopt(&["enumerate", bundled("mlp.json").to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().skip(2).count(), 4);
    let first = text.lines().nth(2).unwrap();
    assert!(first.starts_with("(o=Adam, l=2)"), "{first}");
    let cols: Vec<&str> = first.split_whitespace().rev().take(4).collect();
    // |C^m|, n^c, n^z, n^q read right to left.
    assert_eq!(cols, ["1", "4", "2", "1"]);
}

#[test]
fn syntax_errors_exit_with_validation_code() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "bad.json", "{ \"name\": ");
    let out = mixopt(&["validate", &f]);
    assert_eq!(code(&out), 2);
}

#[test]
fn decree_on_a_non_meta_variable_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"{
      "name": "bad",
      "variables": [
        { "id": "o", "type": "meta-categorical", "role": "meta", "scope": { "categories": ["Adam", "ASGD"] } },
        { "id": "a", "type": "nominal", "role": "global", "scope": { "categories": ["ReLU", "Sigmoid"] } },
        { "id": "lambda", "type": "continuous", "role": "decreed", "scope": { "lo": 0, "hi": 1 },
          "decree": [ { "var": "a", "in": ["ReLU"] } ] }
      ],
      "constraints": [],
      "blackbox": { "builtin": "toy_discrete" }
    }"#;
    let f = write(dir.path(), "p.json", text);
    let out = mixopt(&["validate", &f]);
    assert_eq!(code(&out), 2);
    let err = stderr(&out);
    assert!(err.contains("meta-decreeing-meta"), "{err}");
    assert!(err.contains("variables[2].decree"), "{err}");
}

#[test]
fn unknown_ids_are_reported_with_their_path() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"{
      "name": "bad",
      "variables": [
        { "id": "x", "type": "continuous", "role": "global", "scope": { "lo": 0, "hi": 1 } }
      ],
      "constraints": [
        { "id": "c", "role": "global", "analytic": { "terms": [ { "coef": 1, "var": "y" } ], "constant": 0 } }
      ],
      "blackbox": { "builtin": "toy_discrete" }
    }"#;
    let f = write(dir.path(), "p.json", text);
    let out = mixopt(&["validate", &f]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("unknown-id"), "{}", stderr(&out));
}

#[test]
fn missing_file_is_a_runtime_error() {
    let out = mixopt(&["validate", "/nonexistent/problem.json"]);
    assert_eq!(code(&out), 3);
}

#[test]
fn unknown_solver_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("h.csv");
    let out = mixopt(&[
        "solve",
        bundled("toy.json").to_str().unwrap(),
        "--solver",
        "annealing",
        "--budget",
        "10",
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("Usage"), "{}", stderr(&out));
    assert!(!csv.exists());
}

#[test]
fn help_exits_cleanly() {
    let out = mixopt(&["--help"]);
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stdout).contains("solve"));
}

#[test]
fn solve_writes_history_and_aux_log() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("h.csv");
    let out = mixopt(&[
        "solve",
        bundled("toy.json").to_str().unwrap(),
        "--solver",
        "direct",
        "--budget",
        "200",
        "--seed",
        "0",
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("eval_index,cached,feasible,objective,m,p,q,s,k,k_cap\n"));
    assert!(stderr(&out).contains("iteration 1"));

    let log = dir.path().join("aux.csv");
    let out = mixopt(&[
        "solve",
        bundled("toy.json").to_str().unwrap(),
        "--solver",
        "bo",
        "--budget",
        "30",
        "--quiet",
        "--out",
        csv.to_str().unwrap(),
        "--aux-log",
        log.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stderr(&out).is_empty());
    let log = std::fs::read_to_string(&log).unwrap();
    let mut lines = log.lines();
    assert_eq!(lines.next(), Some("iteration,meta,ei,surrogate_feasible"));
    assert!(lines.count() > 0);
}

#[test]
fn history_rows_match_the_problem_model() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("h.csv");
    let out = mixopt(&[
        "solve",
        bundled("mlp.json").to_str().unwrap(),
        "--solver",
        "direct",
        "--budget",
        "100",
        "--quiet",
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    let text = std::fs::read_to_string(&csv).unwrap();
    let problem = Problem::mlp();
    let rows = mixopt::runtime::read_history(&problem, &text).unwrap();
    assert!(rows.iter().filter(|r| !r.cached).count() <= 100);
    for r in &rows {
        assert!(problem.domain.contains(&r.point));
    }
    // Nonacting cells are empty: under l = 2 the u3 column is blank.
    let header: Vec<&str> = text.lines().next().unwrap().split(',').collect();
    let u3 = header.iter().position(|h| *h == "u3").unwrap();
    let l = header.iter().position(|h| *h == "l").unwrap();
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    for rec in reader.records() {
        let rec = rec.unwrap();
        assert_eq!(rec[l] == *"2", rec[u3].is_empty());
    }
}

#[test]
fn run_config_is_applied_and_checked() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("h.csv");
    let toy = bundled("toy.json");
    let good = write(
        dir.path(),
        "run.json",
        r#"{ "opportunistic": false, "global": "none", "subproblem_budget": 20 }"#,
    );
    let out = mixopt(&[
        "solve",
        toy.to_str().unwrap(),
        "--solver",
        "direct",
        "--budget",
        "40",
        "--quiet",
        "--out",
        csv.to_str().unwrap(),
        "--config",
        &good,
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let bad = write(dir.path(), "bad.json", r#"{ "opportunism": true }"#);
    let out = mixopt(&[
        "solve",
        toy.to_str().unwrap(),
        "--solver",
        "direct",
        "--budget",
        "40",
        "--out",
        csv.to_str().unwrap(),
        "--config",
        &bad,
    ]);
    assert_eq!(code(&out), 2);
}

fn python_problem(dir: &Path, script: &str, timeout: f64) -> String {
    let script_path = write(dir, "bb.py", script);
    let text = serde_json::json!({
        "name": "line",
        "variables": [
            { "id": "x", "type": "continuous", "role": "global", "scope": { "lo": 0, "hi": 1 } }
        ],
        "constraints": [ { "id": "g", "role": "global", "blackbox": true } ],
        "blackbox": { "command": ["python3", script_path], "timeout": timeout }
    });
    write(dir, "line.json", &text.to_string())
}

fn has_python() -> bool {
    Command::new("python3")
        .arg("--version")
        .output()
        .map(|o| o.status.success())
        .unwrap_or(false)
}

#[test]
fn subprocess_blackbox_drives_a_solve() {
    if !has_python() {
        eprintln!("python3 not available; skipping");
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let script = "import json, sys\np = json.load(sys.stdin)\nx = p['standard']['x']\nprint(json.dumps({'objective': (x - 0.3) ** 2, 'constraints': {'g': x - 0.8}}))\n";
    let problem = python_problem(dir.path(), script, 10.0);
    let csv = dir.path().join("h.csv");
    let out = mixopt(&[
        "solve",
        &problem,
        "--solver",
        "direct",
        "--budget",
        "25",
        "--quiet",
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let stdout = String::from_utf8(out.stdout).unwrap();
    let best: f64 = stdout
        .lines()
        .next()
        .unwrap()
        .trim_start_matches("best objective ")
        .parse()
        .unwrap();
    assert!(best < 1e-3, "{stdout}");
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("eval_index,cached,feasible,objective,x,g\n"));
}

#[test]
fn failing_and_slow_blackboxes_are_recorded_as_infeasible() {
    if !has_python() {
        eprintln!("python3 not available; skipping");
        return;
    }
    for script in [
        "import sys\nsys.exit(4)\n",
        "import time\ntime.sleep(30)\n",
        "print('not json')\n",
    ] {
        let dir = tempfile::tempdir().unwrap();
        let problem = python_problem(dir.path(), script, 30.0);
        let csv = dir.path().join("h.csv");
        let out = Command::new(env!("CARGO_BIN_EXE_mixopt"))
            .args([
                "solve", &problem, "--solver", "direct", "--budget", "2", "--quiet", "--out",
            ])
            .arg(&csv)
            .env(mixopt::cli::TIMEOUT_ENV, "0.3")
            .output()
            .unwrap();
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        let text = std::fs::read_to_string(&csv).unwrap();
        let rows: Vec<&str> = text.lines().skip(1).collect();
        assert!(!rows.is_empty());
        for row in rows {
            let cells: Vec<&str> = row.split(',').collect();
            assert_eq!(cells[2], "false", "{row}");
            assert_eq!(cells[3], "inf", "{row}");
        }
    }
}
