use std::process::{Command, Output};

use serde_json::Value;

const UNIFORM: &str = r#"{"kind":"uniform","a":1}"#;
const LAPLACE: &str = r#"{"kind":"laplace","b":1}"#;

fn rankstop(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rankstop"))
        .args(args)
        .env_remove("RANKSTOP_SEED")
        .output()
        .expect("binary runs")
}

fn ok_json(args: &[&str]) -> Value {
    let out = rankstop(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("JSON output")
}

fn strip_timestamp(mut v: Value) -> Value {
    v["manifest"]["timestamp_unix"] = Value::Null;
    v
}

#[test]
fn solve_full_uniform() {
    let v = ok_json(&["solve", "--dist", UNIFORM, "--model", "full"]);
    let r = &v["result"];
    assert!((r["x1_star"].as_f64().unwrap() - 0.8284271).abs() < 1e-7);
    assert!((r["value"].as_f64().unwrap() - 2.2786).abs() < 1e-4);
    assert_eq!(v["manifest"]["command"], "solve");
    assert_eq!(v["manifest"]["distribution"]["kind"], "uniform");
    assert_eq!(v["manifest"]["tolerances"]["quadrature"]["abs_tol"], 1e-10);
}

#[test]
fn solve_relranks() {
    let v = ok_json(&["solve", "--dist", LAPLACE, "--model", "relranks"]);
    assert!((v["result"]["pq"]["p"].as_f64().unwrap() - 1.0 / 192.0).abs() < 1e-9);
    assert!((v["result"]["value"].as_f64().unwrap() - 2.28125).abs() < 1e-9);
    assert_eq!(v["result"]["branch"], "a");
    let v = ok_json(&["solve", "--dist", r#"{"kind":"interval_union","c":1,"d":2}"#, "--model", "relranks"]);
    assert_eq!(v["result"]["branch"], "b");
    assert!((v["result"]["value"].as_f64().unwrap() - 55.0 / 24.0).abs() < 1e-9);
}

#[test]
fn table2_rows() {
    let v = ok_json(&["table2"]);
    let rows = v["result"].as_array().unwrap();
    assert_eq!(rows.len(), 9);
    let find = |version: &str, description: &str| {
        rows.iter()
            .find(|r| r["version"] == version && r["description"] == description)
            .unwrap()["value"]
            .as_f64()
            .unwrap()
    };
    assert!((find("Full Information", "Uniform Distribution") - 2.2786).abs() < 1e-4);
    assert!((find("Relative Ranks", "Laplace Distribution") - 2.28125).abs() < 1e-9);
    assert!((find("Both Versions", "Stopping Immediately") - 2.5).abs() < 1e-12);

    let out = rankstop(&["table2", "--csv"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("# manifest: {"));
    assert_eq!(text.lines().nth(1), Some("version,description,expected_rank,exact"));
    assert_eq!(text.lines().count(), 11);
}

#[test]
fn curve_csv() {
    let out = rankstop(&["curve", "--dist", UNIFORM, "--from", "0.01", "--to", "1", "--points", "100", "--csv"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<Vec<&str>> = text.lines().skip(2).map(|l| l.split(',').collect()).collect();
    let grid: Vec<(f64, f64)> =
        rows.iter().filter(|r| r[2] == "grid").map(|r| (r[0].parse().unwrap(), r[1].parse().unwrap())).collect();
    assert_eq!(grid.len(), 100);
    assert!(grid.windows(2).all(|w| w[1].1 <= w[0].1 + 1e-12));
    let marker: Vec<&Vec<&str>> = rows.iter().filter(|r| r[2] == "threshold").collect();
    assert_eq!(marker.len(), 1);
    assert!((marker[0][0].parse::<f64>().unwrap() - 0.8284).abs() < 1e-4);

    let v = ok_json(&["curve", "--dist", UNIFORM, "--from", "0.5", "--to", "1", "--points", "2"]);
    assert!((v["result"]["points"][0]["w1"].as_f64().unwrap() - 2.109375).abs() < 1e-9);
}

#[test]
fn simulate_examples() {
    let v = ok_json(&["simulate", "--dist", UNIFORM, "--policy", "thm4a", "--seed", "42"]);
    let r = &v["result"];
    let (mean, se) = (r["mean_rank"].as_f64().unwrap(), r["std_error"].as_f64().unwrap());
    assert_eq!(r["n_paths"], 1_000_000);
    assert!((mean - 55.0 / 24.0).abs() <= 3.0 * se, "{mean} ± {se}");
    assert_eq!(v["manifest"]["seed"], 42);

    let v = ok_json(&["simulate", "--dist", UNIFORM, "--policy", "thm2"]);
    let r = &v["result"];
    let (mean, se) = (r["mean_rank"].as_f64().unwrap(), r["std_error"].as_f64().unwrap());
    assert!((mean - 2.2786).abs() <= 3.0 * se + 1e-4, "{mean} ± {se}");
    let n = r["n_paths"].as_f64().unwrap();
    let f1 = r["stop_time_histogram"][1].as_f64().unwrap() / n;
    let want = 2f64.sqrt() - 1.0;
    assert!((f1 - want).abs() <= 4.0 * (want * (1.0 - want) / n).sqrt(), "P(tau = 1) = {f1}");

    let v = ok_json(&["simulate", "--dist", LAPLACE, "--policy", "stop_at_0", "--paths", "100000"]);
    let r = &v["result"];
    assert!((r["mean_rank"].as_f64().unwrap() - 2.5).abs() <= 3.0 * r["std_error"].as_f64().unwrap());
}

#[test]
fn simulate_custom_table_and_csv() {
    let table = r#"{"horizon":2,"stop":[[1]]}"#;
    let v = ok_json(&["simulate", "--dist", LAPLACE, "--policy", table, "--paths", "200000"]);
    let r = &v["result"];
    assert!((r["mean_rank"].as_f64().unwrap() - 1.875).abs() <= 4.0 * r["std_error"].as_f64().unwrap());

    let out = rankstop(&["simulate", "--dist", LAPLACE, "--policy", "thm1", "--paths", "50000", "--csv"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().nth(1).unwrap().starts_with("chunk,"));
}

#[test]
fn seed_comes_from_the_environment() {
    let run = |seed: Option<&str>| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_rankstop"));
        cmd.args(["simulate", "--dist", UNIFORM, "--policy", "thm4b", "--paths", "20000"]);
        match seed {
            Some(s) => cmd.env("RANKSTOP_SEED", s),
            None => cmd.env_remove("RANKSTOP_SEED"),
        };
        strip_timestamp(serde_json::from_slice(&cmd.output().unwrap().stdout).unwrap())
    };
    let a = run(Some("123"));
    assert_eq!(a["manifest"]["seed"], 123);
    assert_eq!(a, run(Some("123")));
    assert_ne!(a["result"], run(Some("124"))["result"]);
    assert_eq!(run(None)["manifest"]["seed"], 42);
}

#[test]
fn output_is_reproducible_and_can_go_to_a_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("pq.json");
    let args = ["pq", "--dist", LAPLACE, "--out", path.to_str().unwrap()];
    let out = rankstop(&args);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let first: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert!(rankstop(&args).status.success());
    let second: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(strip_timestamp(first.clone()), strip_timestamp(second));
    assert_eq!(first["result"]["table"]["entries"].as_array().unwrap().len(), 24);
    assert_eq!(first["result"]["branch"], "a");
}

#[test]
fn dist_from_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.json");
    std::fs::write(&path, UNIFORM).unwrap();
    let arg = format!("@{}", path.display());
    let v = ok_json(&["solve", "--dist", &arg, "--model", "relranks"]);
    assert!((v["result"]["pq"]["p"].as_f64().unwrap() - 1.0 / 96.0).abs() < 1e-10);
}

#[test]
fn enumerate_reports_exact_optimum() {
    let v = ok_json(&["enumerate", "--horizon", "2"]);
    assert_eq!(v["result"]["optimum"], "15/8");
    let v = ok_json(&["enumerate", "--p", "1/192"]);
    assert_eq!(v["result"]["optimum"], "73/32");
    assert_eq!(v["result"]["policies_evaluated"], 512);
    let v = ok_json(&["enumerate", "--p", "0.0104166"]);
    assert_eq!(v["result"]["horizon"], 3);
}

#[test]
fn verify_passes_and_reports() {
    let v = ok_json(&["verify", "--dist", UNIFORM, "--mc-paths", "100000"]);
    assert_eq!(v["result"]["passed"], true);
    let v = ok_json(&["verify", "--dist", r#"{"kind":"powerfold","delta":0.05}"#, "--mc-paths", "100000"]);
    assert_eq!(v["result"]["passed"], true);
    assert!(v["result"]["p"].as_f64().unwrap() < 1.0 / 960.0);
}

#[test]
fn invalid_input_exits_2() {
    let cases: Vec<Vec<&str>> = vec![
        vec!["solve", "--dist", r#"{"kind":"tabulated","grid":[[0,0.48],[1,1]]}"#, "--model", "full"],
        vec!["verify", "--dist", r#"{"kind":"tabulated","grid":[[0,0.48],[1,1]]}"#],
        vec!["solve", "--dist", r#"{"kind":"cauchy"}"#, "--model", "full"],
        vec!["solve", "--dist", "not json", "--model", "full"],
        vec!["solve", "--dist", r#"{"kind":"uniform","a":-1}"#, "--model", "full"],
        vec!["solve", "--dist", "@/nonexistent/file.json", "--model", "full"],
        vec!["simulate", "--dist", UNIFORM, "--policy", "thm1", "--horizon", "3"],
        vec!["simulate", "--dist", UNIFORM, "--policy", "thm9"],
        vec!["simulate", "--dist", UNIFORM, "--policy", "thm4a", "--paths", "0"],
        vec!["enumerate", "--p", "2"],
        vec!["enumerate", "--horizon", "4"],
        vec!["curve", "--dist", UNIFORM, "--from", "1", "--to", "0"],
        vec!["solve", "--dist", UNIFORM],
    ];
    for args in cases {
        let out = rankstop(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        assert!(!out.stderr.is_empty());
    }
}

#[test]
fn numeric_failure_exits_1_with_diagnostics() {
    // a one-subdivision budget cannot reach the requested accuracy
    let out = rankstop(&["solve", "--dist", LAPLACE, "--model", "full", "--quad-max-subdivisions", "1"]);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["error"], "numeric failure");
}
