use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn nova() -> Command {
    Command::new(env!("CARGO_BIN_EXE_nova"))
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_config(dir: &Path, name: &str, body: serde_json::Value) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body.to_string()).unwrap();
    path
}

#[test]
fn list_problems_names_every_benchmark() {
    let o = nova().arg("list-problems").output().unwrap();
    assert!(o.status.success());
    let text = stdout(&o);
    for id in ["reverse-ball", "bilinear-floor", "shared-budget", "product-floor"] {
        assert!(text.contains(id), "{text}");
    }
}

#[test]
fn run_writes_a_csv_trace() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("p2.csv");
    let o = nova()
        .args(["run", "--config"])
        .arg(configs().join("p2.json"))
        .arg("--trace")
        .arg(&trace)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("status: Stationary"));
    let csv = std::fs::read_to_string(&trace).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "nu,U,gamma,bestresp_dist,max_g,descent_lhs,descent_rhs,kkt,inner_iters,wall_ms"
    );
    let last: Vec<f64> = csv.lines().last().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    assert!((last[1] - 2.0).abs() < 1e-5, "final U {}", last[1]);
}

#[test]
fn run_with_json_trace_and_oracle_check() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("p1.json");
    let o = nova()
        .args(["run", "--check-oracles", "--trace-format", "json", "--config"])
        .arg(configs().join("p1.json"))
        .arg("--trace")
        .arg(&trace)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&trace).unwrap()).unwrap();
    assert!(rows.as_array().is_some_and(|r| !r.is_empty()));
    assert!(rows[0].get("U").is_some());
}

#[test]
fn invalid_constant_step_exits_with_code_2() {
    let o = nova()
        .args(["run", "--config"])
        .arg(configs().join("p2-bad-step.json"))
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("2·c > gamma_max·L"));
}

#[test]
fn bad_inputs_exit_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let unknown_key = write_config(dir.path(), "a.json", serde_json::json!({"problem": {"id": "product-floor"}, "bogus": 1}));
    let unknown_problem = write_config(dir.path(), "b.json", serde_json::json!({"problem": {"id": "missing"}}));
    let infeasible_start =
        write_config(dir.path(), "c.json", serde_json::json!({"problem": {"id": "bilinear-floor"}, "x0": [0.2, 0.2]}));
    for path in [unknown_key, unknown_problem, infeasible_start, dir.path().join("absent.json")] {
        let o = nova().args(["run", "--config"]).arg(&path).output().unwrap();
        assert_eq!(o.status.code(), Some(2), "{}: {}", path.display(), String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn iteration_limit_exits_with_code_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "short.json",
        serde_json::json!({"problem": {"id": "bilinear-floor"}, "nova": {"max_outer": 2}, "x0": [3.0, 3.0]}),
    );
    let o = nova().args(["run", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn verify_surrogate_reports_all_variants() {
    let o = nova()
        .args(["verify-surrogate", "--all-variants", "--samples", "2000", "--config"])
        .arg(configs().join("p2.json"))
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stdout(&o));
    let text = stdout(&o);
    assert!(text.contains("recipe proximal+bilinear"));
    assert!(text.contains("all checks passed"));
}

#[test]
fn verify_surrogate_fails_on_an_underestimating_model() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "sine.json",
        serde_json::json!({
            "problem": {"custom": {
                "dim": 1,
                "set": {"kind": "box", "lower": [0.0], "upper": [std::f64::consts::TAU]},
                "objective": {"kind": "squared-distance", "center": [3.0]},
                "constraints": [{"kind": "sin", "a": [1.0], "b": 0.0}]
            }},
            "surrogate": {
                "objective": {"kind": "proximal", "tau": 1.0},
                "constraints": [{"kind": "lipschitz", "params": {"lipschitz": 0.5}}]
            },
            "x0": [1.5 * std::f64::consts::PI]
        }),
    );
    let o = nova().args(["verify-surrogate", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(o.status.code(), Some(1), "{}", stdout(&o));
    assert!(stdout(&o).contains("C3"));
}

#[test]
fn grid_oracle_finds_the_bilinear_optimum() {
    let o = nova()
        .args(["grid-oracle", "--problem", "bilinear-floor", "--resolution", "0.01", "--lower", "0.1,0.1", "--upper", "3,3"])
        .output()
        .unwrap();
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("best point: [1.0, 1.0]"), "{text}");
    assert!(text.contains("best value: 2.000000000000"), "{text}");
    let o = nova().args(["grid-oracle", "--problem", "shared-budget", "--resolution", "0.1"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn simulate_reports_messages_and_round_log() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("rounds.json");
    let o = nova()
        .args(["simulate", "--mode", "primal", "--config"])
        .arg(configs().join("p2.json"))
        .arg("--roundlog")
        .arg(&log)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let count = |key: &str| -> usize {
        text.lines()
            .find_map(|l| l.strip_prefix(key))
            .unwrap()
            .trim()
            .parse()
            .unwrap()
    };
    let rounds = count("rounds:");
    assert_eq!(count("messages:"), rounds * 4);
    let logged: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&log).unwrap()).unwrap();
    assert_eq!(logged.as_array().unwrap().len(), rounds);

    let o = nova()
        .args(["simulate", "--mode", "dual", "--agents", "3", "--config"])
        .arg(configs().join("p2.json"))
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn traces_are_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let mut traces = Vec::new();
    for (k, threads) in ["1", "1", "4"].iter().enumerate() {
        let path = dir.path().join(format!("t{k}.csv"));
        let o = nova()
            .env("NOVA_THREADS", threads)
            .args(["run", "--config"])
            .arg(configs().join("p3.json"))
            .arg("--trace")
            .arg(&path)
            .output()
            .unwrap();
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        traces.push(std::fs::read(&path).unwrap());
    }
    assert_eq!(traces[0], traces[1]);
    assert_eq!(traces[0], traces[2]);

    let o = nova().env("NOVA_THREADS", "zero").arg("list-problems").output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}
