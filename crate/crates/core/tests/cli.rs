use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn conal(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_conal"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_owned()
}

#[test]
fn order_exit_codes() {
    let out = conal(&[
        "order",
        "--cone",
        "loewner",
        "--a",
        "I2",
        "--b",
        "diag(2,2)",
    ]);
    assert_eq!(code(&out), 0);
    let report = stdout_json(&out);
    assert_eq!(report["result"]["ordered"], true);
    assert_eq!(report["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(report["config"]["cone"], "loewner");
    assert_eq!(report["config"]["b"][1][1], 2.0);

    let out = conal(&[
        "order",
        "--cone",
        "quad",
        "--mu",
        "1.0",
        "--a",
        "I2",
        "--b",
        "diag(e,1/e)",
    ]);
    assert_eq!(code(&out), 1);

    let out = conal(&[
        "order",
        "--cone",
        "loewner",
        "--a",
        "diag(2,2)",
        "--b",
        "I2",
    ]);
    assert_eq!(code(&out), 1);
}

#[test]
fn order_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.json", "[[1, 0], [0");
    assert_eq!(
        code(&conal(&[
            "order", "--cone", "loewner", "--a", "I2", "--b", &bad
        ])),
        2
    );
    let indefinite = write(dir.path(), "m.json", "[[1, 0], [0, -1]]");
    assert_eq!(
        code(&conal(&[
            "order",
            "--cone",
            "loewner",
            "--a",
            "I2",
            "--b",
            &indefinite
        ])),
        2
    );
    assert_eq!(
        code(&conal(&[
            "order", "--cone", "quad", "--a", "I2", "--b", "I2"
        ])),
        2
    );
    assert_eq!(
        code(&conal(&[
            "order", "--cone", "loewner", "--a", "I2", "--b", "I3"
        ])),
        2
    );
    assert_eq!(code(&conal(&["no-such-command"])), 2);
    assert_eq!(code(&conal(&["--version"])), 0);
}

#[test]
fn order_from_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "order.json",
        r#"{"cone": "quad", "mu": 1.5, "a": "I3", "b": [[2, 0, 0], [0, 2, 0], [0, 0, 2]]}"#,
    );
    let outdir = dir.path().join("out");
    let out = conal(&["order", "--config", &cfg, "--out", outdir.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let saved = std::fs::read(outdir.join("report.json")).unwrap();
    assert_eq!(saved, out.stdout);
}

#[test]
fn cone_check_and_probes() {
    assert_eq!(
        code(&conal(&[
            "cone-check",
            "--cone",
            "quad",
            "--mu",
            "1.5",
            "--x",
            "diag(1,1)"
        ])),
        0
    );
    assert_eq!(
        code(&conal(&[
            "cone-check",
            "--cone",
            "loewner",
            "--x",
            "diag(1,-1)"
        ])),
        1
    );
    assert_eq!(
        code(&conal(&[
            "probe-axioms",
            "--cone",
            "quad",
            "--mu",
            "1",
            "--samples",
            "100"
        ])),
        0
    );
    let out = conal(&[
        "monotone",
        "--cone",
        "loewner",
        "--n",
        "2",
        "--r",
        "0.5",
        "--samples",
        "200",
    ]);
    assert_eq!(code(&out), 0);
    let out = conal(&[
        "monotone",
        "--cone",
        "loewner",
        "--n",
        "2",
        "--r",
        "2",
        "--samples",
        "200",
    ]);
    assert_eq!(code(&out), 1);
    assert!(
        stdout_json(&out)["result"]["violation_count"]
            .as_u64()
            .unwrap()
            > 0
    );
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_owned).collect())
        .collect()
}

#[test]
fn loewner_heinz_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "sweep.json",
        r#"{"r_grid": [0.25, 0.5, 0.75, 1.0, 2.0], "mu_grid": [0.5, 1.0, 1.5], "n_list": [2], "pairs": 500, "seed": 3}"#,
    );
    let out_a = dir.path().join("a");
    let out = conal(&[
        "loewner-heinz",
        "--config",
        &cfg,
        "--out",
        out_a.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    let rows = csv_rows(&out_a.join("table.csv"));
    assert_eq!(rows.len(), 4 * 5);
    for row in &rows {
        let r: f64 = row[3].parse().unwrap();
        let violations: usize = row[4].parse().unwrap();
        if r <= 1.0 {
            assert_eq!(violations, 0, "{row:?}");
        } else {
            assert!(violations > 0, "{row:?}");
        }
    }
    let report = stdout_json(&out);
    for cell in report["result"]["cells"].as_array().unwrap() {
        if cell["r"].as_f64().unwrap() > 1.0 {
            assert!(cell["witness"].is_object());
        }
    }
    assert_eq!(std::fs::read_dir(out_a.join("cells")).unwrap().count(), 20);

    // same seed, fewer threads: identical bytes
    let out_b = dir.path().join("b");
    let rerun = Command::new(env!("CARGO_BIN_EXE_conal"))
        .args([
            "loewner-heinz",
            "--config",
            &cfg,
            "--out",
            out_b.to_str().unwrap(),
        ])
        .env("CONAL_THREADS", "1")
        .output()
        .unwrap();
    assert_eq!(code(&rerun), 0);
    assert_eq!(
        std::fs::read(out_a.join("table.csv")).unwrap(),
        std::fs::read(out_b.join("table.csv")).unwrap()
    );
    assert_eq!(
        std::fs::read(out_a.join("report.json")).unwrap(),
        std::fs::read(out_b.join("report.json")).unwrap()
    );
}

#[test]
fn empty_r_grid_gives_empty_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "sweep.json", r#"{"r_grid": []}"#);
    let out_dir = dir.path().join("o");
    assert_eq!(
        code(&conal(&[
            "loewner-heinz",
            "--config",
            &cfg,
            "--out",
            out_dir.to_str().unwrap()
        ])),
        0
    );
    assert_eq!(
        std::fs::read_to_string(out_dir.join("table.csv")).unwrap(),
        "cone,n,mu,r,violations,min_margin\n"
    );
}

fn run_consensus(dir: &Path, name: &str, config: &str) -> (i32, Value, std::path::PathBuf) {
    let cfg = write(dir, &format!("{name}.json"), config);
    let out_dir = dir.join(name);
    let out = conal(&[
        "consensus",
        "--config",
        &cfg,
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    let diag: Value =
        serde_json::from_slice(&std::fs::read(out_dir.join("diagnostics.json")).unwrap()).unwrap();
    (code(&out), diag, out_dir)
}

#[test]
fn two_agent_consensus_locks_at_root() {
    let dir = tempfile::tempdir().unwrap();
    let config = r#"{"network": {"type": "ring", "n": 2, "coupling": {"kind": "barrier_tan", "gain": 1.0}, "omega": [0.1, -0.1]},
                    "theta0": [0.0, 0.0], "horizon": 60, "dt": 0.01}"#;
    let (status, diag, out_dir) = run_consensus(dir.path(), "pair", config);
    assert_eq!(status, 0);
    let result = &diag["result"];
    assert_eq!(result["lock"]["locked"], true);
    let gap = result["lock"]["asymptotic_gaps"][1].as_f64().unwrap();
    // tan(δ) = 0.1 with gap θ₂ − θ₁ = −2δ
    let delta = {
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if mid.tan() > 0.1 {
                hi = mid
            } else {
                lo = mid
            }
        }
        0.5 * (lo + hi)
    };
    assert!((gap + 2.0 * delta).abs() < 1e-6, "{gap}");
    assert_eq!(diag["config"]["window"], 6.0);

    let csv = std::fs::read_to_string(out_dir.join("trajectory.csv")).unwrap();
    assert!(csv.starts_with("t,theta_1,theta_2\n"));
    assert_eq!(csv.lines().count(), 6002);

    let (_, _, again) = run_consensus(dir.path(), "pair_again", config);
    assert_eq!(
        std::fs::read(out_dir.join("trajectory.csv")).unwrap(),
        std::fs::read(again.join("trajectory.csv")).unwrap()
    );
}

#[test]
fn uncoupled_agents_do_not_lock() {
    let dir = tempfile::tempdir().unwrap();
    let config =
        r#"{"network": {"type": "explicit", "omega": [0.0, 1.0], "edges": []}, "horizon": 10}"#;
    let (status, diag, _) = run_consensus(dir.path(), "free", config);
    assert_eq!(status, 0);
    assert_eq!(diag["result"]["lock"]["locked"], false);
    assert!(diag["result"]["contraction"].is_null());
}

#[test]
fn seeded_ring_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let config = r#"{"network": {"type": "ring", "n": 6, "chords": [[0, 3]], "coupling": {"kind": "barrier_tan", "gain": 1.0}, "omega_range": [-0.2, 0.2]},
                    "horizon": 40, "seed": 9}"#;
    let (s1, d1, o1) = run_consensus(dir.path(), "r1", config);
    let (s2, d2, o2) = run_consensus(dir.path(), "r2", config);
    assert_eq!((s1, s2), (0, 0));
    assert_eq!(d1, d2);
    assert_eq!(
        std::fs::read(o1.join("trajectory.csv")).unwrap(),
        std::fs::read(o2.join("trajectory.csv")).unwrap()
    );
    assert_eq!(
        d1["config"]["network"]["omega"].as_array().unwrap().len(),
        6
    );
    assert_eq!(d1["result"]["contraction"]["strictly_positive"], true);
}

#[test]
fn barrier_breach_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let config = r#"{"network": {"type": "ring", "n": 2, "coupling": {"kind": "barrier_tan", "gain": 1.0}, "omega": [0.0, 0.0], "sign": "printed"},
                    "theta0": [0.0, 0.1], "horizon": 50}"#;
    let (status, diag, _) = run_consensus(dir.path(), "breach", config);
    assert_eq!(status, 3);
    assert_eq!(diag["result"]["status"], "barrier_breach");
    assert!(diag["result"]["time"].as_f64().unwrap() > 0.0);
}
