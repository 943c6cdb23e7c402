use std::path::PathBuf;
use std::process::{Command, Output};

fn spec(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../specs")
        .join(name)
}

fn mup(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mup"))
        .args(args)
        .env_remove("MUP_THREADS")
        .output()
        .expect("mup runs")
}

fn rm1() -> String {
    spec("rm1.json").display().to_string()
}

#[test]
fn validate_rm1() {
    let out = mup(&["validate", "--config", &rm1()]);
    assert_eq!(out.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((report["rho"].as_f64().unwrap() - 1.0 / 3.0).abs() < 1e-15);
    assert_eq!(report["violations"].as_array().unwrap().len(), 0);
    assert_eq!(report["seed"], 0);
}

#[test]
fn validate_flags_violations() {
    let bad = spec("rm1_point_floor.json").display().to_string();
    let out = mup(&["validate", "--config", &bad]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("irreducibility"));
}

#[test]
fn missing_config_is_usage_error() {
    let out = mup(&["validate", "--config", "/nonexistent/spec.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
}

#[test]
fn malformed_config_is_a_violation() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(
        &path,
        r#"{"type":"reference","N":3,"Nbar":12,"q":1.5,"beta":0.5}"#,
    )
    .unwrap();
    let out = mup(&["validate", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn bad_flags_are_usage_errors() {
    assert_eq!(
        mup(&["simulate", "--config", &rm1()]).status.code(),
        Some(2)
    );
    assert_eq!(mup(&["frobnicate"]).status.code(), Some(2));
    let out = mup(&["simulate", "--config", &rm1(), "--x0", "5", "--past", "4-5"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn help_documents_flags() {
    let out = mup(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    for word in [
        "validate",
        "simulate",
        "hitting",
        "exact",
        "verify",
        "stationary",
        "--threads",
    ] {
        assert!(text.contains(word), "{word}");
    }
    let out = mup(&["verify", "--help"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    for flag in [
        "--config", "--seed", "--out", "--starts", "--reps", "--cap", "--format",
    ] {
        assert!(text.contains(flag), "{flag}");
    }
}

#[test]
fn floor_start_has_zero_tau() {
    let out = mup(&[
        "hitting",
        "--config",
        &rm1(),
        "--x0",
        "2",
        "--reps",
        "100",
        "--seed",
        "7",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().contains("seed=7"));
    assert_eq!(lines.next(), Some("rep,tau,gamma,censored"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 100);
    assert!(rows.iter().all(|r| r.split(',').nth(1) == Some("0")));
}

#[test]
fn verify_is_byte_identical() {
    let args = [
        "verify",
        "--config",
        &rm1(),
        "--reps",
        "100000",
        "--seed",
        "7",
    ];
    let a = mup(&args);
    let b = mup(&args);
    assert_eq!(
        a.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&a.stderr)
    );
    assert_eq!(a.stdout, b.stdout);
    let report: serde_json::Value = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(report["seed"], 7);
    assert_eq!(report["replications"], 100000);
}

#[test]
fn output_does_not_depend_on_threads() {
    let base = [
        "stationary",
        "--config",
        &rm1(),
        "--method",
        "regen",
        "--cycles",
        "3000",
        "--seed",
        "5",
    ];
    let one = mup(&[&base[..], &["--threads", "1"]].concat());
    let four = mup(&[&base[..], &["--threads", "4"]].concat());
    assert_eq!(one.status.code(), Some(0));
    assert_eq!(one.stdout, four.stdout);
    let env = Command::new(env!("CARGO_BIN_EXE_mup"))
        .args(base)
        .env("MUP_THREADS", "3")
        .output()
        .unwrap();
    assert_eq!(env.stdout, one.stdout);
    let hit = [
        "hitting",
        "--config",
        &rm1(),
        "--x0",
        "9",
        "--reps",
        "500",
        "--seed",
        "1",
    ];
    assert_eq!(
        mup(&[&hit[..], &["--threads", "1"]].concat()).stdout,
        mup(&[&hit[..], &["--threads", "8"]].concat()).stdout
    );
}

#[test]
fn exact_writes_three_files() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("exact");
    let out = mup(&[
        "exact",
        "--config",
        &rm1(),
        "--x0",
        "10",
        "--t-max",
        "50",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stationary = std::fs::read_to_string(out_dir.join("stationary.csv")).unwrap();
    assert_eq!(stationary.lines().nth(1), Some("state_path,pi"));
    assert_eq!(stationary.lines().count(), 2 + 58);
    let hitting = std::fs::read_to_string(out_dir.join("hitting.csv")).unwrap();
    assert_eq!(hitting.lines().nth(1), Some("state_path,e_tau,e_gamma"));
    assert!(hitting.lines().any(|l| l.starts_with("3-4-5,0,")));
    let reliability = std::fs::read_to_string(out_dir.join("reliability.csv")).unwrap();
    assert_eq!(reliability.lines().nth(2), Some("0,1"));
    assert_eq!(reliability.lines().count(), 2 + 51);
}

#[test]
fn simulate_writes_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.csv");
    let args = [
        "simulate",
        "--config",
        &rm1(),
        "--x0",
        "5",
        "--past",
        "5-6-7",
        "--horizon",
        "20",
        "--seed",
        "3",
        "--out",
        path.to_str().unwrap(),
    ];
    assert_eq!(mup(&args).status.code(), Some(0));
    let first = std::fs::read(&path).unwrap();
    assert_eq!(mup(&args).status.code(), Some(0));
    assert_eq!(std::fs::read(&path).unwrap(), first);
    let text = String::from_utf8(first).unwrap();
    assert!(text.starts_with("# spec="));
    assert_eq!(text.lines().nth(2), Some("0,5,2,-2,down"));
    assert_eq!(text.lines().count(), 2 + 21);
}

#[test]
fn stationary_methods_agree() {
    let exact = mup(&[
        "stationary",
        "--config",
        &rm1(),
        "--method",
        "exact",
        "--format",
        "csv",
    ]);
    let occ = mup(&[
        "stationary",
        "--config",
        &rm1(),
        "--method",
        "occupation",
        "--steps",
        "2000000",
        "--format",
        "csv",
    ]);
    let parse = |o: &Output| -> Vec<f64> {
        String::from_utf8_lossy(&o.stdout)
            .lines()
            .skip(2)
            .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
            .collect()
    };
    let (p, q) = (parse(&exact), parse(&occ));
    assert_eq!(p.len(), 13);
    let tv: f64 = p.iter().zip(&q).map(|(a, b)| (a - b).abs()).sum::<f64>() / 2.0;
    assert!(tv < 0.01, "{tv}");
}
