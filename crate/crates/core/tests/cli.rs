use std::path::Path;
use std::process::Command;

const BIN: &str = env!("CARGO_BIN_EXE_bubble-hjb");

fn config(name: &str) -> String {
    format!("{}/configs/{name}", env!("CARGO_MANIFEST_DIR"))
}

fn run(args: &[&str]) -> std::process::Output {
    Command::new(BIN).args(args).output().unwrap()
}

#[test]
fn solve_writes_field_and_report() {
    let out = tempfile::tempdir().unwrap();
    let o = out.path().to_str().unwrap();
    let res = run(&[
        "solve",
        "--config",
        &config("zero_only.cfg"),
        "--out",
        o,
        "--n",
        "257",
    ]);
    assert_eq!(
        res.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    let csv = std::fs::read_to_string(out.path().join("solution.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("x,value"));
    assert_eq!(lines.count(), 257);
    let report = std::fs::read_to_string(out.path().join("solve.jsonl")).unwrap();
    for line in report.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["pass"], true);
    }
}

#[test]
fn scenario_emits_allocation_with_undefined_ends() {
    let out = tempfile::tempdir().unwrap();
    let res = run(&[
        "scenario",
        "--config",
        &config("real_estate.cfg"),
        "--out",
        out.path().to_str().unwrap(),
    ]);
    assert_eq!(
        res.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    let csv = std::fs::read_to_string(out.path().join("allocation.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "x,u,theta_star,demand");
    assert!(rows[1].ends_with("undefined,undefined"));
    assert!(rows.last().unwrap().ends_with("undefined,undefined"));
    assert!(Path::new(&out.path().join("threshold.csv")).exists());
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.cfg");
    std::fs::write(&bad, "[problem]\nnu = -1\n").unwrap();
    let res = run(&["solve", "--config", bad.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));
    assert!(res.stdout.is_empty());
    assert!(String::from_utf8_lossy(&res.stderr).contains("nu"));

    let res = run(&[
        "solve",
        "--config",
        dir.path().join("missing.cfg").to_str().unwrap(),
    ]);
    assert_ne!(res.status.code(), Some(0));
}

#[test]
fn same_seed_gives_identical_branch_output() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        let res = run(&[
            "branch",
            "--config",
            &config("branch_demo.cfg"),
            "--out",
            d.path().to_str().unwrap(),
            "--n",
            "257",
        ]);
        assert_eq!(
            res.status.code(),
            Some(0),
            "{}",
            String::from_utf8_lossy(&res.stderr)
        );
    }
    for name in ["branch.csv", "branch.svg", "matched.csv", "branch.jsonl"] {
        let x = std::fs::read(a.path().join(name)).unwrap();
        let y = std::fs::read(b.path().join(name)).unwrap();
        assert_eq!(x, y, "{name} differs");
    }
}
