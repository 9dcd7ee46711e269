use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_factorlab"))
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn report(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn averaging_solve_gives_unit_weights() {
    let dir = tempfile::tempdir().unwrap();
    let (out, cert) = (dir.path().join("s.json"), dir.path().join("c.json"));
    let o = run(&[
        "solve",
        "--instance",
        s(&fixture("averaging.json")),
        "--out",
        s(&out),
        "--certificate-out",
        s(&cert),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&out);
    assert_eq!(r["outcome"], "certified");
    assert_eq!(r["report"]["constant"], 1.0);
    for phi in r["report"]["certificate"]["phi"].as_array().unwrap() {
        for v in phi.as_array().unwrap() {
            assert!((v.as_f64().unwrap() - 1.0).abs() <= 1e-8);
        }
    }
    let v = run(&["verify", "--instance", s(&fixture("averaging.json")), "--certificate", s(&cert)]);
    assert_eq!(code(&v), 0);
}

#[test]
fn shrunken_certificate_fails_verification() {
    let dir = tempfile::tempdir().unwrap();
    let cert = dir.path().join("c.json");
    std::fs::write(&cert, r#"{"phi": [[0.5], [0.5]], "constant": 1.0}"#).unwrap();
    let o = run(&["verify", "--instance", s(&fixture("averaging.json")), "--certificate", s(&cert)]);
    assert_eq!(code(&o), 3);
}

#[test]
fn beyond_range_gallery_exhausts_budget() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("g.json");
    let g = run(&["gallery", "--kind", "beyond-range", "--n", "2048", "--emit", s(&inst)]);
    assert_eq!(code(&g), 0);
    let out = dir.path().join("s.json");
    let o = run(&["solve", "--instance", s(&inst), "--probe", "--out", s(&out)]);
    assert_eq!(code(&o), 2);
    let r = report(&out);
    assert_eq!(r["outcome"], "budget-exhausted");
    assert!(r["report"]["cap"].as_f64().unwrap() > 1024.0);
    // without --probe the exponents are refused outright
    let refused = run(&["solve", "--instance", s(&inst)]);
    assert_eq!(code(&refused), 1);
    assert!(String::from_utf8_lossy(&refused.stderr).contains("p_j <= r_j"));
}

#[test]
fn in_range_gallery_agrees() {
    let o = run(&["gallery", "--kind", "in-range", "--n", "512", "--solve"]);
    assert_eq!(code(&o), 0);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["outcome"], "agrees");
    assert_eq!(v["report"]["verdict"], "feasible");
}

#[test]
fn rs_check_passes() {
    assert_eq!(code(&run(&["rs", "--m", "3", "--check"])), 0);
}

#[test]
fn ftp_table() {
    let o = run(&["ftp", "--r", "2", "--p", "1", "--M", "10"]);
    assert_eq!(code(&o), 0);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["report"]["rows"].as_array().unwrap().len(), 7);
    assert_eq!(code(&run(&["ftp", "--r", "3", "--p", "1", "--M", "10"])), 1);
}

#[test]
fn khintchine_csv() {
    let o = run(&["khintchine", "--a", "1,1", "--q", "1"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("subcommand,estimate,stderr,samples,seed,exact"));
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    let est: f64 = row[1].parse().unwrap();
    assert!((est - 0.5f64.sqrt()).abs() < 1e-12);
}

#[test]
fn reductions() {
    let d = run(&["duality", "--instance", s(&fixture("duality.json")), "--weight", "1,2"]);
    assert_eq!(code(&d), 0, "{}", String::from_utf8_lossy(&d.stderr));
    let m = run(&["maurey", "--instance", s(&fixture("maurey.json"))]);
    assert_eq!(code(&m), 0, "{}", String::from_utf8_lossy(&m.stderr));
    // q < 1 has no duality reduction
    let bad = run(&["duality", "--instance", s(&fixture("maurey.json")), "--weight", "1,1"]);
    assert_eq!(code(&bad), 1);
}

#[test]
fn every_report_validates() {
    let dir = tempfile::tempdir().unwrap();
    let inst = s(&fixture("averaging.json")).to_string();
    let cert = dir.path().join("c.json");
    std::fs::write(&cert, r#"{"phi": [[1.0], [1.0]], "constant": 1.0}"#).unwrap();
    let duality = s(&fixture("duality.json")).to_string();
    let maurey = s(&fixture("maurey.json")).to_string();
    let runs: Vec<Vec<&str>> = vec![
        vec!["solve", "--instance", &inst],
        vec!["verify", "--instance", &inst, "--certificate", s(&cert)],
        vec!["duality", "--instance", &duality, "--weight", "1,2"],
        vec!["maurey", "--instance", &maurey],
        vec!["constant", "--instance", &inst, "--budget", "2000"],
        vec!["khintchine", "--a", "1,-2,0.5", "--q", "3"],
        vec!["stable", "--p", "1.5", "--q", "1", "--a", "1,2", "--samples", "2000"],
        vec!["type", "--r", "inf", "--p", "2", "--dim", "2", "--N", "3", "--tuples", "4"],
        vec!["rs", "--m", "4"],
        vec!["ftp", "--r", "1.5", "--p", "1.5", "--M", "8"],
        vec!["gallery", "--kind", "homogeneity", "--n", "16"],
    ];
    for (k, args) in runs.iter().enumerate() {
        let out = dir.path().join(format!("r{k}"));
        let mut a = args.clone();
        a.extend(["--out", s(&out)]);
        let o = run(&a);
        assert_eq!(code(&o), 0, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        let v = run(&["--validate-report", s(&out)]);
        assert_eq!(code(&v), 0, "{args:?}: {}", String::from_utf8_lossy(&v.stderr));
        assert!(String::from_utf8_lossy(&v.stdout).contains(args[0]));
    }
    std::fs::write(dir.path().join("bad"), r#"{"subcommand": "solve", "outcome": "x", "report": {}}"#).unwrap();
    assert_eq!(code(&run(&["--validate-report", s(&dir.path().join("bad"))])), 1);
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&run(&["solve", "--nope"])), 1);
    assert_eq!(code(&run(&["frobnicate"])), 1);
    assert_eq!(code(&run(&[])), 1);
    assert_eq!(code(&run(&["--help"])), 0);
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(
        &bad,
        r#"{"measure_x": [1.0], "operators": [{"matrix": [[1.0]], "measure_y": [1.0], "positive": true}],
            "exponents": {"gamma": [1.0], "p": [2.0], "r": [2.0]}}"#,
    )
    .unwrap();
    let o = run(&["solve", "--instance", s(&bad)]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("homogeneity"));
}

#[test]
fn manifest_reruns_bit_for_bit() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, m) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("m.json"));
    let o = run(&[
        "stable", "--p", "1", "--q", "0.5", "--a", "1,3", "--samples", "20000", "--seed", "7", "--out", s(&a),
        "--manifest", s(&m),
    ]);
    assert_eq!(code(&o), 0);
    let manifest = report(&m);
    assert_eq!(manifest["subcommand"], "stable");
    assert_eq!(manifest["seed"], 7);
    assert_eq!(manifest["exit_code"], 0);
    let r = run(&["rerun", "--from", s(&m), "--out", s(&b)]);
    assert_eq!(code(&r), 0);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn thread_count_does_not_change_results() {
    let args = ["stable", "--p", "1.5", "--q", "1", "--a", "1,2,3", "--samples", "30000", "--seed", "3"];
    let one = bin().args(args).env("FACTORLAB_THREADS", "1").output().unwrap();
    let four = bin().args(args).env("FACTORLAB_THREADS", "4").output().unwrap();
    assert_eq!(one.stdout, four.stdout);
    let inst = fixture("averaging.json");
    let solve = ["constant", "--instance", s(&inst), "--budget", "8000"];
    let one = bin().args(solve).env("FACTORLAB_THREADS", "1").output().unwrap();
    let four = bin().args(solve).env("FACTORLAB_THREADS", "4").output().unwrap();
    assert_eq!(one.stdout, four.stdout);
}
