use std::path::PathBuf;
use std::process::{Command, Output};

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

fn goiqc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_goiqc")).args(args).output().expect("the binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn check_prints_the_type() {
    let o = goiqc(&["check", data("coin.lq").to_str().unwrap()]);
    assert!(o.status.success());
    assert_eq!(stdout(&o), "ok: bit\n");
}

#[test]
fn syntax_and_type_errors_exit_one() {
    let dir = std::env::temp_dir().join(format!("goiqc-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let bad_syntax = dir.join("syntax.lq");
    std::fs::write(&bad_syntax, "(\\x. x").unwrap();
    let nonlinear = dir.join("dup.lq");
    std::fs::write(&nonlinear, "context x : qbit; CNOT (x, x)").unwrap();
    for f in [bad_syntax, nonlinear] {
        let o = goiqc(&["check", f.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(1));
        assert!(!o.stderr.is_empty());
    }
}

#[test]
fn analyze_ruw_reports_deadlock() {
    let o = goiqc(&["analyze", data("ruw.lq").to_str().unwrap()]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert!(out.starts_with("digraph"));
    assert!(out.trim_end().ends_with("synchronous: DEADLOCK (cycle: 1→2→1)"), "{out}");
}

#[test]
fn sync_only_compile_of_ruw_fails() {
    let o = goiqc(&["compile", "--mode", "sync-only", data("ruw.lq").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("deadlock"));
}

#[test]
fn verify_bell_within_tolerance() {
    let o = goiqc(&["verify", "--format", "json", data("bell.lq").to_str().unwrap()]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(v["report"]["verification"]["max_trace_distance"].as_f64().unwrap() <= 1e-9);
    assert_eq!(v["report"]["typing"], "ok: qbit * qbit");
}

#[test]
fn compile_and_report_are_deterministic() {
    for args in [vec!["compile", "--mode", "async", "--eliminate-ite"], vec!["verify", "--format", "json", "--eliminate-ite"]] {
        let f = data("ruw_applied.lq");
        let mut a = args.clone();
        a.push(f.to_str().unwrap());
        let (x, y) = (goiqc(&a), goiqc(&a));
        assert!(x.status.success());
        assert_eq!(x.stdout, y.stdout);
    }
}

#[test]
fn simulate_applies_a_compiled_circuit() {
    let dir = std::env::temp_dir().join(format!("goiqc-sim-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let qc = dir.join("coin.qc");
    let o = goiqc(&["compile", data("coin.lq").to_str().unwrap()]);
    std::fs::write(&qc, &o.stdout).unwrap();
    let state = dir.join("unit.json");
    std::fs::write(&state, r#"{"bits":[],"qbits":[],"blocks":[[[1,0]]]}"#).unwrap();
    let o = goiqc(&["simulate", qc.to_str().unwrap(), state.to_str().unwrap()]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["bits"], serde_json::json!(["l1"]));
    for b in 0..2 {
        assert!((v["blocks"][b][0][0].as_f64().unwrap() - 0.5).abs() < 1e-12);
    }
}

#[test]
fn verify_dir_reports_each_file() {
    let o = goiqc(&["verify", "--format", "json", "--dir", data("").to_str().unwrap()]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let entries = v.as_array().unwrap();
    assert_eq!(entries.len(), std::fs::read_dir(data("")).unwrap().count());
    // function-typed programs have no distribution to compare
    assert_eq!(o.status.code(), Some(1));
    let passed = entries.iter().filter(|e| e["report"]["verification"]["passed"] == true).count();
    assert_eq!(passed, 4);
}
