//! Integration tests for the `sfe-lab` binary: exit-code contract, report
//! determinism, and corpus file round-trips.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sfe-lab"))
}

fn corpus(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../corpus").join(name)
}

fn run(args: &[&str]) -> Output {
    let mut cmd = bin();
    for a in args {
        if let Some(name) = a.strip_prefix("corpus:") {
            cmd.arg(corpus(name));
        } else {
            cmd.arg(a);
        }
    }
    cmd.output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

#[test]
fn decompose_exit_codes() {
    assert_eq!(code(&run(&["decompose", "corpus:max.fn"])), 0);
    assert_eq!(code(&run(&["decompose", "corpus:weave.fn"])), 2);
    assert_eq!(code(&run(&["decompose", "corpus:does-not-exist.fn"])), 1);
}

#[test]
fn malformed_json_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.fn");
    std::fs::write(&bad, "{ not json").unwrap();
    let out = bin().arg("decompose").arg(&bad).output().unwrap();
    assert_eq!(code(&out), 1);
    assert!(!out.stderr.is_empty(), "must explain the parse failure");
}

#[test]
fn classify_verdicts() {
    let out = run(&["classify", "corpus:max.fn"]);
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stdout).contains("PerfectPlainModel"));
    let out = run(&["classify", "corpus:spiral.fn"]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("NeitherKnownModel"));
}

#[test]
fn synthesize_round_trips_and_matches_the_shipped_file() {
    let out = run(&["synthesize", "corpus:max.fn"]);
    assert_eq!(code(&out), 0);
    let shipped = std::fs::read_to_string(corpus("max-plain.sfe")).unwrap();
    assert_eq!(String::from_utf8_lossy(&out.stdout), shipped);
    assert_eq!(code(&run(&["synthesize", "corpus:or.fn"])), 2);
}

#[test]
fn security_verdict_exit_codes() {
    assert_eq!(
        code(&run(&["security", "corpus:max.fn", "corpus:max-plain.sfe"])),
        0
    );
    assert_eq!(
        code(&run(&["security", "corpus:spiral.fn", "corpus:leaky.sfe"])),
        2
    );
}

#[test]
fn eve_audit_contrast() {
    assert_eq!(
        code(&run(&[
            "eve-audit", "corpus:shared-nonce.sfe", "--function", "corpus:or.fn",
            "--eve-eps", "1/8",
        ])),
        0
    );
    let out = run(&[
        "eve-audit", "corpus:shared-nonce.sfe", "--function", "corpus:or.fn",
        "--eve-eps", "1/8", "--no-eve",
    ]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stdout).contains("\"1/1\""));
}

#[test]
fn frontier_checks_hold_on_the_leaky_pair() {
    let out = run(&["frontier", "corpus:spiral.fn", "corpus:leaky.sfe"]);
    assert_eq!(code(&out), 0);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["holds"], serde_json::json!(true));
}

#[test]
fn attack_exit_codes_and_pinned_advantage() {
    let out = run(&["attack", "corpus:spiral.fn", "corpus:leaky.sfe"]);
    assert_eq!(code(&out), 0);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["message_distinguisher"]["advantage"], serde_json::json!("1/1"));

    // Hypothesis violation without --force; advantage 0 with it.
    assert_eq!(
        code(&run(&["attack", "corpus:max.fn", "corpus:max-plain.sfe"])),
        3
    );
    let out = run(&["attack", "corpus:max.fn", "corpus:max-plain.sfe", "--force"]);
    assert_eq!(code(&out), 0);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["message_distinguisher"]["advantage"], serde_json::json!("0/1"));
    assert_eq!(v["curious_explorer"]["advantage"], serde_json::json!("0/1"));
}

#[test]
fn reports_are_byte_identical_across_runs_and_thread_caps() {
    let args = ["frontier", "corpus:spiral.fn", "corpus:leaky.sfe"];
    let a = run(&args);
    let b = run(&args);
    assert_eq!(a.stdout, b.stdout);
    let mut cmd = bin();
    cmd.args(["frontier"])
        .arg(corpus("spiral.fn"))
        .arg(corpus("leaky.sfe"))
        .env("SFE_LAB_THREADS", "7");
    let c = cmd.output().unwrap();
    assert_eq!(a.stdout, c.stdout);
}

#[test]
fn thread_cap_must_be_a_positive_integer() {
    for bad in ["0", "-2", "many"] {
        let mut cmd = bin();
        cmd.args(["classify"]).arg(corpus("or.fn")).env("SFE_LAB_THREADS", bad);
        assert_eq!(code(&cmd.output().unwrap()), 1, "SFE_LAB_THREADS={bad}");
    }
}

#[test]
fn corpus_files_round_trip() {
    for name in ["or.fn", "spiral.fn", "weave.fn", "max.fn"] {
        let text = std::fs::read_to_string(corpus(name)).unwrap();
        let f = sfe_core::func::FunctionTable::from_json(&text).unwrap();
        let again = sfe_core::func::FunctionTable::from_json(&f.to_json()).unwrap();
        assert_eq!(f, again, "{name}");
    }
    for name in ["leaky.sfe", "masked-leak.sfe", "shared-nonce.sfe", "max-plain.sfe"] {
        let text = std::fs::read_to_string(corpus(name)).unwrap();
        let spec = sfe_core::dsl::parse(&text).unwrap();
        let again = sfe_core::dsl::parse(&sfe_core::dsl::print(&spec)).unwrap();
        assert_eq!(spec, again, "{name}");
    }
}

#[test]
fn simulate_sample_mode_is_seeded_and_correct() {
    let args = [
        "simulate", "corpus:leaky.sfe", "--function", "corpus:spiral.fn",
        "--mode", "sample", "--samples", "64", "--x", "1", "--y", "2", "--seed", "5",
    ];
    let a = run(&args);
    assert_eq!(code(&a), 0);
    let v: serde_json::Value = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(v["announced_output_counts"], serde_json::json!({ "2": 64 }));
    assert_eq!(run(&args).stdout, a.stdout);
}
