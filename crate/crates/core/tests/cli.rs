//! CLI behavior: exit codes, stage isolation on artifacts, fixture
//! regeneration, and the config environment variable.

use std::path::{Path, PathBuf};
use std::process::Command;

fn pvota() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pvota"))
}

fn fixtures_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

#[test]
fn analyze_exit_codes_encode_the_cause() {
    let dir = fixtures_dir();
    for (case, code) in [(1, 10), (2, 20), (3, 30), (4, 30)] {
        let out = pvota()
            .args(["analyze", "--case"])
            .arg(dir.join(format!("case{case}")))
            .output()
            .expect("spawn");
        assert_eq!(out.status.code(), Some(code), "case {case}: {:?}", out);
    }
}

#[test]
fn analyze_prints_cause_and_sequence() {
    let out = pvota()
        .args(["analyze", "--case"])
        .arg(fixtures_dir().join("case3"))
        .output()
        .expect("spawn");
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("cause: MemoryCorruption"));
    assert!(stdout.contains("E1->E2->E6->E7->E11->E13->E15"));
    assert!(stdout.contains("GPTN6"));
}

#[test]
fn graph_subcommand_writes_dot_with_sources_and_sink() {
    let tmp = tempfile::tempdir().unwrap();
    let dot = tmp.path().join("out.dot");
    let out = pvota()
        .args(["graph", "--source"])
        .arg(fixtures_dir().join("program.der"))
        .args([
            "--p-vars",
            "equipment_p_meas,equipment_q_meas",
            "--dot",
        ])
        .arg(&dot)
        .output()
        .expect("spawn");
    assert!(out.status.success(), "{:?}", out);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("2 sources"));
    assert!(stdout.contains("1 sinks"));
    let text = std::fs::read_to_string(&dot).unwrap();
    assert!(text.contains("GridAPPSD(username, password)"));
    assert!(text.contains("conn.send(input_topic, message)"));
}

#[test]
fn stage_isolation_chain_reaches_the_same_verdict() {
    let tmp = tempfile::tempdir().unwrap();
    let full = tmp.path().join("full.json");
    let pruned = tmp.path().join("pruned.json");
    let matches = tmp.path().join("matches.json");
    let verdict = tmp.path().join("verdict.json");
    let fdir = fixtures_dir();

    let run = |args: &mut Command| {
        let out = args.output().expect("spawn");
        (out.status.code(), String::from_utf8_lossy(&out.stdout).into_owned())
    };
    let (code, _) = run(pvota()
        .args(["graph", "--config"])
        .arg(fdir.join("config.json"))
        .arg("--json")
        .arg(&full));
    assert_eq!(code, Some(0));
    let (code, stdout) = run(pvota()
        .args(["prune", "--graph"])
        .arg(&full)
        .arg("--json")
        .arg(&pruned));
    assert_eq!(code, Some(0));
    assert!(stdout.contains("57 -> 41"));
    let (code, _) = run(pvota()
        .args(["match", "--graph"])
        .arg(&pruned)
        .args(["--config"])
        .arg(fdir.join("config.json"))
        .arg("--field")
        .arg(fdir.join("case4/field.csv"))
        .arg("--network")
        .arg(fdir.join("case4/network.csv"))
        .arg("--applog")
        .arg(fdir.join("case4/app.log"))
        .arg("--events")
        .arg(fdir.join("case4/events.csv"))
        .arg("--json")
        .arg(&matches));
    assert_eq!(code, Some(0));
    let (code, stdout) = run(pvota()
        .args(["classify", "--matches"])
        .arg(&matches)
        .arg("--json")
        .arg(&verdict));
    assert_eq!(code, Some(30));
    assert!(stdout.contains("MemoryCorruption"));
    let text = std::fs::read_to_string(&verdict).unwrap();
    assert!(text.contains("Gptn5"));
}

#[test]
fn gen_fixture_same_seed_is_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [a.path(), b.path()] {
        let out = pvota()
            .args(["gen-fixture", "--seed", "7", "--out"])
            .arg(dir)
            .output()
            .expect("spawn");
        assert!(out.status.success());
    }
    for rel in ["baseline.csv", "program.der", "case1/app.log", "case3/events.csv"] {
        let x = std::fs::read(a.path().join(rel)).unwrap();
        let y = std::fs::read(b.path().join(rel)).unwrap();
        assert_eq!(x, y, "{rel} differs across identical seeds");
    }
}

#[test]
fn config_env_var_is_honored() {
    let tmp = tempfile::tempdir().unwrap();
    let out_json = tmp.path().join("v.json");
    let out = pvota()
        .env("PVOTA_CONFIG", fixtures_dir().join("config.json"))
        .args(["analyze"])
        .arg("--field")
        .arg(fixtures_dir().join("case1/field.csv"))
        .arg("--network")
        .arg(fixtures_dir().join("case1/network.csv"))
        .arg("--applog")
        .arg(fixtures_dir().join("case1/app.log"))
        .arg("--events")
        .arg(fixtures_dir().join("case1/events.csv"))
        .arg("--json")
        .arg(&out_json)
        .output()
        .expect("spawn");
    assert_eq!(out.status.code(), Some(10), "{:?}", out);
    assert!(out_json.exists());
}

#[test]
fn analyst_path_override_forces_the_reverse_branch() {
    // case 1 with the reverse branch forced: reverse_value is benign-high
    // there (consistent with the fault), so the verdict stays SystemFault,
    // but the selected paths now contain reverse_value
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("artifacts");
    let out = pvota()
        .args(["analyze", "--case"])
        .arg(fixtures_dir().join("case1"))
        .args(["--path", "reverse_value", "--out"])
        .arg(&out_dir)
        .output()
        .expect("spawn");
    assert_eq!(out.status.code(), Some(10), "{:?}", out);
    let matches = std::fs::read_to_string(out_dir.join("matches.json")).unwrap();
    let ledger: serde_json::Value = serde_json::from_str(&matches).unwrap();
    let locals = ledger["locals"].as_array().unwrap();
    assert!(locals
        .iter()
        .any(|l| l["label"] == "reverse_value"));
    assert!(!locals.iter().any(|l| l["label"] == "forward_value"));
}

#[test]
fn bad_inputs_fail_with_errors() {
    let out = pvota()
        .args(["analyze", "--case", "/nonexistent"])
        .output()
        .expect("spawn");
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}
