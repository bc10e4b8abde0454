use std::process::Command;

fn brw_lab() -> Command {
    Command::new(env!("CARGO_BIN_EXE_brw-lab"))
}

#[test]
fn run_writes_manifest_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("lln.toml");
    std::fs::write(&cfg, "scenario = \"lln\"\nreplicates = 30\nn_grid = [4, 6]\n").unwrap();
    let digests = |out: &std::path::Path| {
        let st = brw_lab()
            .args(["run", "--config", cfg.to_str().unwrap(), "--seed", "5", "--out", out.to_str().unwrap()])
            .status()
            .unwrap();
        assert_eq!(st.code(), Some(0));
        let m: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("manifest.json")).unwrap()).unwrap();
        assert_eq!(m["config"]["master_seed"], 5);
        m["files"].clone()
    };
    assert_eq!(digests(&dir.path().join("a")), digests(&dir.path().join("b")));
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "scenario = \"lln\"\nreplicates = 0\n").unwrap();
    let st = brw_lab().args(["run", "--config", cfg.to_str().unwrap()]).status().unwrap();
    assert_eq!(st.code(), Some(2));
    std::fs::write(&cfg, "scenario = \"lln\"\nno_such_key = 1\n").unwrap();
    assert_eq!(brw_lab().args(["run", "--config", cfg.to_str().unwrap()]).status().unwrap().code(), Some(2));
    assert_eq!(brw_lab().args(["run"]).status().unwrap().code(), Some(2));
}

#[test]
fn population_cap_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cap.toml");
    std::fs::write(&cfg, "scenario = \"lln\"\nreplicates = 2\nn_grid = [10]\npopulation_cap = 100\n").unwrap();
    let out = dir.path().join("out");
    let st = brw_lab().args(["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]).status().unwrap();
    assert_eq!(st.code(), Some(3));
}

#[test]
fn suite_writes_verdict_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = brw_lab()
        .args(["--threads", "2", "suite", "--level", "smoke", "--criterion", "10", "--criterion", "11", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("criterion 10") && stdout.contains("PASS"));
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("verdicts.json")).unwrap()).unwrap();
    assert_eq!(v["verdicts"].as_array().unwrap().len(), 2);
}

#[test]
fn failing_criterion_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let st = brw_lab().args(["suite", "--criterion", "12", "--out"]).arg(dir.path()).status().unwrap();
    assert_eq!(st.code(), Some(1));
}

#[test]
fn oracle_prints_big_jump_table() {
    let out = brw_lab().args(["oracle", "--n", "2", "--x", "20,40", "--half-width", "80"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("n,x,lower,upper,reference_value,ratio,resolved_flag"));
    assert_eq!(lines.count(), 2);
}

#[test]
fn report_data_writes_cdf_table_and_schema() {
    let dir = tempfile::tempdir().unwrap();
    let st = brw_lab().args(["report-data", "--scenario", "sub-law", "--out"]).arg(dir.path()).status().unwrap();
    assert_eq!(st.code(), Some(0));
    let table = std::fs::read_to_string(dir.path().join("cdf_table.csv")).unwrap();
    assert!(table.starts_with("x,F_V,F_G,F_H23,F_G23\n"));
    assert!(dir.path().join("schema.json").exists());
}
