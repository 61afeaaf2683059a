use std::path::Path;
use std::process::Command;

fn droopsec() -> Command {
    Command::new(env!("CARGO_BIN_EXE_droopsec"))
}

fn short_scenario(dir: &Path, edit: impl FnOnce(&mut String)) -> std::path::PathBuf {
    let out = droopsec().args(["preset", "case1"]).output().unwrap();
    assert!(out.status.success());
    let mut text = String::from_utf8(out.stdout).unwrap();
    text = text.replace("\"duration_s\": 34.0", "\"duration_s\": 1.0");
    text = text.replace("\"enable_s\": 4.5", "\"enable_s\": 0.2");
    edit(&mut text);
    let path = dir.join("scenario.json");
    std::fs::write(&path, text).unwrap();
    path
}

fn trim_events(text: &mut String) {
    let start = text.find("\"load_events\"").unwrap();
    let end = start + text[start..].find(']').unwrap() + 1;
    text.replace_range(
        start..end,
        "\"load_events\": [{\"t_s\": 0.0, \"p_kw\": 1000.0, \"q_kvar\": 750.0}]",
    );
}

#[test]
fn runs_a_scenario_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = short_scenario(dir.path(), trim_events);
    let csv = dir.path().join("out.csv");
    let status = droopsec()
        .args(["run", "--scenario"])
        .arg(&path)
        .arg("--out")
        .arg(&csv)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let text = std::fs::read_to_string(&csv).unwrap();
    let body: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert!(body[0].starts_with("t,ibr_id,P_w,Q_var,V_volt"));
    assert_eq!(body.len(), 1 + 21 * 10);
}

#[test]
fn invalid_scenario_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let path = short_scenario(dir.path(), |t| {
        trim_events(t);
        *t = t.replace("\"gamma\": 0.01", "\"gamma\": -1.0");
    });
    let out = droopsec()
        .args(["run", "--scenario"])
        .arg(&path)
        .arg("--out")
        .arg(dir.path().join("out.csv"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("gamma"));
}

#[test]
fn missing_file_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let status = droopsec()
        .args(["run", "--scenario", "/nonexistent/case.json", "--out"])
        .arg(dir.path().join("out.csv"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn plant_failure_writes_partial_log() {
    let dir = tempfile::tempdir().unwrap();
    let path = short_scenario(dir.path(), |t| {
        let start = t.find("\"load_events\"").unwrap();
        let end = start + t[start..].find(']').unwrap() + 1;
        t.replace_range(
            start..end,
            "\"load_events\": [{\"t_s\": 0.0, \"p_kw\": 1000.0, \"q_kvar\": 750.0}, {\"t_s\": 0.5, \"p_kw\": 1e7, \"q_kvar\": 1e7}]",
        );
    });
    let csv = dir.path().join("out.csv");
    let status = droopsec()
        .args(["run", "--scenario"])
        .arg(&path)
        .arg("--out")
        .arg(&csv)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(3));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(
        text.lines().filter(|l| !l.starts_with('#')).count(),
        1 + 10 * 10
    );
}

#[test]
fn round_cap_exits_with_consensus_code() {
    let dir = tempfile::tempdir().unwrap();
    let path = short_scenario(dir.path(), trim_events);
    let status = droopsec()
        .args(["run", "--scenario"])
        .arg(&path)
        .args(["--max-rounds", "3", "--out"])
        .arg(dir.path().join("out.csv"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(4));
}

#[test]
fn preset_dump_round_trips_through_run() {
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("case3.json");
    assert!(droopsec()
        .args(["preset", "case3", "--out"])
        .arg(&json)
        .status()
        .unwrap()
        .success());
    let text = std::fs::read_to_string(&json).unwrap();
    assert!(text.contains("\"mode\": \"regulate_v\""));
}

#[test]
fn unknown_preset_is_rejected() {
    let out = droopsec().args(["preset", "case9"]).output().unwrap();
    assert!(!out.status.success());
}
