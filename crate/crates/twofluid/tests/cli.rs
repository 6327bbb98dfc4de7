use std::fs;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_twofluid"))
}

#[test]
fn unknown_subcommand_exits_with_usage_code() {
    let st = bin().arg("frobnicate").output().unwrap();
    assert_eq!(st.status.code(), Some(2));
}

#[test]
fn convolve_reports_regions() {
    let dir = tempfile::tempdir().unwrap();
    let st = bin()
        .args(["convolve", "--case", "K4", "--t", "16", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(st.status.code(), Some(0), "{}", String::from_utf8_lossy(&st.stderr));
    let v: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("convolve_K4.json")).unwrap()).unwrap();
    assert_eq!(v["schema"], 1);
    let regions = v["report"]["c_est_by_region"].as_array().unwrap();
    assert!(!regions.is_empty());
    assert!(regions.iter().all(|r| r["C_est"].as_f64().unwrap().is_finite()));
    assert_eq!(v["report"]["samples"].as_array().unwrap().len(), 8);
}

#[test]
fn greens_writes_kernel_and_envelope() {
    let dir = tempfile::tempdir().unwrap();
    let st = bin()
        .args(["greens", "--entry", "2,2", "--t-list", "1,10", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(st.status.code(), Some(0), "{}", String::from_utf8_lossy(&st.stderr));
    let csv = fs::read_to_string(dir.path().join("greens_G22.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("r,t,value"));
    let v: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("greens_G22.json")).unwrap()).unwrap();
    assert_eq!(v["report"]["pass"], true);
}

#[test]
fn linear_simulation_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let run = || {
        let st = bin()
            .args([
                "simulate", "--mode", "linear", "--grid", "16", "--box", "24", "--eps", "1e-3",
                "--t-final", "4", "--width", "3", "--checkpoints", "2", "--out",
            ])
            .arg(dir.path())
            .output()
            .unwrap();
        assert_eq!(st.status.code(), Some(0), "{}", String::from_utf8_lossy(&st.stderr));
        (
            fs::read(dir.path().join("diagnostics.csv")).unwrap(),
            fs::read(dir.path().join("state.bin")).unwrap(),
        )
    };
    let a = run();
    let b = run();
    assert_eq!(a, b);
    let text = String::from_utf8(a.0).unwrap();
    assert!(text.starts_with("t,mass_p,mass_m,momentum,"));
    let (n, l, t, fields) = twofluid::sim::read_state_dump(&dir.path().join("state.bin")).unwrap();
    assert_eq!((n, l, t), (16, 24.0, 4.0));
    assert_eq!(fields.len(), 8);
}

#[test]
fn simulation_past_wrap_horizon_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let st = bin()
        .args(["simulate", "--t-final", "100", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(st.status.code(), Some(2));
}
