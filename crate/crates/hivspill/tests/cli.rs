use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hivspill"))
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn run(args: &[&str], out: &Path) -> Output {
    bin().args(args).arg("--out").arg(out).output().expect("spawn hivspill")
}

fn json(o: &Output) -> serde_json::Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&o.stdout)))
}

#[test]
fn simulate_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("basic_spillover.json");
    let o = run(&["simulate", "--json", "--config", cfg.to_str().unwrap()], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = json(&o);
    assert_eq!(report["model"], "basic");
    assert_eq!(report["scenarios"].as_array().unwrap().len(), 2);
    for f in ["incidence.csv", "spillover.csv", "nnt.csv", "report.json", "trajectory_msm_10k.csv"] {
        assert!(dir.path().join(f).exists(), "{f} missing");
    }
    let nnt = std::fs::read_to_string(dir.path().join("nnt.csv")).unwrap();
    assert_eq!(nnt.lines().count(), 1 + 3 * 10);
}

#[test]
fn simulate_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = config("basic_spillover.json");
    for d in [&a, &b] {
        assert!(run(&["simulate", "--config", cfg.to_str().unwrap()], d.path()).status.success());
    }
    for f in ["report.json", "incidence.csv", "spillover.csv"] {
        let x = std::fs::read(a.path().join(f)).unwrap();
        let y = std::fs::read(b.path().join(f)).unwrap();
        assert_eq!(x, y, "{f} differs between runs");
    }
}

#[test]
fn bad_config_reports_key_path() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(
        &path,
        r#"{"model": "basic", "interventions": [{"group": "msm", "additional_persons": "many"}]}"#,
    )
    .unwrap();
    let o = run(&["simulate", "--config", path.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("interventions[0].additional_persons"), "{err}");
}

#[test]
fn unknown_group_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["nnt", "--pairs", "pwid:msm"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("pwid"));
}

#[test]
fn ngm_closed_form_matches_numeric() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["ngm", "--json"], dir.path());
    assert!(o.status.success());
    let v = json(&o);
    let num = v["rc_numeric"].as_f64().unwrap();
    let closed = v["rc_closed_form"]["value"].as_f64().unwrap();
    assert!((num - closed).abs() < 1e-9 * num);
    assert!(dir.path().join("ngm.json").exists());
}

#[test]
fn risk_ngm_needs_pinned_mixing() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["ngm", "--model", "risk"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--pin-mixing"));
    let o = run(&["ngm", "--model", "risk", "--pin-mixing", "--json"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(json(&o)["rc_closed_form"]["method"], "closed_form");
}

#[test]
fn validate_exit_code_reflects_tables() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["validate", "--model", "basic"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    assert!(dir.path().join("validate_basic.csv").exists());
    let o = run(&["validate", "--model", "risk"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn emit_plots_blanks_undefined_nnt() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["emit-plots", "--figures", "prevalence,spillover,nnt"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["prevalence.csv", "spillover_per_person.csv", "nnt_curves.csv", "nnt_curves.notes.txt"] {
        assert!(dir.path().join(f).exists(), "{f} missing");
    }
    let csv = std::fs::read_to_string(dir.path().join("nnt_curves.csv")).unwrap();
    assert!(csv.lines().next().unwrap().contains("msm__msm"));
}

#[test]
fn spillover_command_lists_all_pairs() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["spillover", "--json", "--sources", "msm"], dir.path());
    assert!(o.status.success());
    let rows = json(&o);
    assert_eq!(rows.as_array().unwrap().len(), 3);
    assert!(rows[1]["averted_per_person"].as_f64().unwrap() > 0.0);
}
