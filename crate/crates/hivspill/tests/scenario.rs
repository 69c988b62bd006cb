use hivspill::model::Variant;
use hivspill::scenario::config::{parse_config, ScenarioConfig};
use hivspill::scenario::plots::{emit_plot_data, Figure, PlotInputs};
use hivspill::scenario::{run_scenarios, write_run};
use hivspill::Error;

fn quiet(mut cfg: ScenarioConfig) -> ScenarioConfig {
    cfg.outputs.trajectories = false;
    cfg
}

#[test]
fn prevented_matches_incidence_difference() {
    let cfg = quiet(ScenarioConfig::preset(Variant::Basic));
    let run = run_scenarios(&cfg).unwrap();
    let base = &run.report.baseline.incidence;
    for s in &run.report.scenarios {
        let p = s.prevented.as_ref().unwrap();
        for j in 0..3 {
            assert!((base[j] - s.incidence[j] - p[j]).abs() < 1e-9);
        }
        assert!(s.prevented_total.unwrap() > 0.0, "{}", s.label);
    }
}

#[test]
fn more_persons_prevent_more() {
    let run = run_scenarios(&quiet(ScenarioConfig::preset(Variant::Risk))).unwrap();
    for chunk in run.report.scenarios.chunks(3) {
        let t: Vec<f64> = chunk.iter().map(|s| s.prevented_total.unwrap()).collect();
        assert!(t[0] < t[1] && t[1] < t[2], "{:?}", t);
    }
}

#[test]
fn recompute_mode_tracks_persons() {
    let text = r#"{
        "model": "basic",
        "recompute_epsilon": true,
        "interventions": [{"group": "msm", "additional_persons": 10000}],
        "outputs": {"trajectories": false}
    }"#;
    let fixed = r#"{
        "model": "basic",
        "interventions": [{"group": "msm", "additional_persons": 10000}],
        "outputs": {"trajectories": false}
    }"#;
    let a = run_scenarios(&parse_config(text).unwrap()).unwrap();
    let b = run_scenarios(&parse_config(fixed).unwrap()).unwrap();
    let (pa, pb) = (a.report.scenarios[0].prevented_total.unwrap(), b.report.scenarios[0].prevented_total.unwrap());
    assert!(pa > 0.0 && pb > 0.0);
    assert!(pa != pb);
    assert!(a.config.hash != b.config.hash);
}

#[test]
fn overrides_change_the_hash_and_results() {
    let base = parse_config(r#"{"model": "basic", "outputs": {"trajectories": false}}"#).unwrap();
    let over = parse_config(
        r#"{"model": "basic", "overrides": {"probs": {"beta_mm": 0.0004}}, "outputs": {"trajectories": false}}"#,
    )
    .unwrap();
    assert_ne!(base.hash, over.hash);
    let a = run_scenarios(&base).unwrap().report.baseline.total;
    let b = run_scenarios(&over).unwrap().report.baseline.total;
    assert!(b < a);
}

#[test]
fn risk_dfe_closure_names_the_fraction() {
    let cfg = ScenarioConfig::preset(Variant::Risk);
    match hivspill::ngm::build_ngm(&cfg.spec) {
        Err(Error::InfeasibleClosure { name, value, .. }) => {
            assert_eq!(name, "eta_msm");
            assert!(value > 1.0);
        }
        other => panic!("expected an infeasible closure, got {other:?}"),
    }
}

#[test]
fn written_report_lists_files() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ScenarioConfig::preset(Variant::Basic);
    cfg.interventions.truncate(1);
    cfg.outputs.nnt_pairs = vec![("hetm".into(), "hetf".into())];
    let run = run_scenarios(&cfg).unwrap();
    let report = write_run(&run, dir.path()).unwrap();
    for f in &report.files {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    assert!(report.files.iter().any(|f| f == "nnt.csv"));
}

#[test]
fn plots_need_their_series() {
    let dir = tempfile::tempdir().unwrap();
    let err = emit_plot_data(&PlotInputs::default(), &[Figure::Sobol], dir.path()).unwrap_err();
    assert!(matches!(err, Error::MissingSeries(_)));
}

#[test]
fn nnt_curves_are_finite_for_direct_effects() {
    let mut cfg = quiet(ScenarioConfig::preset(Variant::Basic));
    cfg.interventions.clear();
    cfg.outputs.nnt_pairs = vec![("msm".into(), "msm".into())];
    let run = run_scenarios(&cfg).unwrap();
    assert_eq!(run.nnt.len(), 10);
    let mut prev = 0.0;
    for r in &run.nnt {
        assert!(r.defined && r.nnt_simple.is_finite() && r.nnt_integral.is_finite());
        assert!(r.horizon > prev);
        prev = r.horizon;
    }
}
