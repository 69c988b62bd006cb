mod common;

use hivspill::integrate::IntegratorConfig;
use hivspill::model::{dfe, incidence, Variant};
use hivspill::ngm::{build_ngm, rc_closed_basic, rc_numeric};
use hivspill::scenario::presets;
use hivspill::sobol::{build_grid, fit_pce, sobol_indices, Rule, UncertainInput, DEFAULT_NODE_CAP};
use hivspill::spillover::{integrate_with_spillover, SpilloverForm};
use hivspill::{integrate, StateVec};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn basic_spec() -> hivspill::ModelSpec {
    presets::georgia_basic().0
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rc_decreases_with_prep(j in 0usize..3, lo in 0.0f64..0.9, step in 0.01f64..0.1) {
        let spec = basic_spec();
        let a = rc_numeric(&build_ngm(&spec.with_epsilon(j, lo)).unwrap()).value;
        let b = rc_numeric(&build_ngm(&spec.with_epsilon(j, lo + step)).unwrap()).value;
        prop_assert!(b <= a * (1.0 + 1e-12), "eps {lo} -> {}: {a} -> {b}", lo + step);
    }

    #[test]
    fn g_mm_decreases_with_removal(d in 0.0f64..0.5, step in 0.001f64..0.1) {
        let g = |delta: f64| {
            let mut s = basic_spec();
            s.groups[0].delta = delta;
            rc_closed_basic(&build_ngm(&s).unwrap()).unwrap().components["G_msm_msm"]
        };
        prop_assert!(g(d + step) < g(d));
    }

    #[test]
    fn incidence_is_nonnegative(
        fr in prop::collection::vec((0.3f64..1.0, 0.0f64..0.5), 3),
        eps in prop::collection::vec(0.0f64..1.0, 3),
    ) {
        let mut spec = basic_spec();
        spec.mixing = Some(spec.priors);
        for (g, e) in spec.groups.iter_mut().zip(&eps) {
            g.epsilon = *e;
        }
        let e = dfe(&spec);
        let s = e.s.iter().zip(&fr).map(|(n, (p, q))| n * p * (1.0 - q)).collect();
        let i = e.s.iter().zip(&fr).map(|(n, (p, q))| n * p * q).collect();
        let inc = incidence(&spec, &StateVec::new(s, i)).unwrap();
        prop_assert!(inc.iter().all(|v| *v >= 0.0 && v.is_finite()));
    }

    #[test]
    fn sobol_indices_are_bounded(c in prop::collection::vec(-2.0f64..2.0, 6)) {
        let inputs: Vec<_> = (0..3).map(|k| UncertainInput::new(format!("x{k}"), 0.0, 1.0)).collect();
        let g = build_grid(&inputs, Rule::GaussLegendreTensor, 3, DEFAULT_NODE_CAP).unwrap();
        let y: Vec<f64> = g
            .nodes
            .iter()
            .map(|x| c[0] * x[0] + c[1] * x[1] * x[1] + c[2] * x[0] * x[2] + c[3] * x[1] * x[2] + c[4] * x[2] + c[5])
            .collect();
        let s = sobol_indices(&fit_pce(&y, &g, 2).unwrap());
        prop_assume!(s.defined);
        let sum: f64 = s.first_order.iter().sum();
        prop_assert!(sum <= 1.0 + 1e-12);
        for (f, t) in s.first_order.iter().zip(&s.total) {
            prop_assert!(*f >= -1e-12 && *f <= t + 1e-12 && *t <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn additive_functions_have_no_interactions(c in prop::collection::vec(0.1f64..3.0, 3)) {
        let inputs: Vec<_> = (0..3).map(|k| UncertainInput::new(format!("x{k}"), -1.0, 2.0)).collect();
        let g = build_grid(&inputs, Rule::ClenshawCurtisSmolyak, 4, DEFAULT_NODE_CAP).unwrap();
        let y: Vec<f64> = g.nodes.iter().map(|x| c[0] * x[0] + c[1] * x[1] * x[1] + c[2] * x[2]).collect();
        let s = sobol_indices(&fit_pce(&y, &g, 2).unwrap());
        let sum: f64 = s.first_order.iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-10);
        for (f, t) in s.first_order.iter().zip(&s.total) {
            prop_assert!((f - t).abs() < 1e-10);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn states_stay_nonnegative(seed in any::<u64>(), frac in prop::collection::vec(0.0f64..0.6, 3)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut spec = common::random_spec(Variant::Basic, &mut rng);
        spec.mixing.get_or_insert(spec.priors);
        let e = dfe(&spec);
        let s = e.s.iter().zip(&frac).map(|(n, f)| n * (1.0 - f)).collect();
        let i = e.s.iter().zip(&frac).map(|(n, f)| n * f).collect();
        let traj = integrate(&spec, &StateVec::new(s, i), &IntegratorConfig::adaptive(0.0, 20.0)).unwrap();
        prop_assert!(traj.clamp_events.is_empty());
        prop_assert!(traj.states.iter().flatten().all(|v| *v >= 0.0));
    }

    #[test]
    fn non_source_sensitivities_cancel(k in 0usize..3, eps in prop::collection::vec(0.0f64..0.5, 3)) {
        let mut spec = basic_spec();
        for (g, e) in spec.groups.iter_mut().zip(&eps) {
            g.delta = 0.0;
            g.epsilon = *e;
        }
        let (_, y0) = presets::georgia_basic();
        let id = spec.variant.groups().nth(k).unwrap();
        let (_, sens) = integrate_with_spillover(
            &spec, &y0, &[id], SpilloverForm::Structural, &IntegratorConfig::adaptive(2017.0, 2022.0),
        ).unwrap();
        for i in 0..sens.times.len() {
            for j in (0..3).filter(|j| *j != k) {
                let (s, g) = (sens.sigma(i, k, j), sens.gamma(i, k, j));
                prop_assert!((s + g).abs() <= 1e-9 * s.abs().max(g.abs()));
            }
        }
    }
}

#[test]
fn populations_follow_demography_without_removal() {
    let mut spec = basic_spec();
    for g in &mut spec.groups {
        g.delta = 0.0;
    }
    let (_, y0) = presets::georgia_basic();
    let traj = integrate(&spec, &y0, &IntegratorConfig::adaptive(2017.0, 2027.0)).unwrap();
    let n0 = y0.populations();
    for (t, y) in traj.times.iter().zip(&traj.states) {
        let s = StateVec::from_flat(y, 3);
        for (j, n) in s.populations().iter().enumerate() {
            let pi_mu = spec.groups[j].pi / spec.mu;
            let exact = pi_mu + (n0[j] - pi_mu) * (-spec.mu * (t - 2017.0)).exp();
            assert!((n - exact).abs() < 1e-6 * exact, "t={t} group {j}: {n} vs {exact}");
        }
    }
}

#[test]
fn prep_reduces_incidence_everywhere() {
    let (spec, y0) = presets::georgia_basic();
    let cfg = IntegratorConfig::adaptive(2017.0, 2031.0);
    let base = integrate(&spec, &y0, &cfg).unwrap().last_state();
    let more = integrate(&spec.with_epsilon(0, 0.3), &y0, &cfg).unwrap().last_state();
    for j in 0..3 {
        assert!(more.c[j] <= base.c[j]);
    }
}
