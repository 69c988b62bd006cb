use hivspill::integrate::{annual_series, IntegratorConfig};
use hivspill::ngm::{build_ngm, rc_numeric, NgMatrices};
use hivspill::scenario::presets;
use hivspill::sobol::{clenshaw_curtis, gauss_legendre};
use hivspill::{integrate, Variant};

/// Perron root of `F V^-1` by power iteration; the matrix is non-negative.
fn power_iteration(ngm: &NgMatrices) -> f64 {
    let n = ngm.v.len();
    let k: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| ngm.f[i][j] / ngm.v[j]).collect()).collect();
    let mut x = vec![1.0; n];
    let mut rho = 0.0;
    for _ in 0..10_000 {
        let y: Vec<f64> = (0..n).map(|i| (0..n).map(|j| k[i][j] * x[j]).sum()).collect();
        let norm = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if norm == 0.0 {
            return 0.0;
        }
        let next = norm / x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        x = y.iter().map(|v| v / norm).collect();
        if (next - rho).abs() < 1e-15 * next {
            return next;
        }
        rho = next;
    }
    rho
}

#[test]
fn georgia_basic_reproduction_number() {
    let ngm = build_ngm(&presets::georgia_basic().0).unwrap();
    let oracle = power_iteration(&ngm);
    assert!((oracle - 2.641241440601186).abs() < 1e-9);
    assert!((rc_numeric(&ngm).value - oracle).abs() < 1e-10 * oracle);
}

#[test]
fn georgia_risk_reproduction_number_with_pinned_mixing() {
    let ngm = build_ngm(&presets::georgia_risk_pinned()).unwrap();
    let oracle = power_iteration(&ngm);
    assert!((oracle - 2.329736884943361).abs() < 1e-9);
    assert!((rc_numeric(&ngm).value - oracle).abs() < 1e-10 * oracle);
}

#[test]
fn three_point_gauss_legendre() {
    let (x, w) = gauss_legendre(3);
    let r = (3.0f64 / 5.0).sqrt();
    for (a, b) in x.iter().zip([-r, 0.0, r]) {
        assert!((a - b).abs() < 1e-15);
    }
    for (a, b) in w.iter().zip([5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0]) {
        assert!((a - b).abs() < 1e-15);
    }
}

#[test]
fn clenshaw_curtis_level_two_is_simpson() {
    let (x, w) = clenshaw_curtis(2);
    assert_eq!(x.len(), 3);
    for (a, b) in w.iter().zip([1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0]) {
        assert!((a - b).abs() < 1e-15);
    }
}

#[test]
fn annual_incidence_sums_to_cumulative() {
    let (spec, y0) = presets::georgia(Variant::Basic);
    let traj = integrate(&spec, &y0, &IntegratorConfig::adaptive(2017.0, 2031.0)).unwrap();
    let ann = annual_series(&traj).unwrap();
    let total = ann.window_sum(2017, 2030).unwrap();
    let last = traj.last_state();
    for (t, c) in total.iter().zip(&last.c) {
        assert!((t - c).abs() < 1e-6 * c);
    }
}
