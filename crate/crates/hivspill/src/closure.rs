//! Contact-balance closure for the mixing fractions.
//!
//! Contact rates stay fixed; only the fractions move. The basic model has a
//! unique solution; the risk model has one free parameter (`xi_hetm`) which is
//! chosen to minimise the squared distance to the priors.

use crate::error::{Error, Result};
use crate::model::{MixingFractions, Variant};

pub fn close(variant: Variant, n: &[f64], a: &[f64], priors: &MixingFractions) -> Result<MixingFractions> {
    match variant {
        Variant::Basic => close_basic(n, a, priors),
        Variant::Risk => close_risk(n, a, priors),
    }
}

fn check_inputs(n: &[f64], a: &[f64], len: usize) -> Result<()> {
    if n.len() != len || a.len() != len {
        return Err(Error::InvalidArgument(format!("closure needs {len} groups")));
    }
    for (j, (nj, aj)) in n.iter().zip(a).enumerate() {
        if !(*nj > 0.0 && *aj > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "closure needs N > 0 and a > 0 (group {j}: N = {nj}, a = {aj})"
            )));
        }
    }
    Ok(())
}

fn infeasible(name: &str, value: f64) -> Error {
    Error::InfeasibleClosure {
        name: name.to_string(),
        value,
        at_time: None,
    }
}

/// Exact elimination; the priors only matter through the variant check.
pub fn close_basic(n: &[f64], a: &[f64], priors: &MixingFractions) -> Result<MixingFractions> {
    if priors.variant() != Variant::Basic {
        return Err(Error::InvalidArgument("basic closure needs basic priors".into()));
    }
    check_inputs(n, a, 3)?;
    let c: Vec<f64> = n.iter().zip(a).map(|(n, a)| n * a).collect();
    let alpha_hetf = 1.0 - c[2] / c[1];
    if !(0.0..=1.0).contains(&alpha_hetf) {
        return Err(infeasible("alpha_hetf", alpha_hetf));
    }
    let eta_msm = 1.0 - alpha_hetf * c[1] / c[0];
    if !(0.0..=1.0).contains(&eta_msm) {
        return Err(infeasible("eta_msm", eta_msm));
    }
    Ok(MixingFractions::Basic {
        eta_msm,
        alpha_hetf,
    })
}

/// Fractions `[eta_msm, eta_hetfh, alpha_hetfh, alpha_hetfl, xi_hetm]` on the
/// feasible line, as `p + q * xi`.
pub fn risk_line(n: &[f64], a: &[f64]) -> ([f64; 5], [f64; 5]) {
    let c: Vec<f64> = n.iter().zip(a).map(|(n, a)| n * a).collect();
    let (cm, ch, cl, ct) = (c[0], c[1], c[2], c[3]);
    let p = [1.0 - (ch + cl - ct) / cm, ch / cm, 1.0, 1.0 - ct / cl, 0.0];
    let q = [0.0, -ct / cm, -ct / ch, ct / cl, 1.0];
    (p, q)
}

/// Sub-interval of `xi_hetm` keeping every fraction in `[0, 1]`.
pub fn risk_feasible_interval(p: &[f64; 5], q: &[f64; 5]) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for (pi, qi) in p.iter().zip(q) {
        if *qi == 0.0 {
            continue;
        }
        let (b0, b1) = ((0.0 - pi) / qi, (1.0 - pi) / qi);
        lo = lo.max(b0.min(b1));
        hi = hi.min(b0.max(b1));
    }
    (lo, hi)
}

pub fn close_risk(n: &[f64], a: &[f64], priors: &MixingFractions) -> Result<MixingFractions> {
    if priors.variant() != Variant::Risk {
        return Err(Error::InvalidArgument("risk closure needs risk priors".into()));
    }
    check_inputs(n, a, 4)?;
    let (p, q) = risk_line(n, a);
    if !(0.0..=1.0).contains(&p[0]) {
        return Err(infeasible("eta_msm", p[0]));
    }
    let (lo, hi) = risk_feasible_interval(&p, &q);
    if lo > hi {
        return Err(infeasible("xi_hetm (empty feasible interval)", lo));
    }
    let prior = priors.to_vec();
    let num: f64 = (0..5).map(|i| q[i] * (p[i] - prior[i])).sum();
    let den: f64 = q.iter().map(|v| v * v).sum();
    let xi = (-num / den).clamp(lo, hi);
    let mut x = [0.0; 5];
    for i in 0..5 {
        x[i] = (p[i] + q[i] * xi).clamp(0.0, 1.0);
    }
    // xi itself is exact; the clamp above only removes round-off at the ends.
    x[4] = xi;
    MixingFractions::from_slice(Variant::Risk, &x)
}

/// Quadratic distance to the priors.
pub fn objective(mix: &MixingFractions, priors: &MixingFractions) -> f64 {
    mix.to_vec()
        .iter()
        .zip(priors.to_vec())
        .map(|(x, p)| (x - p).powi(2))
        .sum()
}

/// Relative residuals of the contact-balance equations.
pub fn residuals(n: &[f64], a: &[f64], mix: &MixingFractions) -> Vec<f64> {
    let c: Vec<f64> = n.iter().zip(a).map(|(n, a)| n * a).collect();
    let rel = |lhs: f64, rhs: f64| (lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(f64::MIN_POSITIVE);
    match *mix {
        MixingFractions::Basic {
            eta_msm,
            alpha_hetf,
        } => vec![
            rel(c[0] * (1.0 - eta_msm), c[1] * alpha_hetf),
            rel(c[2], c[1] * (1.0 - alpha_hetf)),
        ],
        MixingFractions::Risk {
            eta_msm,
            eta_hetfh,
            alpha_hetfh,
            alpha_hetfl,
            xi_hetm,
        } => vec![
            rel(c[0] * eta_hetfh, c[1] * alpha_hetfh),
            rel(c[0] * (1.0 - eta_msm - eta_hetfh), c[2] * alpha_hetfl),
            rel(c[3] * xi_hetm, c[1] * (1.0 - alpha_hetfh)),
            rel(c[3] * (1.0 - xi_hetm), c[2] * (1.0 - alpha_hetfl)),
        ],
    }
}

/// Remembers the last closure, keyed on the exact bits of `N`.
#[derive(Debug, Default, Clone)]
pub struct ClosureCache {
    key: Vec<u64>,
    value: Option<MixingFractions>,
    pub hits: u64,
    pub misses: u64,
}

impl ClosureCache {
    pub fn get_or_close(
        &mut self,
        variant: Variant,
        n: &[f64],
        a: &[f64],
        priors: &MixingFractions,
    ) -> Result<MixingFractions> {
        let same = self.value.is_some()
            && self.key.len() == n.len()
            && self.key.iter().zip(n).all(|(k, v)| *k == v.to_bits());
        if same {
            self.hits += 1;
            return Ok(self.value.unwrap());
        }
        self.misses += 1;
        let m = close(variant, n, a, priors)?;
        self.key = n.iter().map(|v| v.to_bits()).collect();
        self.value = Some(m);
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::presets;
    use approx::assert_relative_eq;

    fn basic_priors() -> MixingFractions {
        MixingFractions::Basic {
            eta_msm: 0.858,
            alpha_hetf: 0.02,
        }
    }

    #[test]
    fn georgia_basic_closure() {
        let n = [165_418.0, 3_274_801.0, 3_145_939.0];
        let a = [94.7, 47.3, 48.5];
        let m = close_basic(&n, &a, &basic_priors()).unwrap();
        let v = m.to_vec();
        assert_relative_eq!(v[1], 0.01498, epsilon = 1e-5);
        assert_relative_eq!(v[0], 0.8519, epsilon = 1e-4);
        assert!(residuals(&n, &a, &m).iter().all(|r| *r < 1e-12));
    }

    #[test]
    fn equal_products_consume_all_hetf_contacts() {
        let m = close_basic(
            &[2.0, 2.0, 2.0],
            &[3.0, 3.0, 3.0],
            &MixingFractions::Basic {
                eta_msm: 0.5,
                alpha_hetf: 0.5,
            },
        )
        .unwrap();
        assert_eq!(m.to_vec(), vec![1.0, 0.0]);
    }

    #[test]
    fn basic_infeasible_when_hetm_contacts_exceed_hetf() {
        let e = close_basic(&[1e5, 1e6, 2e6], &[90.0, 47.0, 48.0], &basic_priors()).unwrap_err();
        match e {
            Error::InfeasibleClosure { name, value, .. } => {
                assert_eq!(name, "alpha_hetf");
                assert!(value < 0.0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn georgia_risk_closure_matches_grid_search() {
        let (spec, y0) = presets::georgia_risk();
        let n = y0.populations();
        let a = spec.contact_rates();
        let m = close_risk(&n, &a, &spec.priors).unwrap();
        assert!(residuals(&n, &a, &m).iter().all(|r| *r < 1e-12), "{:?}", residuals(&n, &a, &m));
        let (p, q) = risk_line(&n, &a);
        let (lo, hi) = risk_feasible_interval(&p, &q);
        let best = objective(&m, &spec.priors);
        let steps = ((hi - lo) / 1e-6).ceil() as usize;
        let mut grid_best = f64::INFINITY;
        let prior = spec.priors.to_vec();
        for s in 0..=steps {
            let xi = (lo + s as f64 * 1e-6).min(hi);
            let f: f64 = (0..5).map(|i| (p[i] + q[i] * xi - prior[i]).powi(2)).sum();
            grid_best = grid_best.min(f);
        }
        assert!(best <= grid_best + 1e-12);
    }

    #[test]
    fn feasible_priors_are_fixed_points() {
        let (spec, y0) = presets::georgia_risk();
        let n = y0.populations();
        let a = spec.contact_rates();
        let once = close_risk(&n, &a, &spec.priors).unwrap();
        let twice = close_risk(&n, &a, &once).unwrap();
        for (x, y) in once.to_vec().iter().zip(twice.to_vec()) {
            assert!((x - y).abs() < 1e-14);
        }
        assert!(objective(&twice, &once) < 1e-28);
    }

    #[test]
    fn cache_returns_same_value() {
        let (spec, y0) = presets::georgia_basic();
        let n = y0.populations();
        let a = spec.contact_rates();
        let mut cache = ClosureCache::default();
        let m1 = cache.get_or_close(Variant::Basic, &n, &a, &spec.priors).unwrap();
        let m2 = cache.get_or_close(Variant::Basic, &n, &a, &spec.priors).unwrap();
        assert_eq!(m1, m2);
        assert_eq!((cache.hits, cache.misses), (1, 1));
    }
}
