//! Next-generation matrices, control reproduction numbers and stability probes.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrate::{solve, IntegratorConfig, Method};
use crate::model::{dfe, lambda_vectors, ModelSpec, ModelSystem, StateVec, Variant};

/// `F` (new infections) and the diagonal of `V` (removal) at the DFE.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NgMatrices {
    pub variant: Variant,
    pub f: Vec<Vec<f64>>,
    pub v: Vec<f64>,
    /// DFE populations `Pi_j / mu`.
    pub populations: Vec<f64>,
}

impl NgMatrices {
    pub fn n(&self) -> usize {
        self.v.len()
    }

    /// `F V^{-1}` as a dense matrix.
    pub fn product(&self) -> DMatrix<f64> {
        let n = self.n();
        DMatrix::from_fn(n, n, |j, p| self.f[j][p] / self.v[p])
    }
}

pub fn build_ngm(spec: &ModelSpec) -> Result<NgMatrices> {
    spec.validate()?;
    let e = dfe(spec);
    let pops = e.populations();
    let mix = spec.mixing_at(&pops, None)?;
    let lam = lambda_vectors(spec, &pops, &mix)?;
    let n = spec.n_groups();
    let f = (0..n)
        .map(|j| {
            let eps = spec.groups[j].epsilon;
            (0..n)
                .map(|p| (1.0 - eps) * lam.row(j)[2 * p + 1] * e.s[j])
                .collect()
        })
        .collect();
    let v = spec.groups.iter().map(|g| spec.mu + g.delta).collect();
    Ok(NgMatrices {
        variant: spec.variant,
        f,
        v,
        populations: pops,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RcMethod {
    ClosedForm,
    Numeric,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReproductionNumber {
    pub value: f64,
    pub method: RcMethod,
    pub components: BTreeMap<String, f64>,
    /// Set when the closed form could not be evaluated reliably and the
    /// numeric value was returned instead.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

pub fn rc_numeric(ngm: &NgMatrices) -> ReproductionNumber {
    let m = ngm.product();
    let value = if m.iter().all(|v| *v == 0.0) {
        0.0
    } else {
        m.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
    };
    ReproductionNumber {
        value,
        method: RcMethod::Numeric,
        components: BTreeMap::new(),
        diagnostic: None,
    }
}

const IMAG_TOL: f64 = 1e-9;
const RESIDUAL_TOL: f64 = 1e-6;

/// Relative residual of a real polynomial (coefficients highest first) at `z`.
fn poly_residual(coeffs: &[f64], z: Complex64) -> f64 {
    let mut val = Complex64::new(0.0, 0.0);
    let mut mag = 0.0;
    for c in coeffs {
        val = val * z + c;
        mag = mag * z.norm() + c.abs();
    }
    if mag == 0.0 {
        0.0
    } else {
        val.norm() / mag
    }
}

/// Picks the spectral radius from closed-form root candidates, one candidate
/// set per root branch (principal branch first).
fn select_branch(
    branches: &[Vec<Complex64>],
    poly: &[f64],
) -> std::result::Result<(usize, f64), String> {
    let mut best: Option<(usize, f64)> = None;
    for (b, roots) in branches.iter().enumerate() {
        let worst = roots
            .iter()
            .map(|z| if z.is_finite() { poly_residual(poly, *z) } else { f64::INFINITY })
            .fold(0.0, f64::max);
        if !(worst <= RESIDUAL_TOL) {
            continue;
        }
        let scale = roots.iter().map(|z| z.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        let real: Vec<f64> = roots
            .iter()
            .filter(|z| z.im.abs() <= IMAG_TOL * scale)
            .map(|z| z.re)
            .collect();
        if let Some(r) = real.into_iter().reduce(f64::max) {
            best = Some((b, r.max(0.0)));
            break;
        }
    }
    best.ok_or_else(|| "no root branch satisfies the characteristic polynomial".to_string())
}

fn degrade(ngm: &NgMatrices, components: BTreeMap<String, f64>, msg: String) -> ReproductionNumber {
    log::warn!("closed-form reproduction number rejected: {msg}");
    let mut r = rc_numeric(ngm);
    r.components = components;
    r.diagnostic = Some(format!("closed form mismatch: {msg}"));
    r
}

fn finish(
    ngm: &NgMatrices,
    mut components: BTreeMap<String, f64>,
    branches: Vec<Vec<Complex64>>,
    poly: &[f64],
) -> ReproductionNumber {
    match select_branch(&branches, poly) {
        Ok((b, value)) => {
            for (i, z) in branches[b].iter().enumerate() {
                components.insert(format!("root_{}_re", i + 1), z.re);
                components.insert(format!("root_{}_im", i + 1), z.im);
            }
            components.insert("branch".into(), b as f64);
            let numeric = rc_numeric(ngm).value;
            let rel = (value - numeric).abs() / numeric.abs().max(f64::MIN_POSITIVE);
            if numeric == 0.0 && value.abs() < 1e-14 || rel < 1e-9 {
                ReproductionNumber {
                    value,
                    method: RcMethod::ClosedForm,
                    components,
                    diagnostic: None,
                }
            } else {
                degrade(ngm, components, format!("closed {value} vs numeric {numeric}"))
            }
        }
        Err(msg) => degrade(ngm, components, msg),
    }
}

fn zero_rc(components: BTreeMap<String, f64>) -> ReproductionNumber {
    ReproductionNumber {
        value: 0.0,
        method: RcMethod::ClosedForm,
        components,
        diagnostic: None,
    }
}

/// Cube roots of `z`, principal first.
fn cube_roots(z: Complex64) -> [Complex64; 3] {
    let r = z.powf(1.0 / 3.0);
    let w = Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI / 3.0);
    [r, r * w, r * w * w]
}

pub fn rc_closed_basic(ngm: &NgMatrices) -> Result<ReproductionNumber> {
    if ngm.variant != Variant::Basic {
        return Err(Error::UnsupportedVariant(ngm.variant.to_string()));
    }
    let f = &ngm.f;
    let k = &ngm.v;
    let (nm, nf, nh) = (ngm.populations[0], ngm.populations[1], ngm.populations[2]);
    let g_mm = f[0][0] / k[0];
    let g_fm = f[0][1] * nf / (k[1] * nm);
    let g_mf = f[1][0] * nm / (k[0] * nf);
    let g_hf = f[1][2] * nh / (k[2] * nf);
    let g_fh = f[2][1] * nf / (k[1] * nh);
    let g2 = (g_mm / 3.0).powi(2) + (g_fm * g_mf + g_hf * g_fh) / 3.0;
    let g3 = g_mm * (g_mf * g_fm / 6.0 - g_hf * g_fh / 3.0);
    let g4 = (g_mm / 3.0).powi(3);
    let inner = Complex64::new((g4 + g3).powi(2) - g2.powi(3), 0.0).sqrt() + g4 + g3;
    let mut components = BTreeMap::from([
        ("G_msm_msm".to_string(), g_mm),
        ("G_hetf_msm".to_string(), g_fm),
        ("G_msm_hetf".to_string(), g_mf),
        ("G_hetm_hetf".to_string(), g_hf),
        ("G_hetf_hetm".to_string(), g_fh),
        ("G2".to_string(), g2),
        ("G3".to_string(), g3),
        ("G4".to_string(), g4),
    ]);
    if inner.norm() == 0.0 {
        // G1 = 0 only when every coupling vanishes; the cubic is then lambda^2 (lambda - Gmm).
        components.insert("G1_re".into(), 0.0);
        components.insert("G1_im".into(), 0.0);
        return Ok(if g_mm == 0.0 && g2 == 0.0 {
            zero_rc(components)
        } else {
            degrade(ngm, components, "G1 vanishes".into())
        });
    }
    let branches: Vec<Vec<Complex64>> = cube_roots(inner)
        .iter()
        .map(|g1| {
            let w = Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI / 3.0);
            [*g1, g1 * w, g1 * w * w]
                .iter()
                .map(|r| g2 / r + r + g_mm / 3.0)
                .collect()
        })
        .collect();
    let g1 = cube_roots(inner)[0];
    components.insert("G1_re".into(), g1.re);
    components.insert("G1_im".into(), g1.im);
    // lambda^3 - Gmm lambda^2 - (Gfm Gmf + Ghf Gfh) lambda + Gmm Ghf Gfh
    let poly = [1.0, -g_mm, -(g_fm * g_mf + g_hf * g_fh), g_mm * g_hf * g_fh];
    Ok(finish(ngm, components, branches, &poly))
}

pub fn rc_closed_risk(ngm: &NgMatrices) -> Result<ReproductionNumber> {
    if ngm.variant != Variant::Risk {
        return Err(Error::UnsupportedVariant(ngm.variant.to_string()));
    }
    let f = &ngm.f;
    let (k1, k2, k3, k4) = (ngm.v[0], ngm.v[1], ngm.v[2], ngm.v[3]);
    let (f11, f12, f13) = (f[0][0], f[0][1], f[0][2]);
    let (f21, f24, f31, f34) = (f[1][0], f[1][3], f[2][0], f[2][3]);
    let (f42, f43) = (f[3][1], f[3][2]);
    let p = k1 * k2 * k3 * k4;
    let h11 = f12 * f21 * f34 * f43 + f13 * f24 * f31 * f42 - f12 * f24 * f31 * f43 - f13 * f21 * f34 * f42;
    let h12 = k3 * k4 * f12 * f21 + k2 * k4 * f13 * f31 + k1 * k3 * f24 * f42 + k1 * k2 * f34 * f43;
    let h13 = k3 * f11 * f24 * f42 + k2 * f11 * f34 * f43;
    let q = k2 * k3 * k4;
    let h8 = 3.0 * f11.powi(4) / (256.0 * k1.powi(4)) + f11.powi(2) * h12 / (16.0 * k1.powi(3) * q)
        - f11 * h13 / (4.0 * k1.powi(2) * q)
        - h11 / p;
    let h9 = 3.0 * f11.powi(2) / (8.0 * k1.powi(2)) + h12 / p;
    let h10 = f11.powi(3) / (8.0 * k1.powi(3)) + f11 * h12 / (2.0 * k1.powi(2) * q) - h13 / p;
    let mut components = BTreeMap::from([
        ("H8".to_string(), h8),
        ("H9".to_string(), h9),
        ("H10".to_string(), h10),
        ("H11".to_string(), h11),
        ("H12".to_string(), h12),
        ("H13".to_string(), h13),
    ]);
    let b = f11 / (4.0 * k1);
    if f.iter().flatten().all(|v| *v == 0.0) {
        return Ok(zero_rc(components));
    }
    let c = |x: f64| Complex64::new(x, 0.0);
    let h7 = (c(256.0 * h8.powi(3) + 128.0 * h8.powi(2) * h9.powi(2) + 27.0 * h10.powi(4)
        + 16.0 * h8 * h9.powi(4)
        - 144.0 * h8 * h9 * h10.powi(2)
        - 4.0 * h9.powi(3) * h10.powi(2)))
    .sqrt();
    let h6 = h7 * (3f64.sqrt() / 18.0) + h10.powi(2) / 2.0 - 4.0 * h8 * h9 / 3.0 - h9.powi(3) / 27.0;
    let h4 = 3.0 * 6f64.sqrt() * h10
        * (h7 * 3f64.powf(1.5) + 27.0 * h10.powi(2) - 2.0 * h9.powi(3) - 72.0 * h8 * h9).sqrt();
    components.insert("H7_re".into(), h7.re);
    components.insert("H7_im".into(), h7.im);
    components.insert("H6_re".into(), h6.re);
    components.insert("H6_im".into(), h6.im);
    components.insert("H4_re".into(), h4.re);
    components.insert("H4_im".into(), h4.im);
    let tail = 3.0 * f11 * h13 / (k1.powi(2) * q) + 12.0 * h11 / p - 9.0 * f11.powi(4) / (64.0 * k1.powi(4))
        - 3.0 * f11.powi(2) * h12 / (4.0 * k1.powi(3) * q);
    let mut branches = Vec::new();
    let mut principal = None;
    for c6 in cube_roots(h6) {
        let h5 = h9.powi(2) + c6 * c6 * 9.0 + c6 * (6.0 * h9) + tail;
        let s5 = h5.sqrt();
        let den = s5.sqrt() * c6.sqrt() * 6.0;
        let common = s5 * (12.0 * h8) + s5 * c6 * (12.0 * h9) - s5 * h9.powi(2) - s5 * c6 * c6 * 9.0;
        let h1 = (common - h4).sqrt() / den;
        let h2 = (common + h4).sqrt() / den;
        let h3 = s5 / (c6.sqrt() * 6.0);
        if principal.is_none() {
            principal = Some((h1, h2, h3, h5));
        }
        branches.push(vec![b - h1 - h3, b + h1 - h3, b + h3 - h2, b + h2 + h3]);
    }
    if let Some((h1, h2, h3, h5)) = principal {
        for (name, z) in [("H1", h1), ("H2", h2), ("H3", h3), ("H5", h5)] {
            components.insert(format!("{name}_re"), z.re);
            components.insert(format!("{name}_im"), z.im);
        }
    }
    // Characteristic polynomial in lambda: (lambda - b)^4 - H9 (lambda - b)^2 - H10 (lambda - b) - H8,
    // expanded: lambda^4 - 4b lambda^3 + (6b^2 - H9) lambda^2 + (-4b^3 + 2 H9 b - H10) lambda
    //           + (b^4 - H9 b^2 + H10 b - H8).
    let poly = [
        1.0,
        -4.0 * b,
        6.0 * b * b - h9,
        -4.0 * b.powi(3) + 2.0 * h9 * b - h10,
        b.powi(4) - h9 * b * b + h10 * b - h8,
    ];
    Ok(finish(ngm, components, branches, &poly))
}

/// Closed form for the variant of `ngm`.
pub fn rc_closed(ngm: &NgMatrices) -> Result<ReproductionNumber> {
    match ngm.variant {
        Variant::Basic => rc_closed_basic(ngm),
        Variant::Risk => rc_closed_risk(ngm),
    }
}

/// Copy of `spec` with every transmission probability multiplied by `c`.
pub fn scale_betas(spec: &ModelSpec, c: f64) -> ModelSpec {
    let mut s = spec.clone();
    s.probs.beta_mm *= c;
    s.probs.beta_fm *= c;
    s.probs.beta_mf *= c;
    s
}

/// Rescales the transmission probabilities so that the numeric reproduction
/// number equals `target` (it is linear in a common multiplier).
pub fn tune_to(spec: &ModelSpec, target: f64) -> Result<ModelSpec> {
    let r = rc_numeric(&build_ngm(spec)?).value;
    if !(r > 0.0) {
        return Err(Error::InvalidArgument("reproduction number is zero; cannot rescale".into()));
    }
    let tuned = scale_betas(spec, target / r);
    tuned.validate()?;
    let check = rc_numeric(&build_ngm(&tuned)?).value;
    if (check - target).abs() > 1e-10 * target {
        return Err(Error::InvalidArgument(format!("rescaling reached {check}, not {target}")));
    }
    Ok(tuned)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub n_trials: usize,
    pub seed: u64,
    pub initial_horizon: f64,
    pub max_horizon: f64,
    pub decay_factor: f64,
    pub growth_factor: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            n_trials: 50,
            seed: 7,
            initial_horizon: 250.0,
            max_horizon: 20_000.0,
            decay_factor: 1e-3,
            growth_factor: 10.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeOutcome {
    Decay,
    Growth,
    Inconclusive,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProbeReport {
    pub r_hat: f64,
    pub outcome: ProbeOutcome,
    pub trials: usize,
    /// Largest `sum I(T) / sum I(0)` over the trials.
    pub max_ratio: f64,
    /// Longest horizon any trial needed.
    pub horizon: f64,
    /// Random draws discarded because the mixing closure was infeasible.
    pub rejected: usize,
}

fn probe_method() -> Method {
    Method::Rk45Adaptive {
        rtol: 1e-9,
        atol: 1e-9,
        dt_min: 1e-10,
        dt_max: 1.0,
    }
}

/// Integrates with horizon doubling until `done(ratio)` or the cap.
fn run_until(
    spec: &ModelSpec,
    y0: &StateVec,
    cfg: &ProbeConfig,
    done: impl Fn(f64) -> bool,
) -> Result<(f64, f64)> {
    let i0: f64 = y0.i.iter().sum();
    let mut y = y0.to_flat();
    let (mut t, mut h) = (0.0, cfg.initial_horizon);
    let mut sys = ModelSystem::new(spec);
    loop {
        let seg = IntegratorConfig {
            method: probe_method(),
            t0: t,
            t_end: t + h,
        };
        let sol = solve(&mut sys, &y, &seg)?;
        y = sol.states.last().expect("non-empty solution").clone();
        t += h;
        let ratio = (0..spec.n_groups()).map(|j| y[2 * j + 1]).sum::<f64>() / i0;
        if done(ratio) || t >= cfg.max_horizon {
            return Ok((ratio, t));
        }
        h = t.min(cfg.max_horizon - t);
    }
}

fn random_state(spec: &ModelSpec, rng: &mut ChaCha8Rng) -> StateVec {
    let e = dfe(spec);
    let (mut s, mut i) = (Vec::new(), Vec::new());
    for nstar in &e.s {
        let n = rng.gen_range(0.3..1.0) * nstar;
        let frac = rng.gen_range(0.001..0.3);
        s.push(n * (1.0 - frac));
        i.push(n * frac);
    }
    StateVec::new(s, i)
}

/// Numerical check of the threshold behaviour for a `delta = 0` model.
pub fn stability_probe(spec: &ModelSpec, cfg: &ProbeConfig) -> Result<ProbeReport> {
    if spec.groups.iter().any(|g| g.delta != 0.0) {
        return Err(Error::InvalidArgument("stability probe needs delta = 0 in every group".into()));
    }
    let r_hat = rc_numeric(&build_ngm(spec)?).value;
    if r_hat > 1.0 {
        let e = dfe(spec);
        let i: Vec<f64> = e.s.iter().map(|s| 1e-6 * s).collect();
        let s = e.s.iter().zip(&i).map(|(s, i)| s - i).collect();
        let (ratio, t) = run_until(spec, &StateVec::new(s, i), cfg, |r| r >= cfg.growth_factor)?;
        return Ok(ProbeReport {
            r_hat,
            outcome: if ratio >= cfg.growth_factor {
                ProbeOutcome::Growth
            } else {
                ProbeOutcome::Inconclusive
            },
            trials: 1,
            max_ratio: ratio,
            horizon: t,
            rejected: 0,
        });
    }
    let results: Vec<Result<(f64, f64, usize)>> = (0..cfg.n_trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(trial as u64));
            let mut rejected = 0;
            loop {
                let y0 = random_state(spec, &mut rng);
                match run_until(spec, &y0, cfg, |r| r < cfg.decay_factor) {
                    Ok((ratio, t)) => return Ok((ratio, t, rejected)),
                    Err(Error::InfeasibleClosure { .. }) if rejected < 1000 => rejected += 1,
                    Err(e) => return Err(e.context(format!("stability trial {trial}"))),
                }
            }
        })
        .collect();
    let mut max_ratio = 0.0f64;
    let mut horizon = 0.0f64;
    let mut rejected = 0;
    for r in results {
        let (ratio, t, rej) = r?;
        max_ratio = max_ratio.max(ratio);
        horizon = horizon.max(t);
        rejected += rej;
    }
    let outcome = if r_hat < 1.0 && max_ratio < cfg.decay_factor {
        ProbeOutcome::Decay
    } else {
        ProbeOutcome::Inconclusive
    };
    Ok(ProbeReport {
        r_hat,
        outcome,
        trials: cfg.n_trials,
        max_ratio,
        horizon,
        rejected,
    })
}
