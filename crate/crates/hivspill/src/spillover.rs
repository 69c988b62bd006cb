//! Forward sensitivities of the state with respect to one group's PrEP
//! fraction, integrated jointly with the model.
//!
//! `sigma_j^k = dS_j/d eps_k` and `gamma_j^k = dI_j/d eps_k` keep their literal
//! meaning, so a protective effect shows up as `gamma < 0`. Quantities reported
//! to users (per-person effects, incidence sensitivity, NNT) are expressed as
//! infections averted, i.e. with the sign flipped.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrate::{solve, IntegratorConfig, OdeSystem, Trajectory};
use crate::model::{
    self, lambda_vectors, populations_flat, rhs_flat, with_time, GroupId, LambdaVectors, ModelSpec,
    ModelSystem, StateVec, Variant,
};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpilloverForm {
    /// The structural form: the delta = 0 equations driven by the full state.
    #[default]
    Structural,
    /// Structural plus the inverse-population correction terms (basic model).
    XiCorrected,
    /// Full forward sensitivity of the model as integrated, including delta,
    /// the 1/N dependence and the dependence of the closed mixing on N.
    Exact,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensitivityState {
    pub source: usize,
    pub sigma: Vec<f64>,
    pub gamma: Vec<f64>,
}

impl SensitivityState {
    pub fn zeros(source: usize, n: usize) -> Self {
        SensitivityState {
            source,
            sigma: vec![0.0; n],
            gamma: vec![0.0; n],
        }
    }

    fn to_block(&self) -> Vec<f64> {
        self.sigma
            .iter()
            .zip(&self.gamma)
            .flat_map(|(s, g)| [*s, *g])
            .collect()
    }

    fn from_block(source: usize, b: &[f64]) -> Self {
        let n = b.len() / 2;
        SensitivityState {
            source,
            sigma: (0..n).map(|j| b[2 * j]).collect(),
            gamma: (0..n).map(|j| b[2 * j + 1]).collect(),
        }
    }
}

/// Correction vectors `Xi_j . X` for every group `j`.
fn xi_dots(lam: &LambdaVectors, x: &[f64], theta: &[f64], n_pop: &[f64]) -> Vec<f64> {
    (0..lam.n)
        .map(|j| {
            let row = lam.row(j);
            (0..lam.n)
                .map(|p| row[2 * p + 1] * x[2 * p + 1] * (theta[2 * p] + theta[2 * p + 1]) / n_pop[p])
                .sum()
        })
        .collect()
}

/// Structural (and optionally Xi-corrected) sensitivity derivative.
fn structural_rhs(
    spec: &ModelSpec,
    lam: &LambdaVectors,
    x: &[f64],
    k: usize,
    theta: &[f64],
    xi: bool,
    d: &mut [f64],
) {
    let xi_dot = xi.then(|| xi_dots(lam, x, theta, &populations_flat(x, spec.n_groups())));
    for (j, g) in spec.groups.iter().enumerate() {
        let (s, sig, gam) = (x[2 * j], theta[2 * j], theta[2 * j + 1]);
        let mut coupling = (1.0 - g.epsilon) * (lam.dot(j, theta) * s + lam.dot(j, x) * sig);
        if let Some(xd) = &xi_dot {
            coupling -= (1.0 - g.epsilon) * xd[j] * s;
        }
        d[2 * j] = -coupling - spec.mu * sig;
        d[2 * j + 1] = coupling - spec.mu * gam;
    }
    let src = lam.dot(k, x) * x[2 * k];
    d[2 * k] += src;
    d[2 * k + 1] -= src;
}

/// Model derivative restricted to `(S, I)`, closure recomputed from scratch.
fn model_si_rhs(spec: &ModelSpec, x: &[f64], out: &mut [f64]) -> Result<()> {
    let n = spec.n_groups();
    let pops = populations_flat(x, n);
    let mix = spec.mixing_at(&pops, None)?;
    let lam = lambda_vectors(spec, &pops, &mix)?;
    let mut y = x[..2 * n].to_vec();
    y.extend(std::iter::repeat_n(0.0, n));
    let mut dy = vec![0.0; 3 * n];
    rhs_flat(spec, &lam, &y, &mut dy);
    out[..2 * n].copy_from_slice(&dy[..2 * n]);
    Ok(())
}

fn exact_rhs(spec: &ModelSpec, lam: &LambdaVectors, x: &[f64], k: usize, theta: &[f64], d: &mut [f64]) -> Result<()> {
    let n = spec.n_groups();
    let tn = theta.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    d.iter_mut().for_each(|v| *v = 0.0);
    if tn > 0.0 {
        let xn = x[..2 * n].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let h = 1e-6 * xn / tn;
        let plus: Vec<f64> = (0..2 * n).map(|i| x[i] + h * theta[i]).collect();
        let minus: Vec<f64> = (0..2 * n).map(|i| x[i] - h * theta[i]).collect();
        let mut fp = vec![0.0; 2 * n];
        let mut fm = vec![0.0; 2 * n];
        model_si_rhs(spec, &plus, &mut fp)?;
        model_si_rhs(spec, &minus, &mut fm)?;
        for i in 0..2 * n {
            d[i] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    let src = lam.dot(k, x) * x[2 * k];
    d[2 * k] += src;
    d[2 * k + 1] -= src;
    Ok(())
}

fn check_form(spec: &ModelSpec, form: SpilloverForm) -> Result<()> {
    if form == SpilloverForm::XiCorrected && spec.variant != Variant::Basic {
        return Err(Error::UnsupportedVariant(spec.variant.to_string()));
    }
    Ok(())
}

/// Derivative of one sensitivity block at a given model state.
pub fn spillover_rhs(
    spec: &ModelSpec,
    state: &StateVec,
    sens: &SensitivityState,
    form: SpilloverForm,
) -> Result<SensitivityState> {
    check_form(spec, form)?;
    let lam = model::build_lambda_vectors(spec, state)?;
    let x = state.x();
    let theta = sens.to_block();
    let mut d = vec![0.0; theta.len()];
    match form {
        SpilloverForm::Structural => structural_rhs(spec, &lam, &x, sens.source, &theta, false, &mut d),
        SpilloverForm::XiCorrected => structural_rhs(spec, &lam, &x, sens.source, &theta, true, &mut d),
        SpilloverForm::Exact => exact_rhs(spec, &lam, &x, sens.source, &theta, &mut d)?,
    }
    Ok(SensitivityState::from_block(sens.source, &d))
}

/// The model augmented with one sensitivity block per source group.
pub struct SpilloverSystem<'a> {
    model: ModelSystem<'a>,
    sources: Vec<usize>,
    form: SpilloverForm,
}

impl<'a> SpilloverSystem<'a> {
    pub fn new(spec: &'a ModelSpec, sources: Vec<usize>, form: SpilloverForm) -> Result<Self> {
        check_form(spec, form)?;
        Ok(SpilloverSystem {
            model: ModelSystem::new(spec),
            sources,
            form,
        })
    }
}

impl OdeSystem for SpilloverSystem<'_> {
    fn dim(&self) -> usize {
        let n = self.model.spec.n_groups();
        3 * n + 2 * n * self.sources.len()
    }

    fn nonneg_dim(&self) -> usize {
        3 * self.model.spec.n_groups()
    }

    fn rhs(&mut self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        let spec = self.model.spec;
        let n = spec.n_groups();
        let lam = self.model.lambda_at(y).map_err(|e| with_time(e, t))?;
        rhs_flat(spec, &lam, y, dy);
        for (b, &k) in self.sources.iter().enumerate() {
            let off = 3 * n + 2 * n * b;
            let theta = &y[off..off + 2 * n];
            let d = &mut dy[off..off + 2 * n];
            match self.form {
                SpilloverForm::Structural => structural_rhs(spec, &lam, y, k, theta, false, d),
                SpilloverForm::XiCorrected => structural_rhs(spec, &lam, y, k, theta, true, d),
                SpilloverForm::Exact => exact_rhs(spec, &lam, y, k, theta, d).map_err(|e| with_time(e, t))?,
            }
        }
        Ok(())
    }
}

/// Sensitivity blocks along a trajectory (same time grid).
#[derive(Clone, Debug)]
pub struct SensitivityTrajectory {
    pub variant: Variant,
    pub sources: Vec<usize>,
    pub times: Vec<f64>,
    /// Per time: concatenated `[sigma_0, gamma_0, sigma_1, ...]` blocks.
    pub blocks: Vec<Vec<f64>>,
}

impl SensitivityTrajectory {
    fn n(&self) -> usize {
        self.variant.n_groups()
    }

    pub fn block_index(&self, source: usize) -> Option<usize> {
        self.sources.iter().position(|s| *s == source)
    }

    pub fn sigma(&self, idx: usize, source: usize, j: usize) -> f64 {
        let b = self.block_index(source).expect("source not integrated");
        self.blocks[idx][2 * self.n() * b + 2 * j]
    }

    pub fn gamma(&self, idx: usize, source: usize, j: usize) -> f64 {
        let b = self.block_index(source).expect("source not integrated");
        self.blocks[idx][2 * self.n() * b + 2 * j + 1]
    }

    pub fn state(&self, idx: usize, source: usize) -> SensitivityState {
        let b = self.block_index(source).expect("source not integrated");
        let n = self.n();
        SensitivityState::from_block(source, &self.blocks[idx][2 * n * b..2 * n * (b + 1)])
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let labels = self.variant.labels();
        let mut wtr = csv::Writer::from_writer(w);
        let mut header = vec!["t".to_string()];
        for &k in &self.sources {
            for l in labels {
                header.push(format!("sigma_{l}__{}", labels[k]));
                header.push(format!("gamma_{l}__{}", labels[k]));
            }
        }
        wtr.write_record(&header)?;
        for (t, b) in self.times.iter().zip(&self.blocks) {
            let mut rec = vec![format!("{t}")];
            rec.extend(b.iter().map(|v| format!("{v}")));
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Integrates the model and the requested sensitivity blocks jointly. The
/// sensitivities start from zero at `cfg.t0`.
pub fn integrate_with_spillover(
    spec: &ModelSpec,
    y0: &StateVec,
    sources: &[GroupId],
    form: SpilloverForm,
    cfg: &IntegratorConfig,
) -> Result<(Trajectory, SensitivityTrajectory)> {
    spec.validate()?;
    let n = spec.n_groups();
    let src: Vec<usize> = sources.iter().map(|g| g.index).collect();
    if let Some(bad) = sources.iter().find(|g| g.variant != spec.variant || g.index >= n) {
        return Err(Error::UnknownGroup(bad.label().to_string()));
    }
    let mut sys = SpilloverSystem::new(spec, src.clone(), form)?;
    let mut y = y0.to_flat();
    y.resize(sys.dim(), 0.0);
    let sol = solve(&mut sys, &y, cfg)?;
    let blocks = sol.states.iter().map(|s| s[3 * n..].to_vec()).collect();
    let states = sol.states.into_iter().map(|mut s| {
        s.truncate(3 * n);
        s
    });
    Ok((
        Trajectory {
            variant: spec.variant,
            times: sol.times.clone(),
            states: states.collect(),
            clamp_events: sol.clamp_events,
        },
        SensitivityTrajectory {
            variant: spec.variant,
            sources: src,
            times: sol.times,
            blocks,
        },
    ))
}

/// Averted infections per additional person on PrEP in the source group:
/// returns `(-gamma_j / S_k, -sigma_j / S_k)`.
pub fn per_person_effect(sens: &SensitivityState, state: &StateVec, j: usize) -> Result<(f64, f64)> {
    let s_k = state.s[sens.source];
    if !(s_k > 0.0) {
        return Err(Error::ZeroPopulation {
            group: format!("index {}", sens.source),
        });
    }
    Ok((-sens.gamma[j] / s_k, -sens.sigma[j] / s_k))
}

/// Rate of infections averted in `j` per additional person on PrEP in the
/// source group: `-(d/dt[gamma/S_k] + mu * gamma/S_k)`.
pub fn incidence_sensitivity(
    spec: &ModelSpec,
    state: &StateVec,
    sens: &SensitivityState,
    j: usize,
    form: SpilloverForm,
) -> Result<f64> {
    let k = sens.source;
    let s_k = state.s[k];
    if !(s_k > 0.0) {
        return Err(Error::ZeroPopulation {
            group: format!("index {k}"),
        });
    }
    let dsens = spillover_rhs(spec, state, sens, form)?;
    let dstate = model::rhs(spec, state, 0.0)?;
    let g = sens.gamma[j];
    let dq = (dsens.gamma[j] * s_k - g * dstate.s[k]) / (s_k * s_k);
    Ok(-(dq + spec.mu * g / s_k))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NntResult {
    pub j: usize,
    pub k: usize,
    pub horizon: f64,
    /// Person-years on PrEP per infection averted; `NaN` when undefined.
    pub nnt_simple: f64,
    pub nnt_integral: f64,
    pub defined: bool,
}

/// NNT for target `j` and source `k` over `[t_start, t_start + horizon]`,
/// where `t_start` is the first time of the sensitivity trajectory.
pub fn nnt(
    sens: &SensitivityTrajectory,
    traj: &Trajectory,
    spec_mu: f64,
    j: usize,
    k: usize,
    horizon: f64,
) -> Result<NntResult> {
    let t0 = sens.times[0];
    let t_end = t0 + horizon;
    let idx = traj
        .index_of(t_end)
        .ok_or_else(|| Error::InvalidArgument(format!("t = {t_end} is not on the trajectory grid")))?;
    if !(horizon > 0.0) {
        return Err(Error::InvalidArgument("horizon must be > 0".into()));
    }
    let s_k = traj.states[idx][2 * k];
    let averted = -sens.gamma(idx, k, j);
    let mut integral = 0.0;
    let q = |i: usize| -sens.gamma(i, k, j) / traj.states[i][2 * k];
    for i in 1..=idx {
        integral += 0.5 * (traj.times[i] - traj.times[i - 1]) * (q(i) + q(i - 1));
    }
    let defined = averted > 0.0;
    let (simple, integ) = if defined {
        (
            horizon * s_k / averted,
            horizon / (averted / s_k + spec_mu * integral),
        )
    } else {
        (f64::NAN, f64::NAN)
    };
    Ok(NntResult {
        j,
        k,
        horizon,
        nnt_simple: simple,
        nnt_integral: integ,
        defined,
    })
}

/// Correction vectors `Xi_j` (rows, length 2n) and the signed contributions
/// `(1 - eps_j)(Xi_j . X) S_j` added to `d sigma_j` (and subtracted from
/// `d gamma_j`).
pub fn xi_correction(
    spec: &ModelSpec,
    state: &StateVec,
    sens: &SensitivityState,
) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    if spec.variant != Variant::Basic {
        return Err(Error::UnsupportedVariant(spec.variant.to_string()));
    }
    let lam = model::build_lambda_vectors(spec, state)?;
    let n = spec.n_groups();
    let pops = state.populations();
    let theta = sens.to_block();
    let x = state.x();
    let mut rows = vec![vec![0.0; 2 * n]; n];
    for (j, row) in rows.iter_mut().enumerate() {
        for p in 0..n {
            row[2 * p + 1] = lam.row(j)[2 * p + 1] * (theta[2 * p] + theta[2 * p + 1]) / pops[p];
        }
    }
    let contrib = rows
        .iter()
        .enumerate()
        .map(|(j, r)| {
            let dot: f64 = r.iter().zip(&x).map(|(a, b)| a * b).sum();
            (1.0 - spec.groups[j].epsilon) * dot * state.s[j]
        })
        .collect();
    Ok((rows, contrib))
}

/// Finite-difference estimate of the sensitivity trajectory.
#[derive(Clone, Debug)]
pub struct FdEstimate {
    pub source: usize,
    pub times: Vec<f64>,
    /// Per time: `[sigma_0, gamma_0, sigma_1, ...]`.
    pub blocks: Vec<Vec<f64>>,
    /// True when the one-sided forward difference was used.
    pub forward: bool,
}

/// Perturbs `eps_k` by `+-eps_tilde` from `cfg.t0` and differences the two
/// runs on their common grid points.
pub fn fd_oracle(
    spec: &ModelSpec,
    y0: &StateVec,
    k: usize,
    eps_tilde: f64,
    cfg: &IntegratorConfig,
) -> Result<FdEstimate> {
    let eps = spec.groups[k].epsilon;
    if eps + eps_tilde > 1.0 || !(eps_tilde > 0.0) {
        return Err(Error::PerturbationOutOfRange {
            epsilon: eps,
            eps_tilde,
        });
    }
    let forward = eps - eps_tilde < 0.0;
    let up = crate::integrate::integrate(&spec.with_epsilon(k, eps + eps_tilde), y0, cfg)?;
    let (down, scale) = if forward {
        (crate::integrate::integrate(spec, y0, cfg)?, eps_tilde)
    } else {
        (
            crate::integrate::integrate(&spec.with_epsilon(k, eps - eps_tilde), y0, cfg)?,
            2.0 * eps_tilde,
        )
    };
    let n = spec.n_groups();
    let mut times = Vec::new();
    let mut blocks = Vec::new();
    for (i, t) in up.times.iter().enumerate() {
        if let Some(d) = down.index_of(*t) {
            times.push(*t);
            blocks.push(
                (0..2 * n)
                    .map(|c| (up.states[i][c] - down.states[d][c]) / scale)
                    .collect(),
            );
        }
    }
    Ok(FdEstimate {
        source: k,
        times,
        blocks,
        forward,
    })
}

/// Largest normwise relative gap between an integrated sensitivity block and
/// a finite-difference estimate over their shared time points (the start,
/// where both vanish, is skipped).
pub fn max_relative_error(sens: &SensitivityTrajectory, fd: &FdEstimate) -> f64 {
    let n = sens.variant.n_groups();
    let b = sens.block_index(fd.source).expect("source not integrated");
    let mut worst = 0.0f64;
    for (t, est) in fd.times.iter().zip(&fd.blocks).skip(1) {
        let Some(i) = sens.times.iter().position(|s| (s - t).abs() <= 1e-9 * t.abs().max(1.0)) else {
            continue;
        };
        let got = &sens.blocks[i][2 * n * b..2 * n * (b + 1)];
        let scale = est.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if scale == 0.0 {
            continue;
        }
        let diff = got.iter().zip(est).fold(0.0f64, |m, (a, e)| m.max((a - e).abs()));
        worst = worst.max(diff / scale);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::basic::*;
    use crate::scenario::presets;

    #[test]
    fn zero_sensitivity_at_dfe_has_zero_derivative() {
        let (spec, _) = presets::georgia_basic();
        let e = model::dfe(&spec);
        let d = spillover_rhs(&spec, &e, &SensitivityState::zeros(MSM, 3), SpilloverForm::Structural).unwrap();
        assert!(d.sigma.iter().chain(&d.gamma).all(|v| *v == 0.0));
    }

    #[test]
    fn source_term_has_opposite_signs() {
        let (spec, y0) = presets::georgia_basic();
        let d = spillover_rhs(&spec, &y0, &SensitivityState::zeros(HETF, 3), SpilloverForm::Structural).unwrap();
        assert!(d.sigma[HETF] > 0.0 && d.gamma[HETF] < 0.0);
        assert_eq!(d.sigma[HETF], -d.gamma[HETF]);
        assert_eq!(d.sigma[MSM], 0.0);
    }

    #[test]
    fn xi_rejects_risk_variant() {
        let (spec, y0) = presets::georgia_risk();
        let s = SensitivityState::zeros(0, 4);
        assert!(matches!(xi_correction(&spec, &y0, &s), Err(Error::UnsupportedVariant(_))));
        assert!(matches!(
            spillover_rhs(&spec, &y0, &s, SpilloverForm::XiCorrected),
            Err(Error::UnsupportedVariant(_))
        ));
    }

    #[test]
    fn xi_vanishes_for_zero_sensitivity() {
        let (spec, y0) = presets::georgia_basic();
        let (rows, contrib) = xi_correction(&spec, &y0, &SensitivityState::zeros(MSM, 3)).unwrap();
        assert!(rows.iter().flatten().all(|v| *v == 0.0));
        assert!(contrib.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn undefined_nnt_for_nonpositive_effect() {
        let (spec, y0) = presets::georgia_basic();
        let cfg = IntegratorConfig::rk4(0.25, 2020.0, 2021.0);
        let (traj, sens) =
            integrate_with_spillover(&spec, &y0, &[spec.group("hetf").unwrap()], SpilloverForm::Structural, &cfg)
                .unwrap();
        // HETM PrEP is not integrated here, and MSM barely responds to HETF.
        let r = nnt(&sens, &traj, spec.mu, MSM, HETF, 1.0).unwrap();
        if !r.defined {
            assert!(r.nnt_simple.is_nan());
        }
        let direct = nnt(&sens, &traj, spec.mu, HETF, HETF, 1.0).unwrap();
        assert!(direct.defined && direct.nnt_simple > 0.0);
    }

    #[test]
    fn fd_out_of_range() {
        let (mut spec, y0) = presets::georgia_basic();
        spec.groups[MSM].epsilon = 1.0;
        assert!(matches!(
            fd_oracle(&spec, &y0, MSM, 1e-6, &IntegratorConfig::rk4(0.5, 0.0, 1.0)),
            Err(Error::PerturbationOutOfRange { .. })
        ));
    }
}
