//! Group-structured SI models in compact lambda-vector form.
//!
//! State layout (flat): `[S_0, I_0, S_1, I_1, ..., C_0, ..., C_{n-1}]` where `C_j`
//! is the cumulative incidence of group `j`. The first `2n` entries form the
//! vector `X` that the lambda vectors act on.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::closure::{self, ClosureCache};
use crate::error::{Error, Result};
use crate::integrate::OdeSystem;

pub const BASIC_LABELS: [&str; 3] = ["msm", "hetf", "hetm"];
pub const RISK_LABELS: [&str; 4] = ["msm", "hetf_h", "hetf_l", "hetm"];

/// Group indices for the basic model.
pub mod basic {
    pub const MSM: usize = 0;
    pub const HETF: usize = 1;
    pub const HETM: usize = 2;
}

/// Group indices for the risk-structured model.
pub mod risk {
    pub const MSM: usize = 0;
    pub const HETF_H: usize = 1;
    pub const HETF_L: usize = 2;
    pub const HETM: usize = 3;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Basic,
    Risk,
}

impl Variant {
    pub fn labels(self) -> &'static [&'static str] {
        match self {
            Variant::Basic => &BASIC_LABELS,
            Variant::Risk => &RISK_LABELS,
        }
    }

    pub fn n_groups(self) -> usize {
        self.labels().len()
    }

    pub fn group(self, label: &str) -> Result<GroupId> {
        self.labels()
            .iter()
            .position(|l| *l == label)
            .map(|index| GroupId {
                variant: self,
                index,
            })
            .ok_or_else(|| Error::UnknownGroup(label.to_string()))
    }

    pub fn groups(self) -> impl Iterator<Item = GroupId> {
        (0..self.n_groups()).map(move |index| GroupId {
            variant: self,
            index,
        })
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Variant::Basic => write!(f, "basic"),
            Variant::Risk => write!(f, "risk"),
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "basic" => Ok(Variant::Basic),
            "risk" => Ok(Variant::Risk),
            other => Err(Error::Config(format!("unknown model variant `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct GroupId {
    pub variant: Variant,
    pub index: usize,
}

impl GroupId {
    pub fn label(&self) -> &'static str {
        self.variant.labels()[self.index]
    }
}

impl fmt::Display for GroupId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Per-group demographic and intervention parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupParams {
    /// Recruitment, persons/year.
    pub pi: f64,
    /// Contacts per year.
    pub a: f64,
    /// Disease-induced removal, 1/year.
    pub delta: f64,
    /// Fraction of susceptibles on PrEP.
    pub epsilon: f64,
}

/// Per-contact transmission probabilities. `beta_mm` is male to male,
/// `beta_fm` female to male and `beta_mf` male to female.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransmissionProbs {
    pub beta_mm: f64,
    pub beta_fm: f64,
    pub beta_mf: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum MixingFractions {
    Basic {
        eta_msm: f64,
        alpha_hetf: f64,
    },
    Risk {
        eta_msm: f64,
        eta_hetfh: f64,
        alpha_hetfh: f64,
        alpha_hetfl: f64,
        xi_hetm: f64,
    },
}

impl MixingFractions {
    pub fn variant(&self) -> Variant {
        match self {
            MixingFractions::Basic { .. } => Variant::Basic,
            MixingFractions::Risk { .. } => Variant::Risk,
        }
    }

    pub fn names(&self) -> &'static [&'static str] {
        match self {
            MixingFractions::Basic { .. } => &["eta_msm", "alpha_hetf"],
            MixingFractions::Risk { .. } => {
                &["eta_msm", "eta_hetfh", "alpha_hetfh", "alpha_hetfl", "xi_hetm"]
            }
        }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        match *self {
            MixingFractions::Basic {
                eta_msm,
                alpha_hetf,
            } => vec![eta_msm, alpha_hetf],
            MixingFractions::Risk {
                eta_msm,
                eta_hetfh,
                alpha_hetfh,
                alpha_hetfl,
                xi_hetm,
            } => vec![eta_msm, eta_hetfh, alpha_hetfh, alpha_hetfl, xi_hetm],
        }
    }

    pub fn from_slice(variant: Variant, v: &[f64]) -> Result<Self> {
        match (variant, v) {
            (Variant::Basic, &[eta_msm, alpha_hetf]) => Ok(MixingFractions::Basic {
                eta_msm,
                alpha_hetf,
            }),
            (Variant::Risk, &[eta_msm, eta_hetfh, alpha_hetfh, alpha_hetfl, xi_hetm]) => {
                Ok(MixingFractions::Risk {
                    eta_msm,
                    eta_hetfh,
                    alpha_hetfh,
                    alpha_hetfl,
                    xi_hetm,
                })
            }
            _ => Err(Error::InvalidArgument(format!(
                "{} mixing fractions expected for the {variant} variant, got {}",
                if variant == Variant::Basic { 2 } else { 5 },
                v.len()
            ))),
        }
    }

    fn check_range(&self) -> Result<()> {
        for (name, v) in self.names().iter().zip(self.to_vec()) {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidArgument(format!(
                    "mixing fraction {name} = {v} outside [0, 1]"
                )));
            }
        }
        if let MixingFractions::Risk {
            eta_msm, eta_hetfh, ..
        } = *self
        {
            if eta_msm + eta_hetfh > 1.0 + 1e-12 {
                return Err(Error::InvalidArgument(format!(
                    "eta_msm + eta_hetfh = {} exceeds 1",
                    eta_msm + eta_hetfh
                )));
            }
        }
        Ok(())
    }
}

/// A complete model: groups, rates, transmission and mixing.
///
/// `mixing` pins the fractions when set; otherwise they are re-closed from the
/// priors at every evaluation using the current group populations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub variant: Variant,
    pub groups: Vec<GroupParams>,
    pub probs: TransmissionProbs,
    pub mu: f64,
    pub priors: MixingFractions,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mixing: Option<MixingFractions>,
}

impl ModelSpec {
    pub fn n_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn group(&self, label: &str) -> Result<GroupId> {
        self.variant.group(label)
    }

    pub fn contact_rates(&self) -> Vec<f64> {
        self.groups.iter().map(|g| g.a).collect()
    }

    pub fn epsilons(&self) -> Vec<f64> {
        self.groups.iter().map(|g| g.epsilon).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.variant.n_groups();
        if self.groups.len() != n {
            return Err(Error::InvalidArgument(format!(
                "{} variant needs {n} groups, got {}",
                self.variant,
                self.groups.len()
            )));
        }
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(Error::InvalidArgument(format!("mu must be > 0, got {}", self.mu)));
        }
        for (label, g) in self.variant.labels().iter().zip(&self.groups) {
            for (name, v) in [("pi", g.pi), ("a", g.a), ("delta", g.delta), ("epsilon", g.epsilon)] {
                if !(v >= 0.0 && v.is_finite()) {
                    return Err(Error::InvalidArgument(format!("{label}.{name} = {v} must be >= 0")));
                }
            }
            if g.epsilon > 1.0 {
                return Err(Error::InvalidArgument(format!(
                    "{label}.epsilon = {} exceeds 1",
                    g.epsilon
                )));
            }
        }
        let p = self.probs;
        for (name, v) in [("beta_mm", p.beta_mm), ("beta_fm", p.beta_fm), ("beta_mf", p.beta_mf)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidArgument(format!("{name} = {v} outside [0, 1]")));
            }
        }
        if self.priors.variant() != self.variant {
            return Err(Error::InvalidArgument("priors do not match the model variant".into()));
        }
        self.priors.check_range()?;
        if let Some(m) = &self.mixing {
            if m.variant() != self.variant {
                return Err(Error::InvalidArgument("mixing does not match the model variant".into()));
            }
            m.check_range()?;
        }
        Ok(())
    }

    /// Mixing fractions for the given group populations.
    pub fn mixing_at(&self, n: &[f64], cache: Option<&mut ClosureCache>) -> Result<MixingFractions> {
        if let Some(m) = self.mixing {
            return Ok(m);
        }
        let a = self.contact_rates();
        match cache {
            Some(c) => c.get_or_close(self.variant, n, &a, &self.priors),
            None => closure::close(self.variant, n, &a, &self.priors),
        }
    }

    /// Copy with the mixing fractions fixed to their closure at populations `n`.
    pub fn pinned_at(&self, n: &[f64]) -> Result<ModelSpec> {
        let mut s = self.clone();
        s.mixing = Some(self.mixing_at(n, None)?);
        Ok(s)
    }

    pub fn with_epsilon(&self, group: usize, epsilon: f64) -> ModelSpec {
        let mut s = self.clone();
        s.groups[group].epsilon = epsilon;
        s
    }
}

/// Compartment populations plus cumulative incidence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateVec {
    pub s: Vec<f64>,
    pub i: Vec<f64>,
    pub c: Vec<f64>,
}

impl StateVec {
    pub fn new(s: Vec<f64>, i: Vec<f64>) -> Self {
        let n = s.len();
        assert_eq!(n, i.len(), "S and I lengths differ");
        StateVec {
            s,
            i,
            c: vec![0.0; n],
        }
    }

    pub fn n_groups(&self) -> usize {
        self.s.len()
    }

    pub fn populations(&self) -> Vec<f64> {
        self.s.iter().zip(&self.i).map(|(s, i)| s + i).collect()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let n = self.n_groups();
        let mut y = Vec::with_capacity(3 * n);
        for j in 0..n {
            y.push(self.s[j]);
            y.push(self.i[j]);
        }
        y.extend_from_slice(&self.c);
        y
    }

    pub fn from_flat(y: &[f64], n: usize) -> Self {
        StateVec {
            s: (0..n).map(|j| y[2 * j]).collect(),
            i: (0..n).map(|j| y[2 * j + 1]).collect(),
            c: y[2 * n..3 * n].to_vec(),
        }
    }

    /// The infection vector `X = (S_0, I_0, S_1, I_1, ...)`.
    pub fn x(&self) -> Vec<f64> {
        let mut y = self.to_flat();
        y.truncate(2 * self.n_groups());
        y
    }
}

pub(crate) fn populations_flat(y: &[f64], n: usize) -> Vec<f64> {
    (0..n).map(|j| y[2 * j] + y[2 * j + 1]).collect()
}

/// Per-group contact coefficient vectors, stored row-major (`n` rows of `2n`).
#[derive(Clone, Debug, PartialEq)]
pub struct LambdaVectors {
    pub n: usize,
    pub coef: Vec<f64>,
}

impl LambdaVectors {
    pub fn row(&self, j: usize) -> &[f64] {
        &self.coef[2 * self.n * j..2 * self.n * (j + 1)]
    }

    /// `blambda_j . x` where `x` holds at least the `2n` entries of `X`.
    pub fn dot(&self, j: usize, x: &[f64]) -> f64 {
        self.row(j).iter().zip(x).map(|(l, x)| l * x).sum()
    }
}

fn check_positive(variant: Variant, n: &[f64]) -> Result<()> {
    for (j, nj) in n.iter().enumerate() {
        if !(*nj > 0.0) {
            return Err(Error::ZeroPopulation {
                group: variant.labels()[j].to_string(),
            });
        }
    }
    Ok(())
}

/// Lambda vectors for given populations and mixing fractions.
pub fn lambda_vectors(spec: &ModelSpec, n: &[f64], mix: &MixingFractions) -> Result<LambdaVectors> {
    check_positive(spec.variant, n)?;
    let k = spec.n_groups();
    let mut coef = vec![0.0; 2 * k * k];
    let p = spec.probs;
    let a: Vec<f64> = spec.groups.iter().map(|g| g.a).collect();
    let mut set = |row: usize, partner: usize, v: f64| coef[2 * k * row + 2 * partner + 1] = v;
    match *mix {
        MixingFractions::Basic {
            eta_msm,
            alpha_hetf,
        } => {
            use basic::*;
            set(MSM, MSM, a[MSM] * eta_msm * p.beta_mm / n[MSM]);
            set(MSM, HETF, a[MSM] * (1.0 - eta_msm) * p.beta_fm / n[HETF]);
            set(HETF, MSM, a[HETF] * alpha_hetf * p.beta_mf / n[MSM]);
            set(HETF, HETM, a[HETF] * (1.0 - alpha_hetf) * p.beta_mf / n[HETM]);
            set(HETM, HETF, a[HETM] * p.beta_fm / n[HETF]);
        }
        MixingFractions::Risk {
            eta_msm,
            eta_hetfh,
            alpha_hetfh,
            alpha_hetfl,
            xi_hetm,
        } => {
            use risk::*;
            set(MSM, MSM, a[MSM] * eta_msm * p.beta_mm / n[MSM]);
            set(MSM, HETF_H, a[MSM] * eta_hetfh * p.beta_fm / n[HETF_H]);
            set(MSM, HETF_L, a[MSM] * (1.0 - eta_msm - eta_hetfh) * p.beta_fm / n[HETF_L]);
            set(HETF_H, MSM, a[HETF_H] * alpha_hetfh * p.beta_mf / n[MSM]);
            set(HETF_H, HETM, a[HETF_H] * (1.0 - alpha_hetfh) * p.beta_mf / n[HETM]);
            set(HETF_L, MSM, a[HETF_L] * alpha_hetfl * p.beta_mf / n[MSM]);
            set(HETF_L, HETM, a[HETF_L] * (1.0 - alpha_hetfl) * p.beta_mf / n[HETM]);
            set(HETM, HETF_H, a[HETM] * xi_hetm * p.beta_fm / n[HETF_H]);
            set(HETM, HETF_L, a[HETM] * (1.0 - xi_hetm) * p.beta_fm / n[HETF_L]);
        }
    }
    Ok(LambdaVectors { n: k, coef })
}

pub fn build_lambda_vectors(spec: &ModelSpec, state: &StateVec) -> Result<LambdaVectors> {
    let n = state.populations();
    check_positive(spec.variant, &n)?;
    let mix = spec.mixing_at(&n, None)?;
    lambda_vectors(spec, &n, &mix)
}

/// Writes the model derivative for flat state `y` into `dy`.
pub(crate) fn rhs_flat(
    spec: &ModelSpec,
    lam: &LambdaVectors,
    y: &[f64],
    dy: &mut [f64],
) {
    let n = spec.n_groups();
    for (j, g) in spec.groups.iter().enumerate() {
        let (s, i) = (y[2 * j], y[2 * j + 1]);
        let inc = (1.0 - g.epsilon) * lam.dot(j, y) * s;
        dy[2 * j] = g.pi - inc - spec.mu * s;
        dy[2 * j + 1] = inc - (spec.mu + g.delta) * i;
        dy[2 * n + j] = inc;
    }
}

pub fn rhs(spec: &ModelSpec, state: &StateVec, _t: f64) -> Result<StateVec> {
    let n = spec.n_groups();
    let lam = build_lambda_vectors(spec, state)?;
    let y = state.to_flat();
    let mut dy = vec![0.0; 3 * n];
    rhs_flat(spec, &lam, &y, &mut dy);
    Ok(StateVec::from_flat(&dy, n))
}

/// Incidence rate per group, `(1 - eps_j)(blambda_j . X) S_j`.
pub fn incidence(spec: &ModelSpec, state: &StateVec) -> Result<Vec<f64>> {
    let lam = build_lambda_vectors(spec, state)?;
    let x = state.x();
    Ok(spec
        .groups
        .iter()
        .enumerate()
        .map(|(j, g)| (1.0 - g.epsilon) * lam.dot(j, &x) * state.s[j])
        .collect())
}

/// Disease-free equilibrium `S_j = Pi_j / mu`, `I_j = 0`.
pub fn dfe(spec: &ModelSpec) -> StateVec {
    StateVec::new(
        spec.groups.iter().map(|g| g.pi / spec.mu).collect(),
        vec![0.0; spec.n_groups()],
    )
}

/// The model as an ODE system with a per-integration closure cache.
pub struct ModelSystem<'a> {
    pub spec: &'a ModelSpec,
    cache: ClosureCache,
}

impl<'a> ModelSystem<'a> {
    pub fn new(spec: &'a ModelSpec) -> Self {
        ModelSystem {
            spec,
            cache: ClosureCache::default(),
        }
    }

    pub(crate) fn lambda_at(&mut self, y: &[f64]) -> Result<LambdaVectors> {
        let n = populations_flat(y, self.spec.n_groups());
        check_positive(self.spec.variant, &n)?;
        let mix = self.spec.mixing_at(&n, Some(&mut self.cache))?;
        lambda_vectors(self.spec, &n, &mix)
    }
}

impl OdeSystem for ModelSystem<'_> {
    fn dim(&self) -> usize {
        3 * self.spec.n_groups()
    }

    fn nonneg_dim(&self) -> usize {
        3 * self.spec.n_groups()
    }

    fn rhs(&mut self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        let lam = self.lambda_at(y).map_err(|e| with_time(e, t))?;
        rhs_flat(self.spec, &lam, y, dy);
        Ok(())
    }
}

pub(crate) fn with_time(e: Error, t: f64) -> Error {
    match e {
        Error::InfeasibleClosure {
            name,
            value,
            at_time: None,
        } => Error::InfeasibleClosure {
            name,
            value,
            at_time: Some(t),
        },
        e => e,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::presets;
    use approx::assert_relative_eq;

    #[test]
    fn hand_computed_msm_entry() {
        let (spec, y0) = presets::georgia_basic();
        let lam = build_lambda_vectors(&spec, &y0).unwrap();
        let n_msm = 123418.0 + 42000.0;
        let n_hetf = 3260101.0 + 14700.0;
        let n_hetm = 3138939.0 + 7000.0;
        let alpha = 1.0 - n_hetm * 48.5 / (n_hetf * 47.3);
        let eta = 1.0 - alpha * n_hetf * 47.3 / (n_msm * 94.7);
        assert_relative_eq!(eta, 0.8519, epsilon = 1e-4);
        let expected = 94.7 * eta * 0.0008 / n_msm;
        assert_relative_eq!(lam.row(basic::MSM)[1], expected, max_relative = 1e-14);
        assert_relative_eq!(expected, 3.901e-7, max_relative = 1e-3);
    }

    #[test]
    fn hand_computed_hetm_derivative() {
        let (spec, y0) = presets::georgia_basic();
        let d = rhs(&spec, &y0, 2017.0).unwrap();
        let force = 48.5 * 0.0003 * (14700.0 / 3274801.0) * 3138939.0;
        assert_relative_eq!(d.i[basic::HETM], force - 0.04 * 7000.0, max_relative = 1e-12);
        assert_relative_eq!(d.i[basic::HETM], -74.9, epsilon = 0.1);
    }

    #[test]
    fn risk_hetm_vector_has_two_entries() {
        let (spec, y0) = presets::georgia_risk();
        let lam = build_lambda_vectors(&spec, &y0).unwrap();
        let nz: Vec<usize> = lam
            .row(risk::HETM)
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, _)| i)
            .collect();
        assert_eq!(nz, vec![2 * risk::HETF_H + 1, 2 * risk::HETF_L + 1]);
    }

    #[test]
    fn zero_betas_give_zero_vectors() {
        let (mut spec, y0) = presets::georgia_basic();
        spec.probs = TransmissionProbs {
            beta_mm: 0.0,
            beta_fm: 0.0,
            beta_mf: 0.0,
        };
        let lam = build_lambda_vectors(&spec, &y0).unwrap();
        assert!(lam.coef.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn dfe_is_equilibrium() {
        for spec in [presets::georgia_basic().0, presets::georgia_risk_pinned()] {
            let e = dfe(&spec);
            assert_relative_eq!(e.s[0], spec.groups[0].pi / spec.mu);
            let d = rhs(&spec, &e, 0.0).unwrap();
            for j in 0..spec.n_groups() {
                assert!(d.s[j].abs() < 1e-9 * e.s[j]);
                assert_eq!(d.i[j], 0.0);
            }
        }
        let (spec, _) = presets::georgia_basic();
        assert_relative_eq!(dfe(&spec).s[basic::MSM], 193_700.0, max_relative = 1e-12);
    }

    #[test]
    fn full_prep_blocks_infection() {
        let (mut spec, y0) = presets::georgia_risk();
        for g in &mut spec.groups {
            g.epsilon = 1.0;
        }
        let d = rhs(&spec, &y0, 0.0).unwrap();
        for j in 0..4 {
            assert_eq!(d.i[j], -(spec.mu + spec.groups[j].delta) * y0.i[j]);
        }
        assert!(incidence(&spec, &y0).unwrap().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn zero_population_is_rejected() {
        let (spec, mut y0) = presets::georgia_basic();
        y0.s[basic::HETM] = 0.0;
        y0.i[basic::HETM] = 0.0;
        assert!(matches!(
            build_lambda_vectors(&spec, &y0),
            Err(Error::ZeroPopulation { .. })
        ));
    }

    #[test]
    fn unknown_group_label() {
        assert!(matches!(Variant::Basic.group("pwid"), Err(Error::UnknownGroup(_))));
        assert_eq!(Variant::Risk.group("hetf_l").unwrap().index, 2);
    }
}
