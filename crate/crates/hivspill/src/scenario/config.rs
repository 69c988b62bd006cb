//! JSON scenario configuration.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::presets;
use crate::error::{Error, Result};
use crate::integrate::Method;
use crate::model::{MixingFractions, ModelSpec, StateVec, TransmissionProbs, Variant};
use crate::sobol::Rule;
use crate::spillover::SpilloverForm;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupOverride {
    pub pi: Option<f64>,
    pub a: Option<f64>,
    pub delta: Option<f64>,
    pub epsilon: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbsOverride {
    pub beta_mm: Option<f64>,
    pub beta_fm: Option<f64>,
    pub beta_mf: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Overrides {
    pub mu: Option<f64>,
    #[serde(default)]
    pub groups: BTreeMap<String, GroupOverride>,
    #[serde(default)]
    pub probs: ProbsOverride,
    pub priors: Option<MixingFractions>,
    /// Pins the mixing fractions instead of closing them at every step.
    pub mixing: Option<MixingFractions>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialGroup {
    pub s: f64,
    pub i: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Intervention {
    pub label: Option<String>,
    pub group: String,
    pub additional_persons: f64,
    #[serde(default = "default_start")]
    pub start_year: i32,
}

fn default_start() -> i32 {
    presets::INTERVENTION_YEAR
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SobolOutput {
    #[serde(default)]
    pub rule: Rule,
    #[serde(default = "default_level")]
    pub level: usize,
    #[serde(default = "default_degree")]
    pub total_degree: usize,
    pub refine_level: Option<usize>,
    #[serde(default = "default_lo")]
    pub theta_lo: f64,
    #[serde(default = "default_hi")]
    pub theta_hi: f64,
    #[serde(default = "default_true")]
    pub null_input: bool,
}

fn default_level() -> usize {
    5
}
fn default_degree() -> usize {
    4
}
fn default_lo() -> f64 {
    -0.5
}
fn default_hi() -> f64 {
    4.0
}
fn default_true() -> bool {
    true
}
fn default_horizon() -> f64 {
    10.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Outputs {
    #[serde(default = "default_true")]
    pub trajectories: bool,
    #[serde(default)]
    pub spillover_sources: Vec<String>,
    #[serde(default)]
    pub spillover_form: SpilloverForm,
    /// `(target, source)` pairs.
    #[serde(default)]
    pub nnt_pairs: Vec<(String, String)>,
    #[serde(default = "default_horizon")]
    pub nnt_horizon: f64,
    pub sobol: Option<SobolOutput>,
}

impl Default for Outputs {
    fn default() -> Self {
        Outputs {
            trajectories: true,
            spillover_sources: Vec::new(),
            spillover_form: SpilloverForm::default(),
            nnt_pairs: Vec::new(),
            nnt_horizon: default_horizon(),
            sobol: None,
        }
    }
}

/// Raw file contents; every field except `model` may be omitted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub schema_version: Option<u32>,
    pub model: Variant,
    #[serde(default)]
    pub overrides: Overrides,
    #[serde(default)]
    pub initial_conditions: BTreeMap<String, InitialGroup>,
    pub baseline_prep_persons: Option<BTreeMap<String, f64>>,
    pub start_year: Option<i32>,
    pub report_first_year: Option<i32>,
    pub report_last_year: Option<i32>,
    #[serde(default)]
    pub interventions: Vec<Intervention>,
    #[serde(default)]
    pub recompute_epsilon: bool,
    pub integrator: Option<Method>,
    #[serde(default)]
    pub outputs: Outputs,
}

/// Validated configuration with every default filled in.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScenarioConfig {
    pub spec: ModelSpec,
    pub initial: StateVec,
    pub baseline_prep_persons: Vec<f64>,
    pub start_year: i32,
    pub report_first_year: i32,
    pub report_last_year: i32,
    pub interventions: Vec<ResolvedIntervention>,
    pub recompute_epsilon: bool,
    pub method: Method,
    pub outputs: Outputs,
    /// SHA-256 of the canonical JSON of the validated configuration.
    pub hash: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResolvedIntervention {
    pub label: String,
    pub group: usize,
    pub additional_persons: f64,
    pub start_year: i32,
}

fn schema(key: impl Into<String>, msg: impl Into<String>) -> Error {
    Error::SchemaViolation {
        key: key.into(),
        msg: msg.into(),
    }
}

pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    let raw: RawConfig = serde_path_to_error::deserialize(value).map_err(|e| {
        let key = e.path().to_string();
        schema(key, e.into_inner().to_string())
    })?;
    resolve(raw)
}

pub fn load_config(path: &Path) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_config(&text)
}

fn check_nonneg(key: &str, v: f64) -> Result<()> {
    if !(v >= 0.0 && v.is_finite()) {
        return Err(schema(key, format!("must be a finite number >= 0, got {v}")));
    }
    Ok(())
}

pub fn resolve(raw: RawConfig) -> Result<ScenarioConfig> {
    if let Some(v) = raw.schema_version {
        if v != SCHEMA_VERSION {
            return Err(schema("schema_version", format!("unsupported version {v}, expected {SCHEMA_VERSION}")));
        }
    }
    let variant = raw.model;
    let (mut spec, mut initial) = presets::georgia(variant);
    let ov = &raw.overrides;
    if let Some(mu) = ov.mu {
        if !(mu > 0.0) {
            return Err(schema("overrides.mu", "must be > 0"));
        }
        spec.mu = mu;
    }
    for (label, g) in &ov.groups {
        let j = variant.group(label)?.index;
        let target = &mut spec.groups[j];
        for (name, val, slot) in [
            ("pi", g.pi, &mut target.pi),
            ("a", g.a, &mut target.a),
            ("delta", g.delta, &mut target.delta),
            ("epsilon", g.epsilon, &mut target.epsilon),
        ] {
            if let Some(v) = val {
                check_nonneg(&format!("overrides.groups.{label}.{name}"), v)?;
                *slot = v;
            }
        }
        if target.epsilon > 1.0 {
            return Err(schema(format!("overrides.groups.{label}.epsilon"), "must be <= 1"));
        }
    }
    let p = &ov.probs;
    let probs: &mut TransmissionProbs = &mut spec.probs;
    for (name, val, slot) in [
        ("beta_mm", p.beta_mm, &mut probs.beta_mm),
        ("beta_fm", p.beta_fm, &mut probs.beta_fm),
        ("beta_mf", p.beta_mf, &mut probs.beta_mf),
    ] {
        if let Some(v) = val {
            if !(0.0..=1.0).contains(&v) {
                return Err(schema(format!("overrides.probs.{name}"), "must lie in [0, 1]"));
            }
            *slot = v;
        }
    }
    for (key, m) in [("overrides.priors", ov.priors), ("overrides.mixing", ov.mixing)] {
        if m.is_some_and(|m| m.variant() != variant) {
            return Err(schema(key, format!("fractions do not match the {variant} variant")));
        }
    }
    if let Some(m) = ov.priors {
        spec.priors = m;
    }
    if ov.mixing.is_some() {
        spec.mixing = ov.mixing;
    }
    spec.validate().map_err(|e| schema("overrides", e.to_string()))?;

    for (label, g) in &raw.initial_conditions {
        let j = variant.group(label)?.index;
        check_nonneg(&format!("initial_conditions.{label}.s"), g.s)?;
        check_nonneg(&format!("initial_conditions.{label}.i"), g.i)?;
        initial.s[j] = g.s;
        initial.i[j] = g.i;
    }
    let mut prep = presets::baseline_prep_persons(variant);
    if let Some(map) = &raw.baseline_prep_persons {
        for (label, v) in map {
            let j = variant.group(label)?.index;
            check_nonneg(&format!("baseline_prep_persons.{label}"), *v)?;
            prep[j] = *v;
        }
    }

    let start_year = raw.start_year.unwrap_or(presets::START_YEAR);
    let first = raw.report_first_year.unwrap_or(presets::REPORT_FIRST_YEAR);
    let last = raw.report_last_year.unwrap_or(presets::REPORT_LAST_YEAR);
    if last < first {
        return Err(Error::Config(format!(
            "reporting window {first}..={last} is empty (report_last_year precedes report_first_year)"
        )));
    }
    if first < start_year {
        return Err(schema("report_first_year", format!("precedes start_year {start_year}")));
    }

    let mut interventions = Vec::new();
    for (n, iv) in raw.interventions.iter().enumerate() {
        let key = format!("interventions[{n}]");
        let group = variant.group(&iv.group)?.index;
        if !(iv.additional_persons >= 0.0 && iv.additional_persons.is_finite()) {
            return Err(schema(
                format!("{key}.additional_persons"),
                format!("must be >= 0, got {}", iv.additional_persons),
            ));
        }
        if iv.start_year < start_year || iv.start_year > last + 1 {
            return Err(schema(
                format!("{key}.start_year"),
                format!("{} lies outside {start_year}..={}", iv.start_year, last + 1),
            ));
        }
        interventions.push(ResolvedIntervention {
            label: iv
                .label
                .clone()
                .unwrap_or_else(|| format!("{}_{}", iv.group, iv.additional_persons)),
            group,
            additional_persons: iv.additional_persons,
            start_year: iv.start_year,
        });
    }

    let mut outputs = raw.outputs.clone();
    for (n, s) in outputs.spillover_sources.iter().enumerate() {
        variant
            .group(s)
            .map_err(|e| e.context(format!("outputs.spillover_sources[{n}]")))?;
    }
    for (n, (j, k)) in outputs.nnt_pairs.iter().enumerate() {
        for l in [j, k] {
            variant.group(l).map_err(|e| e.context(format!("outputs.nnt_pairs[{n}]")))?;
        }
    }
    if !(outputs.nnt_horizon > 0.0) || outputs.nnt_horizon.fract() != 0.0 {
        return Err(schema("outputs.nnt_horizon", "must be a positive whole number of years"));
    }
    if outputs.spillover_form == SpilloverForm::XiCorrected && variant != Variant::Basic {
        return Err(schema("outputs.spillover_form", "xi_corrected is only available for the basic model"));
    }
    if let Some(s) = &mut outputs.sobol {
        if !(s.theta_lo <= s.theta_hi) || s.theta_lo < -1.0 {
            return Err(schema("outputs.sobol", "need -1 <= theta_lo <= theta_hi"));
        }
        if s.level == 0 {
            return Err(schema("outputs.sobol.level", "must be >= 1"));
        }
    }
    let method = raw.integrator.unwrap_or_default();

    let mut cfg = ScenarioConfig {
        spec,
        initial,
        baseline_prep_persons: prep,
        start_year,
        report_first_year: first,
        report_last_year: last,
        interventions,
        recompute_epsilon: raw.recompute_epsilon,
        method,
        outputs,
        hash: String::new(),
    };
    let canonical = serde_json::to_vec(&cfg)?;
    cfg.hash = format!("{:x}", Sha256::digest(&canonical));
    Ok(cfg)
}

impl ScenarioConfig {
    /// Defaults for a variant with the nine (basic) or twelve (risk) reference
    /// interventions.
    pub fn preset(variant: Variant) -> Self {
        let groups: Vec<&str> = variant.labels().to_vec();
        let interventions = groups
            .iter()
            .flat_map(|g| {
                [10_000.0, 25_000.0, 50_000.0].map(|n| Intervention {
                    label: None,
                    group: g.to_string(),
                    additional_persons: n,
                    start_year: presets::INTERVENTION_YEAR,
                })
            })
            .collect();
        resolve(RawConfig {
            schema_version: Some(SCHEMA_VERSION),
            model: variant,
            overrides: Overrides::default(),
            initial_conditions: BTreeMap::new(),
            baseline_prep_persons: None,
            start_year: None,
            report_first_year: None,
            report_last_year: None,
            interventions,
            recompute_epsilon: false,
            integrator: None,
            outputs: Outputs::default(),
        })
        .expect("preset configuration is valid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_overrides_echo_preset() {
        let cfg = parse_config(r#"{"model": "basic"}"#).unwrap();
        let (spec, y0) = presets::georgia_basic();
        assert_eq!(cfg.spec, spec);
        assert_eq!(cfg.initial, y0);
        assert_eq!((cfg.report_first_year, cfg.report_last_year), (2020, 2030));
    }

    #[test]
    fn unknown_group() {
        let e = parse_config(r#"{"model": "basic", "interventions": [{"group": "pwid", "additional_persons": 5}]}"#)
            .unwrap_err();
        assert!(matches!(e, Error::UnknownGroup(ref g) if g == "pwid"), "{e:?}");
    }

    #[test]
    fn negative_persons() {
        let e = parse_config(r#"{"model": "basic", "interventions": [{"group": "msm", "additional_persons": -5}]}"#)
            .unwrap_err();
        match e {
            Error::SchemaViolation { key, .. } => assert_eq!(key, "interventions[0].additional_persons"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_key_is_named() {
        let e = parse_config(r#"{"model": "basic", "overrides": {"groups": {"msm": {"pie": 1}}}}"#).unwrap_err();
        match e {
            Error::SchemaViolation { key, msg } => {
                assert!(key.starts_with("overrides.groups"), "{key}");
                assert!(msg.contains("pie"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn syntax_error_is_parse() {
        assert!(matches!(parse_config("{model: basic"), Err(Error::Parse(_))));
    }

    #[test]
    fn empty_window_is_config_error() {
        let e = parse_config(r#"{"model": "risk", "report_first_year": 2025, "report_last_year": 2024}"#).unwrap_err();
        assert!(matches!(e, Error::Config(_)));
    }

    #[test]
    fn hash_tracks_content() {
        let a = parse_config(r#"{"model": "basic"}"#).unwrap();
        let b = parse_config(r#"{"model": "basic", "schema_version": 1}"#).unwrap();
        let c = parse_config(r#"{"model": "basic", "overrides": {"mu": 0.021}}"#).unwrap();
        assert_eq!(a.hash, b.hash);
        assert_ne!(a.hash, c.hash);
    }
}
