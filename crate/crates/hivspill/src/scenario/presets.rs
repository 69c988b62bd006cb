//! Georgia calibration presets for both model variants.

use crate::model::{GroupParams, MixingFractions, ModelSpec, StateVec, TransmissionProbs, Variant};

/// Year of the initial conditions.
pub const START_YEAR: i32 = 2017;
/// Year interventions begin.
pub const INTERVENTION_YEAR: i32 = 2020;
pub const REPORT_FIRST_YEAR: i32 = 2020;
pub const REPORT_LAST_YEAR: i32 = 2030;

const MU: f64 = 1.0 / 50.0;

const PROBS: TransmissionProbs = TransmissionProbs {
    beta_mm: 0.0008,
    beta_fm: 0.0003,
    beta_mf: 0.0004,
};

fn group(pi: f64, a: f64, delta: f64, epsilon: f64) -> GroupParams {
    GroupParams { pi, a, delta, epsilon }
}

pub fn georgia_basic() -> (ModelSpec, StateVec) {
    let spec = ModelSpec {
        variant: Variant::Basic,
        groups: vec![
            group(3874.0, 94.7, 1.0 / 200.0, 0.089),
            group(65497.0, 47.3, 1.0 / 100.0, 0.0003),
            group(63549.0, 48.5, 1.0 / 50.0, 0.0),
        ],
        probs: PROBS,
        mu: MU,
        priors: MixingFractions::Basic {
            eta_msm: 0.858,
            alpha_hetf: 0.02,
        },
        mixing: None,
    };
    let y0 = StateVec::new(
        vec![123_418.0, 3_260_101.0, 3_138_939.0],
        vec![42_000.0, 14_700.0, 7_000.0],
    );
    (spec, y0)
}

pub fn georgia_risk() -> (ModelSpec, StateVec) {
    let spec = ModelSpec {
        variant: Variant::Risk,
        groups: vec![
            group(3784.0, 94.7, 1.0 / 200.0, 0.089),
            group(3275.0, 91.0, 1.0 / 50.0, 0.0061),
            group(62222.0, 43.7, 1.0 / 100.0, 0.0),
            group(63549.0, 48.5, 1.0 / 50.0, 0.0),
        ],
        probs: PROBS,
        mu: MU,
        priors: MixingFractions::Risk {
            eta_msm: 0.858,
            eta_hetfh: 0.071,
            alpha_hetfh: 0.06,
            alpha_hetfl: 0.01,
            xi_hetm: 0.005,
        },
        mixing: None,
    };
    let y0 = StateVec::new(
        vec![123_418.0, 243_340.0, 3_016_762.0, 3_138_939.0],
        vec![42_000.0, 8_820.0, 5_880.0, 7_000.0],
    );
    (spec, y0)
}

pub fn georgia(variant: Variant) -> (ModelSpec, StateVec) {
    match variant {
        Variant::Basic => georgia_basic(),
        Variant::Risk => georgia_risk(),
    }
}

/// Persons on PrEP behind the preset fractions.
pub fn baseline_prep_persons(variant: Variant) -> Vec<f64> {
    match variant {
        Variant::Basic => vec![11_000.0, 1_000.0, 0.0],
        Variant::Risk => vec![11_000.0, 1_000.0, 0.0, 0.0],
    }
}

/// Risk preset with the mixing fractions pinned to their closure at the
/// initial populations. The dynamic closure has no feasible solution at the
/// disease-free equilibrium, so analyses there need this form.
pub fn georgia_risk_pinned() -> ModelSpec {
    let (spec, y0) = georgia_risk();
    spec.pinned_at(&y0.populations())
        .expect("risk preset closure is feasible at the initial populations")
}
