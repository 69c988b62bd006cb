#![allow(dead_code)]

use hivspill::model::{dfe, MixingFractions, ModelSpec, Variant};
use hivspill::scenario::presets;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Preset with every rate scaled by a random factor. Mixing is closed at the
/// disease-free equilibrium when that is feasible, otherwise pinned to random
/// fractions.
pub fn random_spec(variant: Variant, rng: &mut ChaCha8Rng) -> ModelSpec {
    let (mut spec, _) = presets::georgia(variant);
    for g in &mut spec.groups {
        g.pi *= rng.gen_range(0.5..1.5);
        g.a *= rng.gen_range(0.5..1.5);
        g.delta *= rng.gen_range(0.0..2.0);
        g.epsilon = rng.gen_range(0.0..0.6);
    }
    spec.probs.beta_mm *= rng.gen_range(0.3..3.0);
    spec.probs.beta_fm *= rng.gen_range(0.3..3.0);
    spec.probs.beta_mf *= rng.gen_range(0.3..3.0);
    spec.mu *= rng.gen_range(0.8..1.2);
    let n = dfe(&spec).populations();
    if spec.mixing_at(&n, None).is_err() {
        spec.mixing = Some(random_mixing(variant, rng));
    }
    spec
}

pub fn random_mixing(variant: Variant, rng: &mut ChaCha8Rng) -> MixingFractions {
    match variant {
        Variant::Basic => MixingFractions::Basic {
            eta_msm: rng.gen_range(0.3..0.99),
            alpha_hetf: rng.gen_range(0.0..0.2),
        },
        Variant::Risk => {
            let eta_msm = rng.gen_range(0.3..0.95);
            MixingFractions::Risk {
                eta_msm,
                eta_hetfh: rng.gen_range(0.0..1.0 - eta_msm),
                alpha_hetfh: rng.gen_range(0.0..0.3),
                alpha_hetfl: rng.gen_range(0.0..0.1),
                xi_hetm: rng.gen_range(0.0..0.05),
            }
        }
    }
}

/// Preset with `delta = 0` in every group; the risk preset gets its mixing
/// pinned at the initial populations.
pub fn no_removal(variant: Variant) -> ModelSpec {
    let mut spec = match variant {
        Variant::Basic => presets::georgia_basic().0,
        Variant::Risk => presets::georgia_risk_pinned(),
    };
    for g in &mut spec.groups {
        g.delta = 0.0;
    }
    spec
}
