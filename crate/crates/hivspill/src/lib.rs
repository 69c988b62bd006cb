#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

//! Group-structured HIV transmission models with PrEP interventions:
//! simulation, forward spillover sensitivities, NNT, reproduction numbers and
//! variance-based sensitivity analysis.

pub mod closure;
pub mod error;
pub mod integrate;
pub mod model;
pub mod ngm;
pub mod scenario;
pub mod sobol;
pub mod spillover;

pub use error::{Error, Result};
pub use integrate::{integrate, IntegratorConfig, Method, Trajectory};
pub use model::{GroupId, GroupParams, MixingFractions, ModelSpec, StateVec, TransmissionProbs, Variant};
