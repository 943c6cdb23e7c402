//! Estimators with confidence intervals, bound verification and
//! cross-checks between simulation and the exact chain.

pub mod bounds;
pub mod embedding;
pub mod stationary;
pub mod stats;

use thiserror::Error;

use crate::exact::ExactError;
use crate::model::ModelError;
use crate::simulate::SimError;

pub use bounds::{verify_bounds, verify_bounds_with_constants, BoundReport, Claim, ClaimRecord};
pub use embedding::{embedding_consistency_check, EmbeddingReport, DEFAULT_MIN_VISITS};
pub use stationary::{
    exact_projection_estimate, occupation_estimate, regen_stationary_estimate, EstimateMethod,
    StationaryEstimate, DEFAULT_CYCLE_CAP,
};
pub use stats::{affine_fit, tv_distance, AffineFit, MeanEstimate, Z_99};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Exact(#[from] ExactError),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("regeneration cycle {cycle} exceeded {steps} steps (last memory {state})")]
    CensoredCycle {
        cycle: u64,
        steps: u64,
        state: String,
    },
}
