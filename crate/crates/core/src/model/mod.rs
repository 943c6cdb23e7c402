//! Markov-up laws: distributions, memory states, process specifications,
//! assumption audits and derived constants.

pub mod constants;
pub mod distribution;
pub mod memory;
pub mod spec;
pub mod validate;

use thiserror::Error;

pub use constants::{derived_constants, Certified, DerivedConstants, DEFAULT_TAIL_TOLERANCE};
pub use distribution::Distribution;
pub use memory::MemoryState;
pub use spec::{DownRule, KappaSchedule, KappaTail, ProcessSpec, SpecDocument};
pub use validate::{validate_spec, FallAudit, ValidationReport, Violation};

#[derive(Debug, Error)]
pub enum ModelError {
    /// The input is not a well-formed law (structural, not an assumption).
    #[error("malformed specification: {0}")]
    Malformed(String),
    #[error("domain error: {0}")]
    Domain(String),
    /// A declared assumption cannot be certified.
    #[error("assumption violated: {0}")]
    Assumption(String),
    #[error("more than {0} memory states reachable")]
    TooManyStates(usize),
}

/// Memory after a move to `next`.
pub fn memory_update(mem: &MemoryState, next: u32) -> MemoryState {
    mem.update(next)
}

/// Next-state law for `mem` under `spec`.
pub fn next_distribution(
    spec: &ProcessSpec,
    mem: &MemoryState,
) -> Result<Distribution, ModelError> {
    spec.next_distribution(mem)
}
