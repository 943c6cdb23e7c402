//! Simulation and exact analysis of Markov-up processes: integer chains that
//! are Markov on up/stay moves and remember the current strict fall while
//! going down.
//!
//! * [`model`] defines laws, memory states and the assumption constants.
//! * [`simulate`] generates seeded trajectories and hitting-time samples.
//! * [`exact`] builds the finite Markov embedding on memory states and
//!   solves it.
//! * [`analysis`] holds Monte Carlo estimators, bound verification and
//!   cross-checks against the exact chain.

pub mod analysis;
pub mod exact;
pub mod io;
pub mod model;
pub mod simulate;

pub use model::{MemoryState, ProcessSpec};
