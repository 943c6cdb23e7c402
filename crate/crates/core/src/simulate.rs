//! Seeded trajectory generation, run segmentation and hitting-time sampling.
//!
//! Every random draw is `u = (w >> 11) · 2^-53` where `w` is the next word
//! of a `ChaCha8Rng` seeded with `seed_from_u64(seed)`; the next state is
//! the inverse CDF of `u` over the next-state support in ascending order.
//! Replication `i` of a batch seeded with `s` uses the seed `s + i`
//! (wrapping), so any replication can be rerun in isolation.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::distribution::sample_atoms;
use crate::model::{MemoryState, ModelError, ProcessSpec};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("domain error: {0}")]
    Domain(String),
}

/// Seed of replication `index` in a batch seeded with `seed`.
pub fn replication_seed(seed: u64, index: u64) -> u64 {
    seed.wrapping_add(index)
}

/// Uniform stream on `[0, 1)` with 53-bit resolution.
#[derive(Debug, Clone)]
pub struct UniformStream {
    rng: ChaCha8Rng,
}

impl UniformStream {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    #[inline]
    pub fn next_uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

/// Step-by-step simulator holding the current memory state.
#[derive(Debug, Clone)]
pub struct Walker<'a> {
    spec: &'a ProcessSpec,
    memory: MemoryState,
    rng: UniformStream,
    atoms: Vec<(u32, f64)>,
    time: u64,
}

impl<'a> Walker<'a> {
    pub fn new(spec: &'a ProcessSpec, initial: MemoryState, seed: u64) -> Result<Self, SimError> {
        spec.check_memory(&initial)?;
        Ok(Self {
            spec,
            memory: initial,
            rng: UniformStream::new(seed),
            atoms: Vec::with_capacity(4),
            time: 0,
        })
    }

    pub fn state(&self) -> u32 {
        self.memory.current()
    }

    pub fn memory(&self) -> &MemoryState {
        &self.memory
    }

    pub fn time(&self) -> u64 {
        self.time
    }

    /// Advances one step and returns the new state.
    pub fn step(&mut self) -> u32 {
        self.spec.fill_next(&self.memory, &mut self.atoms);
        let next = sample_atoms(&self.atoms, self.rng.next_uniform());
        self.memory.advance(next);
        self.time += 1;
        next
    }
}

/// Builds the initial memory from `x0` and an optional declared fall path
/// (current state first).
pub fn initial_memory(
    spec: &ProcessSpec,
    x0: u32,
    initial_past: Option<&MemoryState>,
) -> Result<MemoryState, SimError> {
    let mem = match initial_past {
        None => MemoryState::singleton(x0),
        Some(m) if m.current() == x0 => m.clone(),
        Some(m) => {
            return Err(SimError::Domain(format!(
                "initial past {m} does not start at x0 = {x0}"
            )))
        }
    };
    spec.check_memory(&mem)?;
    Ok(mem)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<u32>,
    pub memories: Vec<MemoryState>,
    pub seed: u64,
    pub spec_id: String,
}

/// `(zeta_n, xi_n, chi_n)` with censoring flags for the horizon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentIndices {
    /// Start of the current strict fall; `None` when the last move was up or
    /// stay. Negative values point into the declared fictitious past.
    pub zeta: Option<i64>,
    /// First `k >= n` with `X_{k+1} < X_k` (peak time).
    pub xi: usize,
    pub xi_censored: bool,
    /// First `k >= n` with `X_{k+1} >= X_k` (trough time).
    pub chi: usize,
    pub chi_censored: bool,
}

impl Trajectory {
    /// Number of steps `T`.
    pub fn horizon(&self) -> usize {
        self.states.len() - 1
    }

    pub fn segment_indices(&self, n: usize) -> Result<SegmentIndices, SimError> {
        let horizon = self.horizon();
        if n > horizon {
            return Err(SimError::Domain(format!(
                "index {n} beyond horizon {horizon}"
            )));
        }
        let x = &self.states;
        let initial_fall = self.memories[0].fall_length() as i64;
        let zeta = if n == 0 {
            (initial_fall > 0).then_some(-initial_fall)
        } else if x[n - 1] <= x[n] {
            None
        } else {
            let mut k = n - 1;
            while k > 0 && x[k - 1] > x[k] {
                k -= 1;
            }
            Some(if k == 0 { -initial_fall } else { k as i64 })
        };
        let first = |pred: &dyn Fn(u32, u32) -> bool| {
            (n..horizon)
                .find(|&k| pred(x[k], x[k + 1]))
                .map_or((horizon, true), |k| (k, false))
        };
        let (xi, xi_censored) = first(&|a, b| b < a);
        let (chi, chi_censored) = first(&|a, b| b >= a);
        Ok(SegmentIndices {
            zeta,
            xi,
            xi_censored,
            chi,
            chi_censored,
        })
    }
}

/// Generates `X_0, ..., X_T` with per-step memories.
pub fn simulate_trajectory(
    spec: &ProcessSpec,
    x0: u32,
    initial_past: Option<&MemoryState>,
    horizon: usize,
    seed: u64,
) -> Result<Trajectory, SimError> {
    let start = initial_memory(spec, x0, initial_past)?;
    let mut walker = Walker::new(spec, start.clone(), seed)?;
    let mut states = Vec::with_capacity(horizon + 1);
    let mut memories = Vec::with_capacity(horizon + 1);
    states.push(x0);
    memories.push(start);
    for _ in 0..horizon {
        states.push(walker.step());
        memories.push(walker.memory().clone());
    }
    Ok(Trajectory {
        states,
        memories,
        seed,
        spec_id: spec.id().to_string(),
    })
}

/// One replication of `τ = inf{t >= 0: X_t <= N}` and
/// `γ = inf{t >= τ: X_{t-1} <= X_t = N}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HittingSample {
    pub tau: Option<u64>,
    pub gamma: Option<u64>,
    /// The horizon cap was reached before `γ`.
    pub censored: bool,
}

/// Runs one replication from `initial` for at most `cap` steps.
///
/// `X_{t-1} <= X_t = N` is the same as the memory being the singleton
/// `(N)`; at `t = 0` a singleton start memory stands for a fictitious
/// `X_{-1} <= X_0`.
pub fn hitting_sample(
    spec: &ProcessSpec,
    initial: &MemoryState,
    cap: u64,
    seed: u64,
) -> Result<HittingSample, SimError> {
    if cap == 0 {
        return Err(SimError::Domain("horizon cap must be positive".into()));
    }
    let floor = spec.floor();
    let mut walker = Walker::new(spec, initial.clone(), seed)?;
    let mut tau = None;
    loop {
        let t = walker.time();
        let mem = walker.memory();
        if tau.is_none() && mem.current() <= floor {
            tau = Some(t);
        }
        if tau.is_some() && mem.is_singleton() && mem.current() == floor {
            return Ok(HittingSample {
                tau,
                gamma: Some(t),
                censored: false,
            });
        }
        if t >= cap {
            return Ok(HittingSample {
                tau,
                gamma: None,
                censored: true,
            });
        }
        walker.step();
    }
}

/// `replications` independent hitting samples from the singleton `(x0)`.
pub fn sample_hitting_times(
    spec: &ProcessSpec,
    x0: u32,
    replications: usize,
    cap: u64,
    seed: u64,
) -> Result<Vec<HittingSample>, SimError> {
    let initial = initial_memory(spec, x0, None)?;
    sample_hitting_times_from(spec, &initial, replications, cap, seed)
}

pub fn sample_hitting_times_from(
    spec: &ProcessSpec,
    initial: &MemoryState,
    replications: usize,
    cap: u64,
    seed: u64,
) -> Result<Vec<HittingSample>, SimError> {
    if replications == 0 {
        return Err(SimError::Domain("need at least one replication".into()));
    }
    if cap == 0 {
        return Err(SimError::Domain("horizon cap must be positive".into()));
    }
    (0..replications as u64)
        .into_par_iter()
        .map(|i| hitting_sample(spec, initial, cap, replication_seed(seed, i)))
        .collect()
}
