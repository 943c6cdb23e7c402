//! Estimators of the stationary `X`-marginal: regeneration cycles started at
//! `(N)`, long-run occupation, and the exact projection of `π`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::exact::{stationary_distribution, ExtendedChain};
use crate::model::{MemoryState, ProcessSpec};
use crate::simulate::{replication_seed, Walker};

/// Default step limit for a single regeneration cycle.
pub const DEFAULT_CYCLE_CAP: u64 = 10_000_000;

const CYCLES_PER_CHUNK: u64 = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimateMethod {
    Regeneration,
    Occupation,
    ExactProjection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryEstimate {
    pub spec_id: String,
    pub method: EstimateMethod,
    /// `X`-states `0..=Nbar`.
    pub support: Vec<u32>,
    pub probs: Vec<f64>,
    pub cycles: Option<u64>,
    pub steps: Option<u64>,
    pub seed: Option<u64>,
}

fn normalized(counts: &[u64]) -> Vec<f64> {
    let total: u64 = counts.iter().sum();
    counts.iter().map(|&c| c as f64 / total as f64).collect()
}

/// Visits at times `1..=γ` of one cycle from `(N)`, where `γ` is the next
/// `t >= 1` with `X_{t-1} <= X_t = N`.
fn run_cycle(
    spec: &ProcessSpec,
    counts: &mut [u64],
    cycle: u64,
    seed: u64,
    cap: u64,
) -> Result<(), AnalysisError> {
    let floor = spec.floor();
    let mut w = Walker::new(spec, MemoryState::singleton(floor), seed)?;
    loop {
        if w.time() >= cap {
            return Err(AnalysisError::CensoredCycle {
                cycle,
                steps: w.time(),
                state: w.memory().to_string(),
            });
        }
        let x = w.step();
        counts[x as usize] += 1;
        if x == floor && w.memory().is_singleton() {
            return Ok(());
        }
    }
}

/// Ratio estimator over `cycles` i.i.d. regeneration cycles; cycle `i` is
/// seeded with `seed + i`.
pub fn regen_stationary_estimate(
    spec: &ProcessSpec,
    cycles: u64,
    seed: u64,
    cycle_cap: u64,
) -> Result<StationaryEstimate, AnalysisError> {
    let ceiling = spec.finite_ceiling("the regeneration estimator")?;
    if cycles == 0 {
        return Err(AnalysisError::Domain("need at least one cycle".into()));
    }
    let width = ceiling as usize + 1;
    let chunks = cycles.div_ceil(CYCLES_PER_CHUNK);
    let partial: Vec<Result<Vec<u64>, AnalysisError>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut counts = vec![0u64; width];
            let end = ((c + 1) * CYCLES_PER_CHUNK).min(cycles);
            for i in c * CYCLES_PER_CHUNK..end {
                run_cycle(spec, &mut counts, i, replication_seed(seed, i), cycle_cap)?;
            }
            Ok(counts)
        })
        .collect();
    let mut counts = vec![0u64; width];
    for chunk in partial {
        for (acc, c) in counts.iter_mut().zip(chunk?) {
            *acc += c;
        }
    }
    Ok(StationaryEstimate {
        spec_id: spec.id().to_string(),
        method: EstimateMethod::Regeneration,
        support: (0..=ceiling).collect(),
        probs: normalized(&counts),
        cycles: Some(cycles),
        steps: Some(counts.iter().sum()),
        seed: Some(seed),
    })
}

/// Empirical frequencies of `X_t` for `burn_in < t <= steps` from `(x0)`.
pub fn occupation_estimate(
    spec: &ProcessSpec,
    x0: u32,
    steps: u64,
    burn_in: u64,
    seed: u64,
) -> Result<StationaryEstimate, AnalysisError> {
    if steps <= burn_in {
        return Err(AnalysisError::Domain(format!(
            "steps ({steps}) must exceed burn-in ({burn_in})"
        )));
    }
    let mut w = Walker::new(spec, MemoryState::singleton(x0), seed)?;
    let mut counts: Vec<u64> = vec![0; spec.ceiling().map_or(x0 as usize + 1, |c| c as usize + 1)];
    for _ in 0..burn_in {
        w.step();
    }
    for _ in burn_in..steps {
        let x = w.step() as usize;
        if x >= counts.len() {
            counts.resize(x + 1, 0);
        }
        counts[x] += 1;
    }
    Ok(StationaryEstimate {
        spec_id: spec.id().to_string(),
        method: EstimateMethod::Occupation,
        support: (0..counts.len() as u32).collect(),
        probs: normalized(&counts),
        cycles: None,
        steps: Some(steps),
        seed: Some(seed),
    })
}

/// `X`-marginal of the exact stationary law of the extended chain.
pub fn exact_projection_estimate(
    spec: &ProcessSpec,
    chain: &ExtendedChain,
) -> Result<StationaryEstimate, AnalysisError> {
    let pi = stationary_distribution(chain)?;
    Ok(StationaryEstimate {
        spec_id: spec.id().to_string(),
        method: EstimateMethod::ExactProjection,
        support: (0..=chain.ceiling()).collect(),
        probs: chain.x_marginal(&pi),
        cycles: None,
        steps: None,
        seed: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SpecDocument;

    #[test]
    fn regeneration_sums_to_one_and_is_deterministic() {
        let spec = ProcessSpec::rm1();
        let a = regen_stationary_estimate(&spec, 300, 5, DEFAULT_CYCLE_CAP).unwrap();
        let b = regen_stationary_estimate(&spec, 300, 5, DEFAULT_CYCLE_CAP).unwrap();
        assert_eq!(a, b);
        assert!((a.probs.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        assert_eq!(&a.probs[..3], &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn censored_cycle_is_an_error() {
        let spec = ProcessSpec::rm1();
        let err = regen_stationary_estimate(&spec, 50, 1, 1).unwrap_err();
        assert!(matches!(err, AnalysisError::CensoredCycle { .. }));
    }

    #[test]
    fn occupation_guards() {
        let spec = ProcessSpec::rm1();
        assert!(occupation_estimate(&spec, 5, 10, 10, 0).is_err());
    }

    #[test]
    fn degenerate_spec_stays_on_the_floor() {
        // never leaves {0, 1, 2, 3}
        let up = (0..=6u32)
            .map(|x| {
                let atoms = if x <= 2 {
                    vec![(x, 0.5), (x + 1, 0.5)]
                } else if x == 3 {
                    vec![(2, 0.5), (3, 0.5)]
                } else {
                    vec![(x - 1, 1.0)]
                };
                (x, atoms)
            })
            .collect();
        let spec = ProcessSpec::from_document(SpecDocument::Table {
            floor: 3,
            ceiling: 6,
            up,
            down_by_fall: [(1, vec![(-1, 1.0)])].into(),
            floor_resets: true,
            kappa: crate::model::KappaSchedule {
                values: vec![1.0],
                tail: Some(crate::model::KappaTail::One),
            },
            m1: None,
        })
        .unwrap();
        let est = occupation_estimate(&spec, 1, 10_000, 100, 3).unwrap();
        assert_eq!(est.support, (0..=6).collect::<Vec<_>>());
        assert!(est.probs[4..].iter().all(|&p| p == 0.0));
        assert!((est.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
