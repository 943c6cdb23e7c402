use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::exact::ExtendedChain;
use crate::model::{MemoryState, ProcessSpec};
use crate::simulate::Walker;

/// Visits needed before a state's row is compared.
pub const DEFAULT_MIN_VISITS: u64 = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateDeviation {
    pub state: String,
    pub visits: u64,
    pub max_abs_deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingReport {
    pub spec_id: String,
    pub steps: u64,
    pub seed: u64,
    pub min_visits: u64,
    /// Largest row deviation over sufficiently visited states; `None` when
    /// no state reached `min_visits`.
    pub max_abs_deviation: Option<f64>,
    pub checked: Vec<StateDeviation>,
    /// Visited states below `min_visits` ("insufficient data").
    pub insufficient: Vec<String>,
    /// Simulated memories absent from the chain.
    pub unknown_visits: u64,
}

impl EmbeddingReport {
    pub fn within(&self, tol: f64) -> bool {
        self.max_abs_deviation.is_some_and(|d| d <= tol)
    }
}

/// Simulates the process from `(N)` and compares empirical transition
/// frequencies per memory state with the chain's rows.
pub fn embedding_consistency_check(
    spec: &ProcessSpec,
    chain: &ExtendedChain,
    steps: u64,
    seed: u64,
    min_visits: u64,
) -> Result<EmbeddingReport, AnalysisError> {
    let mut w = Walker::new(spec, MemoryState::singleton(spec.floor()), seed)?;
    let mut tallies: Vec<BTreeMap<usize, u64>> = vec![BTreeMap::new(); chain.len()];
    let mut unknown = 0u64;
    let mut from = chain.index_of(w.memory());
    for _ in 0..steps {
        w.step();
        let to = chain.index_of(w.memory());
        match (from, to) {
            (Some(i), Some(j)) => *tallies[i].entry(j).or_insert(0) += 1,
            _ => unknown += 1,
        }
        from = to;
    }
    let mut checked = Vec::new();
    let mut insufficient = Vec::new();
    for (i, tally) in tallies.iter().enumerate() {
        let visits: u64 = tally.values().sum();
        if visits == 0 {
            continue;
        }
        let name = chain.states()[i].to_string();
        if visits < min_visits {
            insufficient.push(name);
            continue;
        }
        let mut dev: f64 = 0.0;
        for &(j, p) in chain.row(i) {
            let freq = tally.get(&j).copied().unwrap_or(0) as f64 / visits as f64;
            dev = dev.max((freq - p).abs());
        }
        for (&j, &c) in tally {
            if chain.row(i).iter().all(|&(k, _)| k != j) {
                dev = dev.max(c as f64 / visits as f64);
            }
        }
        checked.push(StateDeviation {
            state: name,
            visits,
            max_abs_deviation: dev,
        });
    }
    let max_abs_deviation = checked.iter().map(|c| c.max_abs_deviation).reduce(f64::max);
    Ok(EmbeddingReport {
        spec_id: spec.id().to_string(),
        steps,
        seed,
        min_visits,
        max_abs_deviation,
        checked,
        insufficient,
        unknown_visits: unknown,
    })
}
