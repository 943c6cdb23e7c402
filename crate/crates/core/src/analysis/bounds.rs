//! Monte Carlo checks of the run-up, fall and hitting-time bounds against
//! the constants derived from the declared assumptions.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::stats::{affine_fit, AffineFit, MeanEstimate};
use super::AnalysisError;
use crate::exact::{expected_hitting_times, extended_chain, ExactOptions};
use crate::model::{
    derived_constants, DerivedConstants, MemoryState, ProcessSpec, DEFAULT_TAIL_TOLERANCE,
};
use crate::simulate::{hitting_sample, replication_seed, Walker};

/// Censored fraction above which a record is flagged unreliable.
pub const MAX_CENSORED_FRACTION: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Claim {
    /// `E_x ξ_0 <= M2`
    Lemma1,
    /// `E_x χ_0 1(χ_0 < τ) <= M3` from a one-step fall
    Lemma2,
    /// `E_x (X_{ξ_0} - x)_+ <= M4`
    Lemma3,
    /// `E_x τ <= x + M4 q̄ / (1 - q̄)`
    Theorem1Tau,
    /// `E_x γ`, recorded without a closed-form bound
    Theorem1Gamma,
}

impl Claim {
    fn tag(self) -> u64 {
        match self {
            Claim::Lemma1 => 1,
            Claim::Lemma2 => 2,
            Claim::Lemma3 => 3,
            Claim::Theorem1Tau => 4,
            Claim::Theorem1Gamma => 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClaimRecord {
    pub claim: Claim,
    pub start: u32,
    pub estimate: MeanEstimate,
    /// `None` when the claim has no closed-form constant.
    pub bound: Option<f64>,
    /// `bound - ci_high`.
    pub margin: Option<f64>,
    pub pass: bool,
    /// Exact value from the extended chain, when available.
    pub exact: Option<f64>,
    pub replications: u64,
    pub censored: u64,
    pub reliable: bool,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub spec_id: String,
    pub seed: u64,
    pub replications: u64,
    pub cap: u64,
    pub start_states: Vec<u32>,
    pub constants: DerivedConstants,
    pub records: Vec<ClaimRecord>,
    /// Least-squares `E_x γ ≈ C2 x + C3` over the measured means (empirical).
    pub gamma_fit: Option<AffineFit>,
    /// Starts skipped for the fall check because `x + 1` exceeds the ceiling.
    pub lemma2_skipped: Vec<u32>,
    pub unreliable: bool,
}

impl BoundReport {
    pub fn record(&self, claim: Claim, start: u32) -> Option<&ClaimRecord> {
        self.records
            .iter()
            .find(|r| r.claim == claim && r.start == start)
    }

    pub fn records_for(&self, claim: Claim) -> impl Iterator<Item = &ClaimRecord> {
        self.records.iter().filter(move |r| r.claim == claim)
    }

    /// All bounded claims pass.
    pub fn all_pass(&self) -> bool {
        self.records.iter().all(|r| r.pass)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Base seed for one (claim, start) batch; replication `i` uses base + i.
pub fn claim_seed(seed: u64, claim: Claim, start: u32) -> u64 {
    splitmix64(seed ^ splitmix64((claim.tag() << 32) | u64::from(start)))
}

/// `(ξ_0, X_{ξ_0} - x)` from the singleton `(x)`; `None` if censored.
fn run_up(
    spec: &ProcessSpec,
    x: u32,
    cap: u64,
    seed: u64,
) -> Result<Option<(u64, u32)>, AnalysisError> {
    let mut w = Walker::new(spec, MemoryState::singleton(x), seed)?;
    while w.time() < cap {
        let (t, here) = (w.time(), w.state());
        if w.step() < here {
            return Ok(Some((t, here.saturating_sub(x))));
        }
    }
    Ok(None)
}

/// `χ_0 1(χ_0 < τ)` from the one-step fall `(x, x+1)`; `None` if censored.
fn fall(spec: &ProcessSpec, x: u32, cap: u64, seed: u64) -> Result<Option<u64>, AnalysisError> {
    let start = MemoryState::from_path(vec![x, x + 1])?;
    let floor = spec.floor();
    let mut w = Walker::new(spec, start, seed)?;
    while w.time() < cap {
        let (t, here) = (w.time(), w.state());
        if here <= floor {
            return Ok(Some(0));
        }
        if w.step() >= here {
            return Ok(Some(t));
        }
    }
    Ok(None)
}

fn batch<T: Send>(
    replications: usize,
    base: u64,
    f: impl Fn(u64) -> Result<Option<T>, AnalysisError> + Sync,
) -> Result<Vec<Option<T>>, AnalysisError> {
    (0..replications as u64)
        .into_par_iter()
        .map(|i| f(replication_seed(base, i)))
        .collect()
}

fn record(
    claim: Claim,
    start: u32,
    samples: &[Option<f64>],
    bound: Option<f64>,
    exact: Option<f64>,
    seed: u64,
) -> ClaimRecord {
    let values: Vec<f64> = samples.iter().flatten().copied().collect();
    let censored = (samples.len() - values.len()) as u64;
    let estimate = MeanEstimate::from_samples(&values);
    let margin = bound.map(|b| b - estimate.ci_high);
    let reliable =
        !values.is_empty() && (censored as f64) <= MAX_CENSORED_FRACTION * samples.len() as f64;
    ClaimRecord {
        claim,
        start,
        estimate,
        bound,
        margin,
        pass: match margin {
            Some(m) => m >= 0.0,
            None => reliable,
        },
        exact,
        replications: samples.len() as u64,
        censored,
        reliable,
        seed,
    }
}

/// Runs every claim for each start state above the floor.
pub fn verify_bounds(
    spec: &ProcessSpec,
    start_states: &[u32],
    replications: usize,
    cap: u64,
    seed: u64,
) -> Result<BoundReport, AnalysisError> {
    let constants = derived_constants(spec, DEFAULT_TAIL_TOLERANCE)?;
    verify_bounds_with_constants(spec, &constants, start_states, replications, cap, seed)
}

/// As [`verify_bounds`] but against caller-supplied constants.
pub fn verify_bounds_with_constants(
    spec: &ProcessSpec,
    constants: &DerivedConstants,
    start_states: &[u32],
    replications: usize,
    cap: u64,
    seed: u64,
) -> Result<BoundReport, AnalysisError> {
    if replications == 0 || cap == 0 {
        return Err(AnalysisError::Domain(
            "replications and cap must be positive".into(),
        ));
    }
    if let Some(&x) = start_states.iter().find(|&&x| x <= spec.floor()) {
        return Err(AnalysisError::Domain(format!(
            "start state {x} is not above the floor {}",
            spec.floor()
        )));
    }
    for &x in start_states {
        spec.check_memory(&MemoryState::singleton(x))?;
    }
    let exact = match spec.ceiling() {
        Some(_) => {
            let chain = extended_chain(spec, &ExactOptions::default())?;
            let h = expected_hitting_times(&chain)?;
            Some((chain, h))
        }
        None => None,
    };
    let exact_at = |x: u32, gamma: bool| {
        exact.as_ref().map(|(chain, h)| {
            let i = chain
                .index_of(&MemoryState::singleton(x))
                .expect("start state in chain");
            if gamma {
                h.e_gamma[i]
            } else {
                h.e_tau[i]
            }
        })
    };

    let mut records = Vec::new();
    let mut lemma2_skipped = Vec::new();
    let mut gamma_points = Vec::new();
    for &x in start_states {
        let s1 = claim_seed(seed, Claim::Lemma1, x);
        let ups = batch(replications, s1, |s| run_up(spec, x, cap, s))?;
        let xi: Vec<Option<f64>> = ups.iter().map(|u| u.map(|(t, _)| t as f64)).collect();
        let gain: Vec<Option<f64>> = ups.iter().map(|u| u.map(|(_, g)| f64::from(g))).collect();
        records.push(record(Claim::Lemma1, x, &xi, Some(constants.m2), None, s1));

        if spec.ceiling().is_some_and(|c| x >= c) {
            lemma2_skipped.push(x);
        } else {
            let s2 = claim_seed(seed, Claim::Lemma2, x);
            let falls = batch(replications, s2, |s| fall(spec, x, cap, s))?;
            let falls: Vec<Option<f64>> = falls.iter().map(|f| f.map(|t| t as f64)).collect();
            records.push(record(
                Claim::Lemma2,
                x,
                &falls,
                Some(constants.m3.upper()),
                None,
                s2,
            ));
        }

        // the gain record reuses the lemma1 run-ups
        records.push(record(
            Claim::Lemma3,
            x,
            &gain,
            Some(constants.m4),
            None,
            s1,
        ));

        let s4 = claim_seed(seed, Claim::Theorem1Tau, x);
        let start = MemoryState::singleton(x);
        let hits = batch(replications, s4, |s| {
            Ok(Some(hitting_sample(spec, &start, cap, s)?))
        })?;
        let tau: Vec<Option<f64>> = hits
            .iter()
            .map(|h| h.and_then(|h| h.tau).map(|t| t as f64))
            .collect();
        let gamma: Vec<Option<f64>> = hits
            .iter()
            .map(|h| h.and_then(|h| h.gamma).map(|t| t as f64))
            .collect();
        records.push(record(
            Claim::Theorem1Tau,
            x,
            &tau,
            Some(constants.tau_bound(x)),
            exact_at(x, false),
            s4,
        ));
        let g = record(Claim::Theorem1Gamma, x, &gamma, None, exact_at(x, true), s4);
        gamma_points.push((f64::from(x), g.estimate.mean));
        records.push(g);
    }

    let gamma_fit = if gamma_points.len() >= 2 && gamma_points.iter().all(|(_, y)| y.is_finite()) {
        let (xs, ys): (Vec<f64>, Vec<f64>) = gamma_points.into_iter().unzip();
        affine_fit(&xs, &ys).ok()
    } else {
        None
    };
    let unreliable = records.iter().any(|r| !r.reliable);
    Ok(BoundReport {
        spec_id: spec.id().to_string(),
        seed,
        replications: replications as u64,
        cap,
        start_states: start_states.to_vec(),
        constants: constants.clone(),
        records,
        gamma_fit,
        lemma2_skipped,
        unreliable,
    })
}
