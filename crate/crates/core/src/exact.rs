//! Exact answers on finite specs through the Markov embedding on memory
//! states `Y_n = (X_n, ..., X_{zeta_n ∧ n})`.

use std::collections::{HashMap, VecDeque};

use nalgebra::{DMatrix, DVector};
use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::validate::{reachable_memories, CHECK_SLACK, DEFAULT_STATE_CAP};
use crate::model::{MemoryState, ModelError, ProcessSpec};

/// Largest system solved with a dense LU factorization.
pub const DENSE_LIMIT: usize = 20_000;

/// Residual target for the stationary solve.
pub const STATIONARY_TOLERANCE: f64 = 1e-10;

const ROW_SUM_TOLERANCE: f64 = 1e-12;
const MAX_ITERATIONS: usize = 10_000_000;

#[derive(Debug, Error)]
pub enum ExactError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("internal consistency error: {0}")]
    Inconsistent(String),
    #[error("chain has {} closed classes: {}", .0.len(), format_classes(.0))]
    MultipleClosedClasses(Vec<Vec<String>>),
    #[error("target unreachable from states: {}", .0.join(", "))]
    Unreachable(Vec<String>),
    #[error("iterative solver did not converge: {0}")]
    NotConverged(String),
    #[error("domain error: {0}")]
    Domain(String),
}

fn format_classes(classes: &[Vec<String>]) -> String {
    classes
        .iter()
        .map(|c| format!("{{{}}}", c.join(", ")))
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Clone, Copy)]
pub struct ExactOptions {
    pub dense_limit: usize,
    pub state_cap: usize,
}

impl Default for ExactOptions {
    fn default() -> Self {
        Self {
            dense_limit: DENSE_LIMIT,
            state_cap: DEFAULT_STATE_CAP,
        }
    }
}

/// Row-stochastic chain over memory states, stored as sparse rows.
#[derive(Debug, Clone)]
pub struct ExtendedChain {
    states: Vec<MemoryState>,
    index: HashMap<MemoryState, usize>,
    rows: Vec<Vec<(usize, f64)>>,
    floor: u32,
    ceiling: u32,
}

impl ExtendedChain {
    /// Assembles a chain from explicit rows, checking stochasticity and
    /// closure.
    pub fn from_parts(
        states: Vec<MemoryState>,
        rows: Vec<Vec<(usize, f64)>>,
        floor: u32,
        ceiling: u32,
    ) -> Result<Self, ExactError> {
        if states.len() != rows.len() {
            return Err(ExactError::Inconsistent(format!(
                "{} states but {} rows",
                states.len(),
                rows.len()
            )));
        }
        let index: HashMap<_, _> = states
            .iter()
            .cloned()
            .enumerate()
            .map(|(i, s)| (s, i))
            .collect();
        if index.len() != states.len() {
            return Err(ExactError::Inconsistent("duplicate states".into()));
        }
        for (i, row) in rows.iter().enumerate() {
            if let Some(&(j, _)) = row.iter().find(|(j, _)| *j >= states.len()) {
                return Err(ExactError::Inconsistent(format!(
                    "row {} points at missing column {j}",
                    states[i]
                )));
            }
            let sum: f64 = row.iter().map(|(_, p)| p).sum();
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(ExactError::Inconsistent(format!(
                    "row {} sums to {sum}",
                    states[i]
                )));
            }
        }
        Ok(Self {
            states,
            index,
            rows,
            floor,
            ceiling,
        })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[MemoryState] {
        &self.states
    }

    pub fn index_of(&self, m: &MemoryState) -> Option<usize> {
        self.index.get(m).copied()
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn rows(&self) -> &[Vec<(usize, f64)>] {
        &self.rows
    }

    pub fn floor(&self) -> u32 {
        self.floor
    }

    pub fn ceiling(&self) -> u32 {
        self.ceiling
    }

    /// Transition probability between two indexed states.
    pub fn prob(&self, from: usize, to: usize) -> f64 {
        self.rows[from]
            .iter()
            .filter(|(j, _)| *j == to)
            .map(|(_, p)| p)
            .sum()
    }

    pub fn max_row_sum_deviation(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| (r.iter().map(|(_, p)| p).sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// `v ↦ vP`.
    pub fn push_forward(&self, v: &[f64]) -> Vec<f64> {
        let mut w = vec![0.0; self.len()];
        for (i, row) in self.rows.iter().enumerate() {
            let vi = v[i];
            if vi == 0.0 {
                continue;
            }
            for &(j, p) in row {
                w[j] += vi * p;
            }
        }
        w
    }

    /// `‖πP − π‖₁`.
    pub fn stationarity_residual(&self, pi: &[f64]) -> f64 {
        self.push_forward(pi)
            .iter()
            .zip(pi)
            .map(|(a, b)| (a - b).abs())
            .sum()
    }

    /// Projects a law on memory states onto `X`-states `0..=Nbar`.
    pub fn x_marginal(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.ceiling as usize + 1];
        for (s, &p) in self.states.iter().zip(v) {
            out[s.current() as usize] += p;
        }
        out
    }

    /// Mass above the floor.
    pub fn mass_above_floor(&self, v: &[f64]) -> f64 {
        self.states
            .iter()
            .zip(v)
            .filter(|(s, _)| s.current() > self.floor)
            .map(|(_, p)| p)
            .sum()
    }
}

/// Reachability closure from all singletons, sorted by length then
/// lexicographically.
pub fn enumerate_extended_states(
    spec: &ProcessSpec,
    cap: usize,
) -> Result<Vec<MemoryState>, ExactError> {
    Ok(reachable_memories(spec, cap)?)
}

pub fn build_transition_matrix(
    spec: &ProcessSpec,
    states: Vec<MemoryState>,
) -> Result<ExtendedChain, ExactError> {
    let ceiling = spec.finite_ceiling("the extended chain")?;
    let index: HashMap<&MemoryState, usize> =
        states.iter().enumerate().map(|(i, s)| (s, i)).collect();
    let mut rows = Vec::with_capacity(states.len());
    for s in &states {
        let d = spec.next_distribution(s)?;
        let mut row: Vec<(usize, f64)> = Vec::with_capacity(d.atoms().len());
        for &(next, p) in d.atoms() {
            let image = s.update(next);
            let j = *index.get(&image).ok_or_else(|| {
                ExactError::Inconsistent(format!("transition {s} -> {image} leaves the state set"))
            })?;
            match row.iter_mut().find(|(k, _)| *k == j) {
                Some(e) => e.1 += p,
                None => row.push((j, p)),
            }
        }
        row.sort_by_key(|&(j, _)| j);
        rows.push(row);
    }
    ExtendedChain::from_parts(states, rows, spec.floor(), ceiling)
}

/// Enumerates and builds in one go.
pub fn extended_chain(
    spec: &ProcessSpec,
    opts: &ExactOptions,
) -> Result<ExtendedChain, ExactError> {
    let states = enumerate_extended_states(spec, opts.state_cap)?;
    build_transition_matrix(spec, states)
}

/// Closed strongly connected components, each sorted by state index.
pub fn closed_classes(chain: &ExtendedChain) -> Vec<Vec<usize>> {
    let mut g = DiGraph::<(), ()>::with_capacity(chain.len(), 0);
    let nodes: Vec<_> = (0..chain.len()).map(|_| g.add_node(())).collect();
    for (i, row) in chain.rows.iter().enumerate() {
        for &(j, p) in row {
            if p > 0.0 {
                g.add_edge(nodes[i], nodes[j], ());
            }
        }
    }
    let sccs = tarjan_scc(&g);
    let mut comp = vec![0usize; chain.len()];
    for (c, members) in sccs.iter().enumerate() {
        for n in members {
            comp[n.index()] = c;
        }
    }
    let mut closed: Vec<Vec<usize>> = sccs
        .iter()
        .enumerate()
        .filter(|(c, members)| {
            members.iter().all(|n| {
                chain.rows[n.index()]
                    .iter()
                    .all(|&(j, p)| p <= 0.0 || comp[j] == *c)
            })
        })
        .map(|(_, members)| {
            let mut v: Vec<usize> = members.iter().map(|n| n.index()).collect();
            v.sort_unstable();
            v
        })
        .collect();
    closed.sort();
    closed
}

/// Stationary law over the extended states (zero on transient states).
pub fn stationary_distribution(chain: &ExtendedChain) -> Result<Vec<f64>, ExactError> {
    stationary_distribution_with(chain, &ExactOptions::default())
}

pub fn stationary_distribution_with(
    chain: &ExtendedChain,
    opts: &ExactOptions,
) -> Result<Vec<f64>, ExactError> {
    let classes = closed_classes(chain);
    if classes.len() != 1 {
        return Err(ExactError::MultipleClosedClasses(
            classes
                .iter()
                .map(|c| c.iter().map(|&i| chain.states[i].to_string()).collect())
                .collect(),
        ));
    }
    let class = &classes[0];
    let mut pi = if class.len() <= opts.dense_limit {
        dense_stationary(chain, class)?
    } else {
        power_stationary(chain, class)?
    };
    for p in pi.iter_mut() {
        if *p < 0.0 {
            *p = 0.0;
        }
    }
    let total: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|p| *p /= total);
    let residual = chain.stationarity_residual(&pi);
    if residual > STATIONARY_TOLERANCE {
        return Err(ExactError::NotConverged(format!(
            "stationary residual {residual:e} above {STATIONARY_TOLERANCE:e}"
        )));
    }
    Ok(pi)
}

fn dense_stationary(chain: &ExtendedChain, class: &[usize]) -> Result<Vec<f64>, ExactError> {
    let n = class.len();
    let local: HashMap<usize, usize> = class.iter().enumerate().map(|(k, &i)| (i, k)).collect();
    // Rows of (P^T - I) with the last equation replaced by sum(pi) = 1.
    let mut a = DMatrix::<f64>::zeros(n, n);
    for (k, &i) in class.iter().enumerate() {
        a[(k, k)] -= 1.0;
        for &(j, p) in &chain.rows[i] {
            a[(local[&j], k)] += p;
        }
    }
    for k in 0..n {
        a[(n - 1, k)] = 1.0;
    }
    let mut b = DVector::<f64>::zeros(n);
    b[n - 1] = 1.0;
    let x = a
        .lu()
        .solve(&b)
        .ok_or_else(|| ExactError::Inconsistent("singular stationary system".into()))?;
    let mut pi = vec![0.0; chain.len()];
    for (k, &i) in class.iter().enumerate() {
        pi[i] = x[k];
    }
    Ok(pi)
}

/// Power iteration on the lazy chain `(I + P) / 2`, which has the same
/// stationary law and is aperiodic.
fn power_stationary(chain: &ExtendedChain, class: &[usize]) -> Result<Vec<f64>, ExactError> {
    let mut pi = vec![0.0; chain.len()];
    for &i in class {
        pi[i] = 1.0 / class.len() as f64;
    }
    for _ in 0..MAX_ITERATIONS {
        let next = chain.push_forward(&pi);
        let residual: f64 = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum();
        if residual <= 1e-13 {
            return Ok(next);
        }
        for (p, n) in pi.iter_mut().zip(&next) {
            *p = 0.5 * (*p + n);
        }
    }
    Err(ExactError::NotConverged("power iteration".into()))
}

/// Solves `h(s) = c(s) + Σ P(s, s') h(s')` on the `active` states, with `h`
/// fixed to `fixed` elsewhere.
fn first_step_solve(
    chain: &ExtendedChain,
    active: &[bool],
    cost: f64,
    fixed: &[f64],
    dense_limit: usize,
) -> Result<Vec<f64>, ExactError> {
    check_exit_reachable(chain, active)?;
    let act: Vec<usize> = (0..chain.len()).filter(|&i| active[i]).collect();
    let mut h: Vec<f64> = fixed.to_vec();
    if act.is_empty() {
        return Ok(h);
    }
    let mut local = vec![usize::MAX; chain.len()];
    for (k, &i) in act.iter().enumerate() {
        local[i] = k;
    }
    let rhs = |i: usize| -> f64 {
        cost + chain.rows[i]
            .iter()
            .filter(|(j, _)| !active[*j])
            .map(|&(j, p)| p * fixed[j])
            .sum::<f64>()
    };
    if act.len() <= dense_limit {
        let n = act.len();
        let mut a = DMatrix::<f64>::identity(n, n);
        let mut b = DVector::<f64>::zeros(n);
        for (k, &i) in act.iter().enumerate() {
            b[k] = rhs(i);
            for &(j, p) in &chain.rows[i] {
                if active[j] {
                    a[(k, local[j])] -= p;
                }
            }
        }
        let x = a
            .lu()
            .solve(&b)
            .ok_or_else(|| ExactError::Inconsistent("singular first-step system".into()))?;
        for (k, &i) in act.iter().enumerate() {
            h[i] = x[k];
        }
    } else {
        let b: Vec<f64> = act.iter().map(|&i| rhs(i)).collect();
        for &i in &act {
            h[i] = 0.0;
        }
        let mut converged = false;
        for _ in 0..MAX_ITERATIONS {
            let mut delta: f64 = 0.0;
            let mut scale: f64 = 1.0;
            for (k, &i) in act.iter().enumerate() {
                let mut diag = 0.0;
                let mut acc = b[k];
                for &(j, p) in &chain.rows[i] {
                    if j == i {
                        diag += p;
                    } else if active[j] {
                        acc += p * h[j];
                    }
                }
                let new = acc / (1.0 - diag);
                delta = delta.max((new - h[i]).abs());
                scale = scale.max(new.abs());
                h[i] = new;
            }
            if delta <= 1e-14 * scale {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(ExactError::NotConverged(
                "Gauss-Seidel first-step solve".into(),
            ));
        }
    }
    Ok(h)
}

/// Every active state must reach some inactive state with positive
/// probability, otherwise the first-step system is singular.
fn check_exit_reachable(chain: &ExtendedChain, active: &[bool]) -> Result<(), ExactError> {
    let mut reverse: Vec<Vec<usize>> = vec![Vec::new(); chain.len()];
    for (i, row) in chain.rows.iter().enumerate() {
        for &(j, p) in row {
            if p > 0.0 {
                reverse[j].push(i);
            }
        }
    }
    let mut reach: Vec<bool> = active.iter().map(|a| !a).collect();
    let mut queue: VecDeque<usize> = (0..chain.len()).filter(|&i| reach[i]).collect();
    while let Some(j) = queue.pop_front() {
        for &i in &reverse[j] {
            if !reach[i] {
                reach[i] = true;
                queue.push_back(i);
            }
        }
    }
    let stuck: Vec<String> = (0..chain.len())
        .filter(|&i| !reach[i])
        .map(|i| chain.states[i].to_string())
        .collect();
    if stuck.is_empty() {
        Ok(())
    } else {
        Err(ExactError::Unreachable(stuck))
    }
}

/// Exact `E τ` and `E γ` for every extended start state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HittingTimes {
    pub e_tau: Vec<f64>,
    pub e_gamma: Vec<f64>,
}

/// `E τ` by first-step analysis; `E γ` on the two-phase chain
/// (before / after `τ`), absorbed at the singleton `(N)` after `τ`.
pub fn expected_hitting_times(chain: &ExtendedChain) -> Result<HittingTimes, ExactError> {
    expected_hitting_times_with(chain, &ExactOptions::default())
}

pub fn expected_hitting_times_with(
    chain: &ExtendedChain,
    opts: &ExactOptions,
) -> Result<HittingTimes, ExactError> {
    let n = chain.len();
    let floor = chain.floor;
    let above: Vec<bool> = chain.states.iter().map(|s| s.current() > floor).collect();
    let zeros = vec![0.0; n];
    let e_tau = first_step_solve(chain, &above, 1.0, &zeros, opts.dense_limit)?;

    let regen = chain
        .index_of(&MemoryState::singleton(floor))
        .ok_or_else(|| ExactError::Inconsistent("singleton (N) missing".into()))?;
    let post_active: Vec<bool> = (0..n).map(|i| i != regen).collect();
    let post = first_step_solve(chain, &post_active, 1.0, &zeros, opts.dense_limit)?;
    // Before τ the process sits above the floor; the first entry to the
    // floor switches to the post-τ values.
    let e_gamma = first_step_solve(chain, &above, 1.0, &post, opts.dense_limit)?;
    Ok(HittingTimes { e_tau, e_gamma })
}

/// `r(t) = P(X_t > N)` for `t = 0..=t_max` from the singleton `(x0)`.
pub fn reliability_curve(
    chain: &ExtendedChain,
    x0: u32,
    t_max: usize,
) -> Result<Vec<f64>, ExactError> {
    let start = chain
        .index_of(&MemoryState::singleton(x0))
        .ok_or_else(|| ExactError::Domain(format!("x0 = {x0} outside [0, {}]", chain.ceiling)))?;
    let mut v = vec![0.0; chain.len()];
    v[start] = 1.0;
    let mut r = Vec::with_capacity(t_max + 1);
    for t in 0..=t_max {
        r.push(chain.mass_above_floor(&v));
        if t < t_max {
            v = chain.push_forward(&v);
        }
    }
    Ok(r)
}

/// First `t*` with `|r(t) - target| <= tol` for all `t >= t*` in the curve.
pub fn settling_time(curve: &[f64], target: f64, tol: f64) -> Option<usize> {
    let mut last_bad = None;
    for (t, r) in curve.iter().enumerate() {
        if (r - target).abs() > tol {
            last_bad = Some(t);
        }
    }
    match last_bad {
        None => Some(0),
        Some(t) if t + 1 < curve.len() => Some(t + 1),
        Some(_) => None,
    }
}

/// Down-continuation mass per memory above the floor, compared with the
/// declared κ at its fall length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappaAuditEntry {
    pub state: MemoryState,
    pub down_mass: f64,
    pub declared: f64,
}

pub fn kappa_audit(chain: &ExtendedChain, spec: &ProcessSpec) -> Vec<KappaAuditEntry> {
    chain
        .states
        .iter()
        .enumerate()
        .filter(|(_, s)| s.current() > chain.floor)
        .map(|(i, s)| KappaAuditEntry {
            state: s.clone(),
            down_mass: chain.rows[i]
                .iter()
                .filter(|(j, _)| chain.states[*j].current() < s.current())
                .map(|(_, p)| p)
                .sum(),
            declared: spec.declared_kappa().kappa(s.fall_length()),
        })
        .collect()
}

impl KappaAuditEntry {
    pub fn holds(&self) -> bool {
        self.down_mass + CHECK_SLACK >= self.declared
    }
}
