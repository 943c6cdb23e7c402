use std::collections::{HashSet, VecDeque};

use serde::{Deserialize, Serialize};

use super::memory::{canonical_cmp, MemoryState};
use super::spec::{ProcessSpec, SpecDocument};
use super::ModelError;

/// Slack used when comparing kernel masses against declared bounds.
pub const CHECK_SLACK: f64 = 1e-12;

/// Ceiling used to audit unbounded reference specs.
pub const UNBOUNDED_WINDOW: u32 = 64;

/// Default cap on the number of memory states explored.
pub const DEFAULT_STATE_CAP: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    /// Floor state without enough mass on staying or on `+1`.
    Irreducibility {
        memory: MemoryState,
        p_stay: f64,
        p_up: f64,
    },
    KappaNotMonotone {
        index: usize,
        previous: f64,
        value: f64,
    },
    KappaOutOfRange {
        index: usize,
        value: f64,
    },
    /// Down-continuation mass below the declared κ.
    Recurrence {
        memory: MemoryState,
        down_mass: f64,
        declared: f64,
    },
    JumpMoment {
        memory: MemoryState,
        mean_positive_increment: f64,
        declared: f64,
    },
}

/// Minimal observed down-continuation mass at one fall length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FallAudit {
    pub fall_length: usize,
    pub observed_min: f64,
    pub declared: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub spec_id: String,
    pub rho: f64,
    pub violations: Vec<Violation>,
    pub down_continuation: Vec<FallAudit>,
    pub max_mean_positive_increment: f64,
    pub declared_m1: f64,
    pub memories_checked: usize,
    /// Ceiling of the audited state space (the spec's own when finite).
    pub audit_ceiling: u32,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Breadth-first closure of the memory states reachable from every
/// singleton, in canonical order (length, then lexicographic).
pub fn reachable_memories(spec: &ProcessSpec, cap: usize) -> Result<Vec<MemoryState>, ModelError> {
    let ceiling = spec.finite_ceiling("state enumeration")?;
    let mut seen: HashSet<MemoryState> = HashSet::new();
    let mut queue = VecDeque::new();
    for x in 0..=ceiling {
        let m = MemoryState::singleton(x);
        seen.insert(m.clone());
        queue.push_back(m);
    }
    let mut buf = Vec::new();
    while let Some(m) = queue.pop_front() {
        spec.fill_next(&m, &mut buf);
        for &(next, _) in &buf {
            let n = m.update(next);
            if !seen.contains(&n) {
                if seen.len() >= cap {
                    return Err(ModelError::TooManyStates(cap));
                }
                seen.insert(n.clone());
                queue.push_back(n);
            }
        }
    }
    let mut states: Vec<_> = seen.into_iter().collect();
    states.sort_by(canonical_cmp);
    Ok(states)
}

/// Specs with an unbounded ceiling are audited on a finite window.
fn audit_spec(spec: &ProcessSpec) -> Result<ProcessSpec, ModelError> {
    match (spec.ceiling(), spec.document()) {
        (Some(_), _) => Ok(spec.clone()),
        (None, SpecDocument::Reference { floor, q, beta, .. }) => {
            ProcessSpec::reference(*floor, Some(floor + UNBOUNDED_WINDOW), *q, *beta)
        }
        (None, _) => Err(ModelError::Domain("unbounded table spec".into())),
    }
}

/// Largest ρ such that every reachable floor memory puts at least ρ on
/// staying and on `+1`. Zero when some floor memory fails.
pub fn a2_margin(spec: &ProcessSpec) -> Result<f64, ModelError> {
    let audit = audit_spec(spec)?;
    let states = reachable_memories(&audit, DEFAULT_STATE_CAP)?;
    let mut rho = f64::INFINITY;
    for m in states.iter().filter(|m| m.current() <= audit.floor()) {
        let d = audit.next_distribution(m)?;
        rho = rho.min(d.prob(m.current())).min(d.prob(m.current() + 1));
    }
    Ok(rho.max(0.0))
}

/// Checks irreducibility, κ monotonicity, down-continuation bounds and the
/// jump-up moment bound over the whole reachable memory space.
pub fn validate_spec(spec: &ProcessSpec) -> Result<ValidationReport, ModelError> {
    let audit = audit_spec(spec)?;
    let states = reachable_memories(&audit, DEFAULT_STATE_CAP)?;
    let kappa = spec.declared_kappa();
    let floor = audit.floor();
    let mut violations = Vec::new();

    let horizon = (kappa.values.len() + 1).max(UNBOUNDED_WINDOW as usize);
    for f in 0..horizon {
        let v = kappa.kappa(f);
        if !(v > 0.0 && v <= 1.0) {
            violations.push(Violation::KappaOutOfRange { index: f, value: v });
        }
        if f > 0 {
            let prev = kappa.kappa(f - 1);
            if v < prev {
                violations.push(Violation::KappaNotMonotone {
                    index: f,
                    previous: prev,
                    value: v,
                });
            }
        }
    }

    let mut rho = f64::INFINITY;
    let mut audits: Vec<FallAudit> = Vec::new();
    let mut max_increment: f64 = 0.0;
    for m in &states {
        let d = audit.next_distribution(m)?;
        let x = m.current();
        if x <= floor {
            let (p_stay, p_up) = (d.prob(x), d.prob(x + 1));
            rho = rho.min(p_stay).min(p_up);
            if p_stay <= 0.0 || p_up <= 0.0 {
                violations.push(Violation::Irreducibility {
                    memory: m.clone(),
                    p_stay,
                    p_up,
                });
            }
        } else {
            let f = m.fall_length();
            let down = d.mass_below(x);
            let declared = kappa.kappa(f);
            if down + CHECK_SLACK < declared {
                violations.push(Violation::Recurrence {
                    memory: m.clone(),
                    down_mass: down,
                    declared,
                });
            }
            match audits.iter_mut().find(|a| a.fall_length == f) {
                Some(a) => a.observed_min = a.observed_min.min(down),
                None => audits.push(FallAudit {
                    fall_length: f,
                    observed_min: down,
                    declared,
                }),
            }
        }
        let inc = d.mean_positive_increment(x);
        max_increment = max_increment.max(inc);
        if inc > spec.declared_m1() + CHECK_SLACK {
            violations.push(Violation::JumpMoment {
                memory: m.clone(),
                mean_positive_increment: inc,
                declared: spec.declared_m1(),
            });
        }
    }
    audits.sort_by_key(|a| a.fall_length);

    Ok(ValidationReport {
        spec_id: spec.id().to_string(),
        rho: rho.max(0.0),
        violations,
        down_continuation: audits,
        max_mean_positive_increment: max_increment,
        declared_m1: spec.declared_m1(),
        memories_checked: states.len(),
        audit_ceiling: audit.ceiling().expect("audit spec is bounded"),
    })
}
