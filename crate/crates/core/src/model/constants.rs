//! Constants derived from the declared assumption data: the recurrence
//! products, the lemma constants `M2..M4` and the hitting-time intercept.

use serde::{Deserialize, Serialize};

use super::spec::{KappaSchedule, KappaTail, ProcessSpec};
use super::{validate, ModelError};

/// Default truncation tolerance for the infinite product and the `M3` sum.
pub const DEFAULT_TAIL_TOLERANCE: f64 = 1e-9;

const MAX_TERMS: usize = 50_000_000;

/// A value known to lie in `[value - error, value + error]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Certified {
    pub value: f64,
    pub error: f64,
}

impl Certified {
    pub fn exact(value: f64) -> Self {
        Self { value, error: 0.0 }
    }

    pub fn lower(&self) -> f64 {
        self.value - self.error
    }

    pub fn upper(&self) -> f64 {
        self.value + self.error
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivedConstants {
    /// Largest ρ with `P(x) ≥ ρ` and `P(x+1) ≥ ρ` on the floor.
    pub rho: f64,
    pub q: f64,
    /// Partial products `κ̄_m = κ_0 ⋯ κ_m` up to the truncation point.
    pub kappa_bar_m: Vec<f64>,
    pub kappa_bar_inf: Certified,
    pub q_bar: f64,
    pub m1: f64,
    pub m2: f64,
    pub m3: Certified,
    pub m4: f64,
    pub tau_bound_slope: f64,
    /// `M4 q̄ / (1 - q̄)` at the upper end of the certified `q̄`.
    pub tau_bound_intercept: f64,
}

impl DerivedConstants {
    /// Upper bound on `E_x τ`.
    pub fn tau_bound(&self, x: u32) -> f64 {
        self.tau_bound_slope * f64::from(x) + self.tau_bound_intercept
    }
}

pub fn derived_constants(
    spec: &ProcessSpec,
    tail_tolerance: f64,
) -> Result<DerivedConstants, ModelError> {
    let kappa = spec.declared_kappa();
    let q = kappa.deficit(0);
    if q >= 1.0 {
        return Err(ModelError::Assumption(format!(
            "q = 1 - kappa_0 = {q} is not below 1"
        )));
    }
    let (kappa_bar_m, kappa_bar_inf) = infinite_product(kappa, tail_tolerance)?;
    let m3 = deficit_moment(kappa, tail_tolerance)?;
    let q_bar = 1.0 - kappa_bar_inf.value;
    // largest q̄ consistent with the enclosure keeps the intercept an upper bound
    let q_bar_hi = 1.0 - kappa_bar_inf.lower();
    let m1 = spec.declared_m1();
    let m2 = q / ((1.0 - q) * (1.0 - q));
    let m4 = m1 / ((1.0 - q) * (1.0 - q));
    Ok(DerivedConstants {
        rho: validate::a2_margin(spec)?,
        q,
        kappa_bar_m,
        kappa_bar_inf,
        q_bar,
        m1,
        m2,
        m3,
        m4,
        tau_bound_slope: 1.0,
        tau_bound_intercept: m4 * q_bar_hi / (1.0 - q_bar_hi),
    })
}

/// Upper bound on `sum_{i > m} (1 - κ_i)`, or `None` when the tail rule
/// gives no summable bound.
fn deficit_tail_sum(kappa: &KappaSchedule, m: usize) -> Option<f64> {
    debug_assert!(m + 1 >= kappa.values.len());
    match kappa.tail? {
        KappaTail::One => Some(0.0),
        KappaTail::Geometric { c, ratio } => {
            if c == 0.0 {
                Some(0.0)
            } else if ratio < 1.0 {
                Some(c * ratio.powi(m as i32 + 1) / (1.0 - ratio))
            } else {
                None
            }
        }
        KappaTail::Power { c, exponent } => {
            if c == 0.0 {
                Some(0.0)
            } else if exponent > 1.0 && m >= 1 {
                Some(c * (m as f64).powf(1.0 - exponent) / (exponent - 1.0))
            } else {
                None
            }
        }
    }
}

/// Partial products and a certified enclosure of `prod_{i>=0} κ_i`.
///
/// Uses `-ln(1 - e) <= e / (1 - e)` on the tail together with the
/// nonincreasing deficits of the tail rules.
fn infinite_product(kappa: &KappaSchedule, tol: f64) -> Result<(Vec<f64>, Certified), ModelError> {
    let not_positive = |why: &str| {
        ModelError::Assumption(format!("kappa_bar_inf is not provably positive: {why}"))
    };
    if kappa.tail.is_none() {
        return Err(not_positive("no tail rule for the kappa sequence"));
    }
    let mut start = kappa.values.len().saturating_sub(1);
    if matches!(kappa.tail, Some(KappaTail::Power { .. })) {
        start = start.max(1);
    }
    let mut partials = Vec::new();
    let mut log_prod = 0.0;
    for m in 0..MAX_TERMS {
        let k = kappa.kappa(m);
        if k <= 0.0 {
            return Err(not_positive(&format!("kappa_{m} = {k}")));
        }
        log_prod += k.ln();
        let prod = log_prod.exp();
        partials.push(prod);
        if m < start {
            continue;
        }
        let next_deficit = kappa.deficit(m + 1);
        if next_deficit >= 1.0 {
            continue;
        }
        let Some(tail) = deficit_tail_sum(kappa, m) else {
            return Err(not_positive("tail deficits are not summable"));
        };
        let lower = prod * (-tail / (1.0 - next_deficit)).exp();
        if prod - lower <= 2.0 * tol {
            let value = Certified {
                value: 0.5 * (prod + lower),
                // slack for rounding in the log-sum
                error: 0.5 * (prod - lower) + (m as f64 + 8.0) * f64::EPSILON * prod,
            };
            return Ok((partials, value));
        }
    }
    Err(not_positive(
        "product did not reach the requested tolerance",
    ))
}

/// `M3 = sum_{i>=1} i (1 - κ_i)`, exact for geometric tails.
fn deficit_moment(kappa: &KappaSchedule, tol: f64) -> Result<Certified, ModelError> {
    let explicit = kappa.values.len();
    let head: f64 = (1..explicit).map(|i| i as f64 * kappa.deficit(i)).sum();
    let a = explicit.max(1);
    match kappa.tail {
        None => Err(ModelError::Assumption(
            "M3 is not certified: no tail rule for the kappa sequence".into(),
        )),
        Some(KappaTail::One) => Ok(Certified::exact(head)),
        Some(KappaTail::Geometric { c, ratio }) => {
            if c == 0.0 {
                return Ok(Certified::exact(head));
            }
            if ratio >= 1.0 {
                return Err(ModelError::Assumption(
                    "M3 diverges: geometric ratio >= 1".into(),
                ));
            }
            let r_a = ratio.powi(a as i32);
            let one_minus = 1.0 - ratio;
            let tail = c * (a as f64 * r_a / one_minus + r_a * ratio / (one_minus * one_minus));
            Ok(Certified::exact(head + tail))
        }
        Some(KappaTail::Power { c, exponent }) => {
            if c == 0.0 {
                return Ok(Certified::exact(head));
            }
            if exponent <= 2.0 {
                return Err(ModelError::Assumption(format!(
                    "M3 diverges: power tail exponent {exponent} <= 2"
                )));
            }
            let mut sum = head;
            let mut i = a;
            loop {
                sum += i as f64 * kappa.deficit(i);
                let bound = c * (i as f64).powf(2.0 - exponent) / (exponent - 2.0);
                if bound <= 2.0 * tol {
                    return Ok(Certified {
                        value: sum + 0.5 * bound,
                        error: 0.5 * bound,
                    });
                }
                i += 1;
                if i > MAX_TERMS {
                    return Err(ModelError::Assumption(
                        "M3 did not reach the requested tolerance".into(),
                    ));
                }
            }
        }
    }
}
