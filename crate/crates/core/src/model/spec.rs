use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::distribution::{Distribution, MASS_TOLERANCE};
use super::memory::MemoryState;
use super::ModelError;

/// Tail rule for a declared κ sequence beyond its explicit values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum KappaTail {
    /// `κ_f = 1 - c · ratio^f`
    Geometric { c: f64, ratio: f64 },
    /// `κ_f = 1 - c / f^exponent`
    Power { c: f64, exponent: f64 },
    /// `κ_f = 1`
    One,
}

/// Declared lower bounds κ_0 ≤ κ_1 ≤ … on the probability of continuing a
/// fall above the floor, indexed by the current fall length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappaSchedule {
    #[serde(default)]
    pub values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tail: Option<KappaTail>,
}

impl KappaSchedule {
    pub fn geometric(q: f64, beta: f64) -> Self {
        Self {
            values: Vec::new(),
            tail: Some(KappaTail::Geometric { c: q, ratio: beta }),
        }
    }

    /// κ at fall length `f`. Without a tail rule the last explicit value is
    /// repeated, which is still a valid lower bound for a nondecreasing
    /// sequence.
    pub fn kappa(&self, f: usize) -> f64 {
        if let Some(&v) = self.values.get(f) {
            return v;
        }
        match self.tail {
            Some(KappaTail::Geometric { c, ratio }) => 1.0 - c * ratio.powi(f as i32),
            Some(KappaTail::Power { c, exponent }) => 1.0 - c / (f as f64).powf(exponent),
            Some(KappaTail::One) => 1.0,
            None => self.values.last().copied().unwrap_or(0.0),
        }
    }

    /// `1 - κ_f`.
    pub fn deficit(&self, f: usize) -> f64 {
        if f >= self.values.len() {
            match self.tail {
                Some(KappaTail::Geometric { c, ratio }) => return c * ratio.powi(f as i32),
                Some(KappaTail::Power { c, exponent }) => return c / (f as f64).powf(exponent),
                Some(KappaTail::One) => return 0.0,
                None => {}
            }
        }
        1.0 - self.kappa(f)
    }

    fn check_shape(&self) -> Result<(), ModelError> {
        if let Some(&v) = self
            .values
            .iter()
            .find(|v| !v.is_finite() || **v < 0.0 || **v > 1.0)
        {
            return Err(ModelError::Malformed(format!(
                "kappa value {v} outside [0, 1]"
            )));
        }
        match self.tail {
            Some(KappaTail::Geometric { c, ratio }) => {
                if !((0.0..=1.0).contains(&c) && (0.0..=1.0).contains(&ratio)) {
                    return Err(ModelError::Malformed(format!(
                        "geometric kappa tail needs c, ratio in [0, 1], got c={c}, ratio={ratio}"
                    )));
                }
            }
            Some(KappaTail::Power { c, exponent }) => {
                if self.values.is_empty() {
                    return Err(ModelError::Malformed(
                        "power kappa tail needs an explicit kappa_0".into(),
                    ));
                }
                if !(c >= 0.0 && c.is_finite() && exponent > 0.0 && exponent.is_finite()) {
                    return Err(ModelError::Malformed(format!(
                        "power kappa tail needs c >= 0 and exponent > 0, got c={c}, exponent={exponent}"
                    )));
                }
            }
            Some(KappaTail::One) | None => {}
        }
        if self.values.is_empty() && self.tail.is_none() {
            return Err(ModelError::Malformed("kappa schedule is empty".into()));
        }
        Ok(())
    }
}

/// Relative jump rule used while falling: `(offset from current state, prob)`.
pub type DownRule = Vec<(i64, f64)>;

/// On-disk form of a process specification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum SpecDocument {
    Reference {
        #[serde(rename = "N")]
        floor: u32,
        /// `null` means unbounded (simulation only).
        #[serde(rename = "Nbar")]
        ceiling: Option<u32>,
        q: f64,
        beta: f64,
    },
    Table {
        #[serde(rename = "N")]
        floor: u32,
        #[serde(rename = "Nbar")]
        ceiling: u32,
        #[serde(deserialize_with = "int_keys")]
        up: BTreeMap<u32, Vec<(u32, f64)>>,
        #[serde(deserialize_with = "int_keys")]
        down_by_fall: BTreeMap<usize, DownRule>,
        #[serde(default = "default_true")]
        floor_resets: bool,
        kappa: KappaSchedule,
        #[serde(rename = "M1", default, skip_serializing_if = "Option::is_none")]
        m1: Option<f64>,
    },
}

fn default_true() -> bool {
    true
}

/// Integer-keyed maps arrive with string keys once serde buffers a tagged enum.
fn int_keys<'de, D, K, V>(de: D) -> Result<BTreeMap<K, V>, D::Error>
where
    D: serde::Deserializer<'de>,
    K: std::str::FromStr + Ord,
    V: Deserialize<'de>,
{
    let raw = BTreeMap::<String, V>::deserialize(de)?;
    raw.into_iter()
        .map(|(k, v)| {
            k.trim().parse().map(|k| (k, v)).map_err(|_| {
                serde::de::Error::custom(format!("map key {k:?} is not a non-negative integer"))
            })
        })
        .collect()
}

#[derive(Debug, Clone)]
enum Law {
    Reference {
        q: f64,
        beta: f64,
    },
    Table {
        up: Vec<Distribution>,
        down_by_fall: BTreeMap<usize, DownRule>,
        floor_resets: bool,
    },
}

/// A complete Markov-up law with its declared assumption constants.
///
/// Immutable after construction.
#[derive(Debug, Clone)]
pub struct ProcessSpec {
    floor: u32,
    ceiling: Option<u32>,
    law: Law,
    kappa: KappaSchedule,
    m1: f64,
    doc: SpecDocument,
    id: String,
}

impl ProcessSpec {
    /// The reference family: uniform `{x, x+1, x+2}` on the floor, and above
    /// it a `-1` step with probability `1 - q β^f`, the remaining mass split
    /// evenly between staying and `+1`.
    pub fn reference(
        floor: u32,
        ceiling: Option<u32>,
        q: f64,
        beta: f64,
    ) -> Result<Self, ModelError> {
        Self::from_document(SpecDocument::Reference {
            floor,
            ceiling,
            q,
            beta,
        })
    }

    /// RM1: `N = 3`, `Nbar = 12`, `q = β = 0.5`.
    pub fn rm1() -> Self {
        Self::reference(3, Some(12), 0.5, 0.5).expect("RM1 is well formed")
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let doc: SpecDocument =
            serde_json::from_str(text).map_err(|e| ModelError::Malformed(e.to_string()))?;
        Self::from_document(doc)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.doc).expect("spec document serializes")
    }

    pub fn document(&self) -> &SpecDocument {
        &self.doc
    }

    pub fn from_document(doc: SpecDocument) -> Result<Self, ModelError> {
        let (floor, ceiling, law, kappa, declared_m1) = match &doc {
            SpecDocument::Reference {
                floor,
                ceiling,
                q,
                beta,
            } => {
                if !(0.0..=1.0).contains(q) || !(0.0..=1.0).contains(beta) {
                    return Err(ModelError::Malformed(format!(
                        "reference law needs q, beta in [0, 1], got q={q}, beta={beta}"
                    )));
                }
                let law = Law::Reference { q: *q, beta: *beta };
                (
                    *floor,
                    *ceiling,
                    law,
                    KappaSchedule::geometric(*q, *beta),
                    None,
                )
            }
            SpecDocument::Table {
                floor,
                ceiling,
                up,
                down_by_fall,
                floor_resets,
                kappa,
                m1,
            } => {
                let mut kernels = Vec::with_capacity(*ceiling as usize + 1);
                for x in 0..=*ceiling {
                    let atoms = up.get(&x).ok_or_else(|| {
                        ModelError::Malformed(format!("up kernel missing state {x}"))
                    })?;
                    if let Some(&(s, _)) = atoms.iter().find(|(s, _)| s > ceiling) {
                        return Err(ModelError::Malformed(format!(
                            "up kernel of state {x} puts mass on {s} > Nbar"
                        )));
                    }
                    kernels.push(Distribution::new(atoms.clone()).map_err(|e| {
                        ModelError::Malformed(format!("up kernel of state {x}: {e}"))
                    })?);
                }
                if let Some(&x) = up.keys().find(|&&x| x > *ceiling) {
                    return Err(ModelError::Malformed(format!(
                        "up kernel given for state {x} > Nbar"
                    )));
                }
                if down_by_fall.keys().next() != Some(&1) {
                    return Err(ModelError::Malformed(
                        "down_by_fall must start at fall length 1".into(),
                    ));
                }
                for (f, rule) in down_by_fall {
                    let total: f64 = rule.iter().map(|(_, p)| p).sum();
                    if rule.iter().any(|(_, p)| !p.is_finite() || *p < 0.0)
                        || (total - 1.0).abs() > MASS_TOLERANCE
                    {
                        return Err(ModelError::Malformed(format!(
                            "down rule for fall length {f} is not a probability vector (sum {total})"
                        )));
                    }
                }
                if let Some(m) = m1 {
                    if !(m.is_finite() && *m >= 0.0) {
                        return Err(ModelError::Malformed(format!(
                            "M1 = {m} is not a finite bound"
                        )));
                    }
                }
                let law = Law::Table {
                    up: kernels,
                    down_by_fall: down_by_fall.clone(),
                    floor_resets: *floor_resets,
                };
                (*floor, Some(*ceiling), law, kappa.clone(), *m1)
            }
        };
        if let Some(c) = ceiling {
            if c <= floor {
                return Err(ModelError::Malformed(format!(
                    "ceiling {c} must exceed floor {floor}"
                )));
            }
        }
        kappa.check_shape()?;
        let canonical = serde_json::to_vec(&doc).expect("spec document serializes");
        let id = hex::encode(&Sha256::digest(&canonical)[..8]);
        let mut spec = Self {
            floor,
            ceiling,
            law,
            kappa,
            m1: 0.0,
            doc,
            id,
        };
        spec.m1 = declared_m1.unwrap_or_else(|| spec.kernel_increment_sup());
        Ok(spec)
    }

    /// Level `N`: the floor is `[0, N]`.
    pub fn floor(&self) -> u32 {
        self.floor
    }

    pub fn ceiling(&self) -> Option<u32> {
        self.ceiling
    }

    /// Ceiling, or an error naming `what` for operations needing a finite one.
    pub fn finite_ceiling(&self, what: &str) -> Result<u32, ModelError> {
        self.ceiling
            .ok_or_else(|| ModelError::Domain(format!("{what} requires a finite Nbar")))
    }

    pub fn declared_kappa(&self) -> &KappaSchedule {
        &self.kappa
    }

    pub fn declared_m1(&self) -> f64 {
        self.m1
    }

    /// Content hash of the canonical JSON document (16 hex digits).
    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn is_reference(&self) -> bool {
        matches!(self.law, Law::Reference { .. })
    }

    /// Checks a memory lies within `[0, Nbar]`.
    pub fn check_memory(&self, mem: &MemoryState) -> Result<(), ModelError> {
        match self.ceiling {
            Some(c) if mem.max_state() > c => {
                Err(ModelError::Domain(format!("memory {mem} leaves [0, {c}]")))
            }
            _ => Ok(()),
        }
    }

    /// Law of `X_{n+1}` given the memory `(X_n, ..., X_{zeta_n})`.
    pub fn next_distribution(&self, mem: &MemoryState) -> Result<Distribution, ModelError> {
        self.check_memory(mem)?;
        let mut out = Vec::with_capacity(4);
        self.fill_next(mem, &mut out);
        Ok(Distribution::from_sorted_unchecked(out))
    }

    /// Writes the next-state atoms (sorted, positive mass) into `out`.
    /// The memory must already be known to lie in `[0, Nbar]`.
    pub(crate) fn fill_next(&self, mem: &MemoryState, out: &mut Vec<(u32, f64)>) {
        let x = mem.current();
        match &self.law {
            Law::Reference { q, beta } => {
                out.clear();
                if x <= self.floor {
                    let third = 1.0 / 3.0;
                    let mut contrib = [(x, third), (x + 1, third), (x + 2, third)];
                    for c in contrib.iter_mut() {
                        if self.ceiling.is_some_and(|cap| c.0 > cap) {
                            c.0 = x;
                        }
                    }
                    Distribution::from_contributions(&contrib, out);
                } else {
                    let cont = q * beta.powi(mem.fall_length() as i32);
                    let up = if self.ceiling == Some(x) { x } else { x + 1 };
                    let contrib = [(x - 1, 1.0 - cont), (x, cont / 2.0), (up, cont / 2.0)];
                    Distribution::from_contributions(&contrib, out);
                }
            }
            Law::Table {
                up,
                down_by_fall,
                floor_resets,
            } => {
                let use_up = mem.is_singleton() || (*floor_resets && x <= self.floor);
                if use_up {
                    out.clear();
                    out.extend_from_slice(up[x as usize].atoms());
                    out.retain(|&(_, p)| p > 0.0);
                } else {
                    let rule = down_rule(down_by_fall, mem.fall_length());
                    let cap = i64::from(self.ceiling.expect("table specs are bounded"));
                    let mut contrib: Vec<(u32, f64)> = Vec::with_capacity(rule.len());
                    for &(offset, p) in rule {
                        let target = i64::from(x) + offset;
                        let target = if target > cap {
                            i64::from(x)
                        } else {
                            target.max(0)
                        };
                        contrib.push((target as u32, p));
                    }
                    Distribution::from_contributions(&contrib, out);
                }
            }
        }
    }

    /// Sup over all memories of the mean positive one-step increment,
    /// computed from the kernel itself.
    pub fn kernel_increment_sup(&self) -> f64 {
        match &self.law {
            Law::Reference { .. } => {
                // f = 0 carries the largest up mass above the floor.
                let top = self.ceiling.unwrap_or(u32::MAX).min(self.floor + 1);
                let mut buf = Vec::new();
                (0..=top)
                    .map(|x| {
                        self.fill_next(&MemoryState::singleton(x), &mut buf);
                        Distribution::from_sorted_unchecked(buf.clone()).mean_positive_increment(x)
                    })
                    .fold(0.0, f64::max)
            }
            Law::Table {
                up, down_by_fall, ..
            } => {
                let cap = self.ceiling.expect("table specs are bounded");
                let mut best = up
                    .iter()
                    .enumerate()
                    .map(|(x, d)| d.mean_positive_increment(x as u32))
                    .fold(0.0, f64::max);
                for rule in down_by_fall.values() {
                    for x in 0..=cap {
                        let m: f64 = rule
                            .iter()
                            .filter(|&&(o, _)| o > 0 && i64::from(x) + o <= i64::from(cap))
                            .map(|&(o, p)| o as f64 * p)
                            .sum();
                        best = best.max(m);
                    }
                }
                best
            }
        }
    }
}

fn down_rule(rules: &BTreeMap<usize, DownRule>, fall: usize) -> &DownRule {
    rules
        .range(..=fall.max(1))
        .next_back()
        .map(|(_, r)| r)
        .expect("down_by_fall starts at 1")
}
