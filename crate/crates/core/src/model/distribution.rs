use serde::{Deserialize, Serialize};

use super::ModelError;

/// Tolerance on the total mass of a distribution.
pub const MASS_TOLERANCE: f64 = 1e-12;

/// A finite law on non-negative integer states.
///
/// Entries are kept sorted by state in ascending order; this is the order
/// used by inverse-CDF sampling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    atoms: Vec<(u32, f64)>,
}

impl Distribution {
    /// Builds a distribution from `(state, probability)` pairs.
    ///
    /// Pairs may come in any order but states must be distinct.
    pub fn new(mut atoms: Vec<(u32, f64)>) -> Result<Self, ModelError> {
        if atoms.is_empty() {
            return Err(ModelError::Malformed("empty distribution".into()));
        }
        atoms.sort_by_key(|&(s, _)| s);
        if atoms.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(ModelError::Malformed("duplicate support entry".into()));
        }
        if let Some(&(s, p)) = atoms.iter().find(|(_, p)| !p.is_finite() || *p < 0.0) {
            return Err(ModelError::Malformed(format!(
                "probability {p} at state {s} is not a non-negative number"
            )));
        }
        let total: f64 = atoms.iter().map(|(_, p)| p).sum();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(ModelError::Malformed(format!(
                "probabilities sum to {total}, not 1"
            )));
        }
        Ok(Self { atoms })
    }

    /// Point mass at `state`.
    pub fn point(state: u32) -> Self {
        Self {
            atoms: vec![(state, 1.0)],
        }
    }

    /// Accumulates `(state, mass)` contributions, merging equal states.
    /// Zero-mass entries are dropped. The caller guarantees the total is 1.
    pub(crate) fn from_contributions(contribs: &[(u32, f64)], out: &mut Vec<(u32, f64)>) {
        out.clear();
        for &(s, p) in contribs {
            if p <= 0.0 {
                continue;
            }
            match out.binary_search_by_key(&s, |&(t, _)| t) {
                Ok(i) => out[i].1 += p,
                Err(i) => out.insert(i, (s, p)),
            }
        }
    }

    pub(crate) fn from_sorted_unchecked(atoms: Vec<(u32, f64)>) -> Self {
        Self { atoms }
    }

    pub fn atoms(&self) -> &[(u32, f64)] {
        &self.atoms
    }

    pub fn support(&self) -> impl Iterator<Item = u32> + '_ {
        self.atoms.iter().map(|&(s, _)| s)
    }

    pub fn probs(&self) -> impl Iterator<Item = f64> + '_ {
        self.atoms.iter().map(|&(_, p)| p)
    }

    /// Probability of `state` (zero off the support).
    pub fn prob(&self, state: u32) -> f64 {
        self.atoms
            .binary_search_by_key(&state, |&(s, _)| s)
            .map(|i| self.atoms[i].1)
            .unwrap_or(0.0)
    }

    /// Total mass strictly below `state`.
    pub fn mass_below(&self, state: u32) -> f64 {
        self.atoms
            .iter()
            .take_while(|&&(s, _)| s < state)
            .map(|&(_, p)| p)
            .sum()
    }

    /// `sum_j (j - from)_+ P(j)`.
    pub fn mean_positive_increment(&self, from: u32) -> f64 {
        self.atoms
            .iter()
            .filter(|&&(s, _)| s > from)
            .map(|&(s, p)| f64::from(s - from) * p)
            .sum()
    }

    pub fn min_state(&self) -> u32 {
        self.atoms[0].0
    }

    pub fn max_state(&self) -> u32 {
        self.atoms[self.atoms.len() - 1].0
    }

    /// Inverse-CDF draw for a uniform `u` in `[0, 1)`.
    pub fn sample(&self, u: f64) -> u32 {
        sample_atoms(&self.atoms, u)
    }
}

/// Inverse-CDF over atoms sorted by state. Rounding slack at the top goes
/// to the last atom with positive mass.
pub(crate) fn sample_atoms(atoms: &[(u32, f64)], u: f64) -> u32 {
    let mut acc = 0.0;
    for &(s, p) in atoms {
        acc += p;
        if u < acc {
            return s;
        }
    }
    atoms
        .iter()
        .rev()
        .find(|(_, p)| *p > 0.0)
        .map(|&(s, _)| s)
        .unwrap_or(atoms[atoms.len() - 1].0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_mass() {
        assert!(matches!(
            Distribution::new(vec![(0, 0.5), (1, 0.4)]),
            Err(ModelError::Malformed(_))
        ));
        assert!(Distribution::new(vec![(0, -0.1), (1, 1.1)]).is_err());
        assert!(Distribution::new(vec![(1, 0.5), (1, 0.5)]).is_err());
        assert!(Distribution::new(vec![]).is_err());
    }

    #[test]
    fn sorted_and_sampled_in_ascending_order() {
        let d = Distribution::new(vec![(5, 0.25), (3, 0.5), (4, 0.25)]).unwrap();
        assert_eq!(d.support().collect::<Vec<_>>(), vec![3, 4, 5]);
        assert_eq!(d.sample(0.0), 3);
        assert_eq!(d.sample(0.49), 3);
        assert_eq!(d.sample(0.5), 4);
        assert_eq!(d.sample(0.76), 5);
        assert_eq!(d.sample(0.999_999_999_999), 5);
        assert_eq!(d.mass_below(4), 0.5);
        assert_eq!(d.mean_positive_increment(3), 0.25 + 0.5);
    }
}
