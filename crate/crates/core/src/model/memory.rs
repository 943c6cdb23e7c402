use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ModelError;

/// The non-Markov state `(X_n, ..., X_{zeta_n})`: the current value followed
/// by the values visited since the current strict fall began.
///
/// `path[0]` is the current state and the path is strictly increasing. A
/// singleton means the last move was up or stay.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<u32>", into = "Vec<u32>")]
pub struct MemoryState {
    path: Vec<u32>,
}

impl MemoryState {
    pub fn singleton(state: u32) -> Self {
        Self { path: vec![state] }
    }

    /// Validates a fall path given current-state first.
    pub fn from_path(path: Vec<u32>) -> Result<Self, ModelError> {
        if path.is_empty() {
            return Err(ModelError::Domain("memory path is empty".into()));
        }
        if path.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ModelError::Domain(format!(
                "memory path {path:?} is not strictly increasing"
            )));
        }
        Ok(Self { path })
    }

    /// Current state `X_n`.
    pub fn current(&self) -> u32 {
        self.path[0]
    }

    /// Number of consecutive strict down-steps so far (`k`).
    pub fn fall_length(&self) -> usize {
        self.path.len() - 1
    }

    pub fn is_singleton(&self) -> bool {
        self.path.len() == 1
    }

    pub fn path(&self) -> &[u32] {
        &self.path
    }

    /// State where the current fall started (`X_{zeta_n}`).
    pub fn fall_start(&self) -> u32 {
        self.path[self.path.len() - 1]
    }

    pub fn max_state(&self) -> u32 {
        self.fall_start()
    }

    /// Memory after moving to `next`: up or stay forgets everything, a strict
    /// decrease extends the fall.
    pub fn update(&self, next: u32) -> Self {
        let mut m = self.clone();
        m.advance(next);
        m
    }

    /// In-place form of [`MemoryState::update`].
    pub fn advance(&mut self, next: u32) {
        if next >= self.path[0] {
            self.path.clear();
            self.path.push(next);
        } else {
            self.path.insert(0, next);
        }
    }

    /// Dash-joined rendering used in CSV outputs, e.g. `4-5-6`.
    pub fn dash_joined(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for MemoryState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, s) in self.path.iter().enumerate() {
            if i > 0 {
                f.write_str("-")?;
            }
            write!(f, "{s}")?;
        }
        Ok(())
    }
}

impl FromStr for MemoryState {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let path = s
            .split('-')
            .map(|t| {
                t.trim()
                    .parse::<u32>()
                    .map_err(|e| ModelError::Domain(format!("bad memory entry {t:?}: {e}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_path(path)
    }
}

impl TryFrom<Vec<u32>> for MemoryState {
    type Error = ModelError;

    fn try_from(path: Vec<u32>) -> Result<Self, Self::Error> {
        Self::from_path(path)
    }
}

impl From<MemoryState> for Vec<u32> {
    fn from(m: MemoryState) -> Self {
        m.path
    }
}

/// Canonical ordering of extended states: by length, then lexicographic.
pub fn canonical_cmp(a: &MemoryState, b: &MemoryState) -> std::cmp::Ordering {
    a.path
        .len()
        .cmp(&b.path.len())
        .then_with(|| a.path.cmp(&b.path))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mem(p: &[u32]) -> MemoryState {
        MemoryState::from_path(p.to_vec()).unwrap()
    }

    #[test]
    fn update_examples() {
        assert_eq!(mem(&[5]).update(7), mem(&[7]));
        assert_eq!(mem(&[5]).update(4), mem(&[4, 5]));
        assert_eq!(mem(&[4, 5, 6]).update(4), mem(&[4]));
        assert_eq!(mem(&[4, 5, 6]).update(2), mem(&[2, 4, 5, 6]));
        assert_eq!(mem(&[4, 5, 6]).update(5), mem(&[5]));
    }

    #[test]
    fn rejects_non_increasing_paths() {
        assert!(MemoryState::from_path(vec![]).is_err());
        assert!(MemoryState::from_path(vec![4, 4]).is_err());
        assert!(MemoryState::from_path(vec![5, 4]).is_err());
    }

    #[test]
    fn dash_round_trip() {
        let m = mem(&[2, 4, 5, 6]);
        assert_eq!(m.to_string(), "2-4-5-6");
        assert_eq!("2-4-5-6".parse::<MemoryState>().unwrap(), m);
        assert!("6-5".parse::<MemoryState>().is_err());
    }
}
