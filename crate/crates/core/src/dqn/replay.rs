use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::envs::StateVector;
use crate::error::{Error, Result};
use crate::types::TaskId;

/// `(S_{t-1}, A_{t-1}, R_t, S_t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state_prev: StateVector,
    pub action: TaskId,
    pub reward: f64,
    pub state_next: StateVector,
}

/// Bounded FIFO of transitions. Sampling is refused until `min_size` transitions are stored.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    storage: VecDeque<Transition>,
    capacity: usize,
    min_size: usize,
    state_dim: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, min_size: usize, state_dim: usize) -> Result<Self> {
        if capacity == 0 || min_size > capacity {
            return Err(Error::Config(format!(
                "replay memory needs 0 < min_size <= capacity, got {min_size} and {capacity}"
            )));
        }
        Ok(Self {
            storage: VecDeque::with_capacity(capacity.min(1 << 16)),
            capacity,
            min_size,
            state_dim,
        })
    }

    pub fn len(&self) -> usize {
        self.storage.len()
    }

    pub fn is_empty(&self) -> bool {
        self.storage.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn min_size(&self) -> usize {
        self.min_size
    }

    pub fn is_ready(&self) -> bool {
        self.storage.len() >= self.min_size
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.storage.iter()
    }

    pub fn clear(&mut self) {
        self.storage.clear();
    }

    /// Appends `t`, evicting the oldest transition when full.
    pub fn push(&mut self, t: Transition) -> Result<()> {
        for dim in [t.state_prev.dim(), t.state_next.dim()] {
            if dim != self.state_dim {
                return Err(Error::DimensionMismatch {
                    expected: self.state_dim,
                    got: dim,
                });
            }
        }
        if !t.reward.is_finite() {
            return Err(Error::NonFinite {
                context: "transition reward".into(),
            });
        }
        if self.storage.len() == self.capacity {
            self.storage.pop_front();
        }
        self.storage.push_back(t);
        Ok(())
    }

    /// Positions of `m` distinct transitions drawn uniformly, in draw order.
    pub fn sample_indices<R: Rng + ?Sized>(&self, m: usize, rng: &mut R) -> Result<Vec<usize>> {
        if !self.is_ready() {
            return Err(Error::ReplayNotReady {
                len: self.len(),
                min: self.min_size,
            });
        }
        if m > self.len() {
            return Err(Error::Config(format!(
                "minibatch of {m} exceeds {} stored transitions",
                self.len()
            )));
        }
        Ok(rand::seq::index::sample(rng, self.len(), m).into_vec())
    }

    pub fn sample<R: Rng + ?Sized>(&self, m: usize, rng: &mut R) -> Result<Vec<&Transition>> {
        Ok(self
            .sample_indices(m, rng)?
            .into_iter()
            .map(|i| &self.storage[i])
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ExperimentRng;
    use rand::SeedableRng;

    fn tr(reward: f64) -> Transition {
        let s = StateVector::new(vec![1.0, 2.0], 1).unwrap();
        Transition {
            state_prev: s.clone(),
            action: TaskId(0),
            reward,
            state_next: s,
        }
    }

    fn rewards(b: &ReplayBuffer) -> Vec<f64> {
        b.iter().map(|t| t.reward).collect()
    }

    #[test]
    fn fifo_eviction() {
        let mut b = ReplayBuffer::new(2, 1, 2).unwrap();
        for r in [1.0, 2.0, 3.0] {
            b.push(tr(r)).unwrap();
        }
        assert_eq!(rewards(&b), vec![2.0, 3.0]);
    }

    #[test]
    fn gating() {
        let mut b = ReplayBuffer::new(10, 3, 2).unwrap();
        let mut rng = ExperimentRng::seed_from_u64(0);
        b.push(tr(1.0)).unwrap();
        assert_eq!(b.len(), 1);
        b.push(tr(2.0)).unwrap();
        assert!(!b.is_ready());
        assert!(matches!(
            b.sample(1, &mut rng),
            Err(Error::ReplayNotReady { len: 2, min: 3 })
        ));
        b.push(tr(3.0)).unwrap();
        assert!(b.sample(3, &mut rng).is_ok());
        assert!(b.sample(4, &mut rng).is_err());
    }

    #[test]
    fn full_sample_is_a_permutation() {
        let mut b = ReplayBuffer::new(10, 1, 2).unwrap();
        for r in 0..10 {
            b.push(tr(r as f64)).unwrap();
        }
        let mut rng = ExperimentRng::seed_from_u64(3);
        let mut got: Vec<f64> = b
            .sample(10, &mut rng)
            .unwrap()
            .iter()
            .map(|t| t.reward)
            .collect();
        got.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(got, (0..10).map(|r| r as f64).collect::<Vec<_>>());
    }

    #[test]
    fn seeded_draw_matches_reference_fixture() {
        let mut b = ReplayBuffer::new(10, 1, 2).unwrap();
        for r in 0..10 {
            b.push(tr(r as f64)).unwrap();
        }
        let mut rng = ExperimentRng::seed_from_u64(42);
        let idx = b.sample_indices(4, &mut rng).unwrap();
        assert_eq!(idx, REFERENCE_DRAW);
    }

    // recorded once from ChaCha8 seeded with 42
    const REFERENCE_DRAW: [usize; 4] = [8, 1, 5, 9];

    #[test]
    fn rejects_wrong_dimension() {
        let mut b = ReplayBuffer::new(4, 1, 3).unwrap();
        assert!(matches!(
            b.push(tr(0.0)),
            Err(Error::DimensionMismatch {
                expected: 3,
                got: 2
            })
        ));
        assert!(ReplayBuffer::new(2, 3, 1).is_err());
    }
}
