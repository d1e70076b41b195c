//! Transitions and the replay buffer.

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    /// The episode ended in `next_state`; it is never bootstrapped from.
    pub terminal: bool,
}

impl Transition {
    pub fn is_finite(&self) -> bool {
        self.reward.is_finite()
            && self
                .state
                .iter()
                .chain(&self.action)
                .chain(&self.next_state)
                .all(|x| x.is_finite())
    }
}

/// Column-stacked transitions.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionBatch {
    pub states: Array2<f64>,
    pub actions: Array2<f64>,
    pub rewards: Vec<f64>,
    pub next_states: Array2<f64>,
    pub terminals: Vec<bool>,
}

impl TransitionBatch {
    pub fn from_transitions(items: &[&Transition]) -> Result<Self> {
        let first = items.first().ok_or(Error::EmptyBatch)?;
        let (ds, da) = (first.state.len(), first.action.len());
        let n = items.len();
        let mut states = Array2::zeros((n, ds));
        let mut actions = Array2::zeros((n, da));
        let mut next_states = Array2::zeros((n, ds));
        for (i, t) in items.iter().enumerate() {
            if t.state.len() != ds || t.next_state.len() != ds || t.action.len() != da {
                return Err(Error::Shape(format!(
                    "transition {i} has inconsistent dimensions"
                )));
            }
            states
                .row_mut(i)
                .assign(&ndarray::ArrayView1::from(&t.state[..]));
            actions
                .row_mut(i)
                .assign(&ndarray::ArrayView1::from(&t.action[..]));
            next_states
                .row_mut(i)
                .assign(&ndarray::ArrayView1::from(&t.next_state[..]));
        }
        Ok(Self {
            states,
            actions,
            rewards: items.iter().map(|t| t.reward).collect(),
            next_states,
            terminals: items.iter().map(|t| t.terminal).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    /// `[s, a]` per row.
    pub fn state_actions(&self) -> Array2<f64> {
        ndarray::concatenate(ndarray::Axis(1), &[self.states.view(), self.actions.view()])
            .expect("rows agree")
    }
}

/// Fixed-capacity ring buffer with uniform sampling and FIFO eviction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    /// Slot that the next push overwrites once full.
    head: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("replay capacity must be positive".into()));
        }
        Ok(Self {
            capacity,
            items: Vec::new(),
            head: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.head] = t;
            self.head = (self.head + 1) % self.capacity;
        }
    }

    /// Items from oldest to newest.
    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        let (newer, older) = self.items.split_at(self.head);
        older.iter().chain(newer)
    }

    /// Indices drawn uniformly with replacement.
    pub fn sample_indices<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<usize>> {
        if self.items.is_empty() || n == 0 {
            return Err(Error::EmptyBatch);
        }
        Ok((0..n)
            .map(|_| rng.random_range(0..self.items.len()))
            .collect())
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<TransitionBatch> {
        let idx = self.sample_indices(n, rng)?;
        let items: Vec<&Transition> = idx.iter().map(|&i| &self.items[i]).collect();
        TransitionBatch::from_transitions(&items)
    }

    pub fn clear(&mut self) {
        self.items.clear();
        self.head = 0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    fn t(r: f64) -> Transition {
        Transition {
            state: vec![r],
            action: vec![0.0],
            reward: r,
            next_state: vec![r + 1.0],
            terminal: false,
        }
    }

    #[test]
    fn evicts_oldest() {
        let mut b = ReplayBuffer::new(3).unwrap();
        for i in 0..3 {
            b.push(t(i as f64));
        }
        b.push(t(3.0));
        assert_eq!(b.len(), 3);
        let rewards: Vec<f64> = b.iter().map(|x| x.reward).collect();
        assert_eq!(rewards, vec![1.0, 2.0, 3.0]);
        b.push(t(4.0));
        let rewards: Vec<f64> = b.iter().map(|x| x.reward).collect();
        assert_eq!(rewards, vec![2.0, 3.0, 4.0]);
    }

    #[test]
    fn batch_layout() {
        let mut b = ReplayBuffer::new(10).unwrap();
        b.push(t(2.0));
        let batch = b.sample(4, &mut rng_from_seed(0)).unwrap();
        assert_eq!(batch.len(), 4);
        assert_eq!(batch.state_actions().dim(), (4, 2));
        assert_eq!(batch.next_states[[0, 0]], 3.0);
        assert!(ReplayBuffer::new(0).is_err());
        assert!(ReplayBuffer::new(2)
            .unwrap()
            .sample(1, &mut rng_from_seed(0))
            .is_err());
    }
}
