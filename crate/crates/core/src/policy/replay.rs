//! FIFO replay buffer with uniform minibatch sampling.

use ndarray::{Array1, Array2};
use rand::seq::index;

use super::obs::{Observation, ACTION_DIM, OBS_DIM};
use crate::rng::SimRng;

pub const DEFAULT_CAPACITY: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct Batch<T> {
    pub obs: Array2<T>,
    /// Normalized actions in `[-1, 1]`.
    pub actions: Array2<T>,
    pub rewards: Array1<T>,
    pub next_obs: Array2<T>,
    /// 1 for terminal transitions, 0 otherwise (including time limits).
    pub dones: Array1<T>,
}

const ROW: usize = 2 * OBS_DIM + ACTION_DIM + 2;

/// Transitions are stored as `f32` rows; the ring is grown lazily up to its
/// capacity and then overwrites the oldest entry.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    data: Vec<f32>,
    len: usize,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "capacity must be positive");
        Self {
            capacity,
            data: Vec::new(),
            len: 0,
            next: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(
        &mut self,
        obs: &Observation,
        action: &[f64; ACTION_DIM],
        reward: f64,
        next_obs: &Observation,
        done: bool,
    ) {
        let done = if done { 1.0 } else { 0.0 };
        let row = obs
            .0
            .iter()
            .chain(action)
            .chain(std::iter::once(&reward))
            .chain(&next_obs.0)
            .chain(std::iter::once(&done))
            .map(|&x| x as f32);
        if self.len < self.capacity {
            self.data.extend(row);
            self.len += 1;
        } else {
            let start = self.next * ROW;
            for (dst, x) in self.data[start..start + ROW].iter_mut().zip(row) {
                *dst = x;
            }
        }
        self.next = (self.next + 1) % self.capacity;
    }

    /// Reward of the `i`-th oldest stored transition.
    pub fn reward_at(&self, i: usize) -> f32 {
        let slot = if self.len < self.capacity {
            i
        } else {
            (self.next + i) % self.capacity
        };
        self.data[slot * ROW + OBS_DIM + ACTION_DIM]
    }

    /// Uniform sample of distinct transitions.
    pub fn sample(&self, batch_size: usize, rng: &mut SimRng) -> Batch<f32> {
        assert!(
            batch_size <= self.len,
            "buffer holds {} transitions, batch needs {batch_size}",
            self.len
        );
        let picks = index::sample(rng, self.len, batch_size);
        let mut obs = Array2::zeros((batch_size, OBS_DIM));
        let mut actions = Array2::zeros((batch_size, ACTION_DIM));
        let mut rewards = Array1::zeros(batch_size);
        let mut next_obs = Array2::zeros((batch_size, OBS_DIM));
        let mut dones = Array1::zeros(batch_size);
        for (b, i) in picks.iter().enumerate() {
            let row = &self.data[i * ROW..(i + 1) * ROW];
            let mut k = 0;
            for j in 0..OBS_DIM {
                obs[[b, j]] = row[k];
                k += 1;
            }
            for j in 0..ACTION_DIM {
                actions[[b, j]] = row[k];
                k += 1;
            }
            rewards[b] = row[k];
            k += 1;
            for j in 0..OBS_DIM {
                next_obs[[b, j]] = row[k];
                k += 1;
            }
            dones[b] = row[k];
        }
        Batch {
            obs,
            actions,
            rewards,
            next_obs,
            dones,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Stream};

    fn fill(buf: &mut ReplayBuffer, n: usize) {
        for i in 0..n {
            let o = Observation([i as f64; OBS_DIM]);
            buf.push(&o, &[0.0; ACTION_DIM], i as f64, &o, false);
        }
    }

    #[test]
    fn evicts_oldest_first() {
        let mut buf = ReplayBuffer::new(5);
        fill(&mut buf, 8);
        assert_eq!(buf.len(), 5);
        let stored: Vec<f32> = (0..5).map(|i| buf.reward_at(i)).collect();
        assert_eq!(stored, vec![3.0, 4.0, 5.0, 6.0, 7.0]);
    }

    #[test]
    fn batches_have_distinct_rows() {
        let mut buf = ReplayBuffer::new(100);
        fill(&mut buf, 64);
        let mut rng = stream_rng(0, Stream::Replay, 0);
        let b = buf.sample(64, &mut rng);
        let mut r: Vec<i32> = b.rewards.iter().map(|&x| x as i32).collect();
        r.sort_unstable();
        assert_eq!(r, (0..64).collect::<Vec<_>>());
        assert_eq!(b.obs[[3, 0]], b.rewards[3]);
    }

    #[test]
    fn same_seed_same_batch() {
        let mut buf = ReplayBuffer::new(1000);
        fill(&mut buf, 500);
        let a = buf.sample(32, &mut stream_rng(9, Stream::Replay, 0));
        let b = buf.sample(32, &mut stream_rng(9, Stream::Replay, 0));
        assert_eq!(a, b);
    }

    #[test]
    fn default_capacity_is_a_million() {
        assert!(ReplayBuffer::new(DEFAULT_CAPACITY).capacity() >= 1_000_000);
    }
}
