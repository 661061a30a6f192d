//! Replay memory with fragment sampling.

use alloc::vec::Vec;

use rand::{Rng, RngCore};

use crate::delay::AugmentedState;
use crate::error::{bail, Result};
use crate::mdp::{Action, TrajectoryRecord};
use crate::resampling::ValidSubTrajectory;

/// One agent tick: `x_t`, the action sent, then `r_{t+1}`, `x_{t+1}`.
#[derive(Clone, Debug, PartialEq)]
pub struct ReplayRecord {
    pub state: AugmentedState,
    pub action: Action,
    pub reward: f64,
    pub next_state: AugmentedState,
    pub terminal: bool,
    /// The episode stopped after this record, by termination or truncation.
    pub episode_end: bool,
}

/// A ring buffer of records in arrival order.
#[derive(Clone, Debug)]
pub struct ReplayMemory {
    capacity: usize,
    records: Vec<ReplayRecord>,
    /// Slot of the oldest record once the ring is full.
    head: usize,
}

impl ReplayMemory {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            bail!(InvalidArgument, "replay capacity must be positive");
        }
        Ok(ReplayMemory {
            capacity,
            records: Vec::new(),
            head: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Appends a record, evicting the oldest one when full.
    pub fn push(&mut self, record: ReplayRecord) -> Result<()> {
        if record.terminal && !record.episode_end {
            bail!(ContractViolation, "a terminal record must end its episode");
        }
        if self.records.len() < self.capacity {
            self.records.push(record);
        } else {
            self.records[self.head] = record;
            self.head = (self.head + 1) % self.capacity;
        }
        Ok(())
    }

    /// The `i`-th oldest record.
    pub fn get(&self, i: usize) -> Option<&ReplayRecord> {
        if i >= self.records.len() {
            return None;
        }
        Some(&self.records[(self.head + i) % self.records.len()])
    }

    pub fn iter(&self) -> impl Iterator<Item = &ReplayRecord> {
        (0..self.len()).filter_map(|i| self.get(i))
    }

    /// A uniformly drawn record index.
    pub fn sample_index(&self, rng: &mut dyn RngCore) -> Result<usize> {
        if self.records.is_empty() {
            return Err(crate::Error::EmptyStore);
        }
        Ok(rng.random_range(0..self.records.len()))
    }

    /// The longest valid fragment starting at record `i`, with at most
    /// `max_len` steps. It never crosses an episode boundary or the newest
    /// record.
    pub fn fragment(&self, i: usize, max_len: usize) -> Result<ValidSubTrajectory> {
        let Some(first) = self.get(i) else {
            bail!(InvalidArgument, "record {i} beyond memory length {}", self.len());
        };
        let cap = max_len.min(first.state.buffer.len());
        let mut steps = Vec::with_capacity(cap);
        for t in 1..=cap {
            let Some(rec) = self.get(i + t - 1) else { break };
            if rec.next_state.total_delay() < t {
                break;
            }
            steps.push(TrajectoryRecord {
                state: rec.next_state.clone(),
                reward: rec.reward,
                terminal: rec.terminal,
            });
            if rec.episode_end {
                break;
            }
        }
        ValidSubTrajectory::new(first.state.clone(), steps)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::delay::ActionBuffer;
    use crate::mdp::Observation;
    use crate::rng::seeded;

    fn x(obs: usize, alpha: usize, beta: usize) -> AugmentedState {
        AugmentedState {
            obs: Observation::Discrete(obs),
            buffer: ActionBuffer::filled(3, Action::Discrete(0)).unwrap(),
            alpha,
            beta,
            kappa: None,
        }
    }

    fn rec(i: usize, next_delay: (usize, usize), episode_end: bool) -> ReplayRecord {
        ReplayRecord {
            state: x(i, 1, 2),
            action: Action::Discrete(0),
            reward: i as f64,
            next_state: x(i + 1, next_delay.0, next_delay.1),
            terminal: false,
            episode_end,
        }
    }

    #[test]
    fn ring_evicts_oldest() {
        let mut m = ReplayMemory::new(3).unwrap();
        for i in 0..5 {
            m.push(rec(i, (1, 2), false)).unwrap();
        }
        assert_eq!(m.len(), 3);
        let rewards: Vec<f64> = m.iter().map(|r| r.reward).collect();
        assert_eq!(rewards, [2.0, 3.0, 4.0]);
    }

    #[test]
    fn fragment_stops_at_episode_end_and_newest_record() {
        let mut m = ReplayMemory::new(10).unwrap();
        m.push(rec(0, (1, 2), false)).unwrap();
        m.push(rec(1, (1, 2), true)).unwrap();
        m.push(rec(2, (1, 2), false)).unwrap();
        assert_eq!(m.fragment(0, 3).unwrap().len(), 2);
        assert_eq!(m.fragment(2, 3).unwrap().len(), 1);
        assert_eq!(m.fragment(0, 1).unwrap().len(), 1);
    }

    #[test]
    fn fragment_respects_validity() {
        let mut m = ReplayMemory::new(10).unwrap();
        m.push(rec(0, (0, 1), false)).unwrap();
        m.push(rec(1, (0, 1), false)).unwrap();
        assert_eq!(m.fragment(0, 3).unwrap().len(), 1);
    }

    #[test]
    fn terminal_without_episode_end_is_rejected() {
        let mut m = ReplayMemory::new(2).unwrap();
        let mut r = rec(0, (1, 1), false);
        r.terminal = true;
        assert!(m.push(r).is_err());
    }

    #[test]
    fn empty_memory_cannot_be_sampled() {
        let m = ReplayMemory::new(2).unwrap();
        assert_eq!(m.sample_index(&mut seeded(0)), Err(crate::Error::EmptyStore));
    }
}
