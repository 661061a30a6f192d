//! Undelayed environments, finite MDPs and recorded trajectories.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::RngCore;

use crate::delay::AugmentedState;
use crate::error::{bail, Result};
use crate::rng::sample_categorical;

/// An action, either a discrete index or a real vector.
#[derive(Clone, Debug, PartialEq)]
pub enum Action {
    Discrete(usize),
    Continuous(Vec<f64>),
}

impl Action {
    pub fn as_discrete(&self) -> Option<usize> {
        match self {
            Action::Discrete(i) => Some(*i),
            Action::Continuous(_) => None,
        }
    }

    pub fn as_continuous(&self) -> Option<&[f64]> {
        match self {
            Action::Continuous(v) => Some(v),
            Action::Discrete(_) => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ActionSpace {
    Discrete(usize),
    /// A box `[-1, 1]^d`.
    Continuous(usize),
}

impl ActionSpace {
    /// The action used to fill a fresh action buffer: index 0 or the zero vector.
    pub fn null_action(&self) -> Action {
        match *self {
            ActionSpace::Discrete(_) => Action::Discrete(0),
            ActionSpace::Continuous(d) => Action::Continuous(vec![0.0; d]),
        }
    }

    pub fn contains(&self, a: &Action) -> bool {
        match (*self, a) {
            (ActionSpace::Discrete(n), Action::Discrete(i)) => *i < n,
            (ActionSpace::Continuous(d), Action::Continuous(v)) => {
                v.len() == d && v.iter().all(|x| x.is_finite() && x.abs() <= 1.0)
            }
            _ => false,
        }
    }

    /// Number of columns an action occupies in a network input.
    pub fn width(&self) -> usize {
        match *self {
            ActionSpace::Discrete(n) | ActionSpace::Continuous(n) => n,
        }
    }

    /// Writes the network encoding of `a` (one-hot or raw) into `out`.
    pub fn encode_into(&self, a: &Action, out: &mut [f64]) {
        match a {
            Action::Discrete(i) => {
                out.iter_mut().for_each(|x| *x = 0.0);
                out[*i] = 1.0;
            }
            Action::Continuous(v) => out.copy_from_slice(v),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Observation {
    Discrete(usize),
    Continuous(Vec<f64>),
}

impl Observation {
    pub fn as_discrete(&self) -> Option<usize> {
        match self {
            Observation::Discrete(i) => Some(*i),
            Observation::Continuous(_) => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ObservationSpace {
    Discrete(usize),
    Continuous(usize),
}

impl ObservationSpace {
    pub fn width(&self) -> usize {
        match *self {
            ObservationSpace::Discrete(n) | ObservationSpace::Continuous(n) => n,
        }
    }

    pub fn encode_into(&self, s: &Observation, out: &mut [f64]) {
        match s {
            Observation::Discrete(i) => {
                out.iter_mut().for_each(|x| *x = 0.0);
                out[*i] = 1.0;
            }
            Observation::Continuous(v) => out.copy_from_slice(v),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnvStep {
    pub observation: Observation,
    pub reward: f64,
    pub terminal: bool,
}

/// An undelayed, fully observed environment.
///
/// Environments are stateless: the caller carries the current observation,
/// which doubles as the full state.
pub trait Environment {
    fn action_space(&self) -> ActionSpace;
    fn observation_space(&self) -> ObservationSpace;
    fn reset(&self, rng: &mut dyn RngCore) -> Observation;
    fn step(&self, state: &Observation, action: &Action, rng: &mut dyn RngCore) -> Result<EnvStep>;
    fn is_terminal(&self, state: &Observation) -> bool;
}

impl<E: Environment + ?Sized> Environment for &E {
    fn action_space(&self) -> ActionSpace {
        (**self).action_space()
    }
    fn observation_space(&self) -> ObservationSpace {
        (**self).observation_space()
    }
    fn reset(&self, rng: &mut dyn RngCore) -> Observation {
        (**self).reset(rng)
    }
    fn step(&self, state: &Observation, action: &Action, rng: &mut dyn RngCore) -> Result<EnvStep> {
        (**self).step(state, action, rng)
    }
    fn is_terminal(&self, state: &Observation) -> bool {
        (**self).is_terminal(state)
    }
}

/// A tabular MDP with deterministic rewards `r(s, a)`.
#[derive(Clone, Debug, PartialEq)]
pub struct FiniteMdp {
    num_states: usize,
    num_actions: usize,
    initial: Vec<f64>,
    /// Flattened `[s][a][s']`.
    transitions: Vec<f64>,
    /// Flattened `[s][a]`.
    rewards: Vec<f64>,
    terminal: Vec<bool>,
}

const ROW_TOLERANCE: f64 = 1e-12;

fn check_distribution(row: &[f64], what: &str) -> Result<()> {
    if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
        bail!(InvalidArgument, "{what} has a negative or non-finite probability");
    }
    let total: f64 = row.iter().sum();
    if (total - 1.0).abs() > ROW_TOLERANCE {
        bail!(InvalidArgument, "{what} sums to {total}, not 1");
    }
    Ok(())
}

impl FiniteMdp {
    /// `transitions[s][a]` is the next-state distribution and `rewards[s][a]`
    /// the reward for taking `a` in `s`.
    pub fn new(
        initial: Vec<f64>,
        transitions: Vec<Vec<Vec<f64>>>,
        rewards: Vec<Vec<f64>>,
        terminal: Vec<bool>,
    ) -> Result<Self> {
        let num_states = initial.len();
        if num_states == 0 {
            bail!(InvalidArgument, "an MDP needs at least one state");
        }
        check_distribution(&initial, "initial distribution")?;
        if transitions.len() != num_states || rewards.len() != num_states || terminal.len() != num_states {
            bail!(InvalidArgument, "transition, reward and terminal tables must have one entry per state");
        }
        let num_actions = transitions[0].len();
        if num_actions == 0 {
            bail!(InvalidArgument, "an MDP needs at least one action");
        }
        let mut flat_t = Vec::with_capacity(num_states * num_actions * num_states);
        let mut flat_r = Vec::with_capacity(num_states * num_actions);
        for s in 0..num_states {
            if transitions[s].len() != num_actions || rewards[s].len() != num_actions {
                bail!(InvalidArgument, "state {s} has the wrong number of actions");
            }
            for a in 0..num_actions {
                let row = &transitions[s][a];
                if row.len() != num_states {
                    bail!(InvalidArgument, "transition row ({s}, {a}) has length {}", row.len());
                }
                check_distribution(row, &alloc::format!("transition row ({s}, {a})"))?;
                if !rewards[s][a].is_finite() {
                    bail!(InvalidArgument, "reward ({s}, {a}) is not finite");
                }
                flat_t.extend_from_slice(row);
                flat_r.push(rewards[s][a]);
            }
        }
        Ok(FiniteMdp {
            num_states,
            num_actions,
            initial,
            transitions: flat_t,
            rewards: flat_r,
            terminal,
        })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    pub fn transition_row(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.num_actions + a) * self.num_states;
        &self.transitions[start..start + self.num_states]
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.rewards[s * self.num_actions + a]
    }

    pub fn terminal(&self, s: usize) -> bool {
        self.terminal[s]
    }

    pub fn terminal_flags(&self) -> &[bool] {
        &self.terminal
    }

    fn discrete_pair(&self, state: &Observation, action: &Action) -> Result<(usize, usize)> {
        let (Some(s), Some(a)) = (state.as_discrete(), action.as_discrete()) else {
            bail!(InvalidArgument, "finite MDPs take discrete states and actions");
        };
        if s >= self.num_states || a >= self.num_actions {
            bail!(InvalidArgument, "state {s} or action {a} out of range");
        }
        Ok((s, a))
    }
}

impl Environment for FiniteMdp {
    fn action_space(&self) -> ActionSpace {
        ActionSpace::Discrete(self.num_actions)
    }

    fn observation_space(&self) -> ObservationSpace {
        ObservationSpace::Discrete(self.num_states)
    }

    fn reset(&self, rng: &mut dyn RngCore) -> Observation {
        Observation::Discrete(sample_categorical(&self.initial, rng))
    }

    fn step(&self, state: &Observation, action: &Action, rng: &mut dyn RngCore) -> Result<EnvStep> {
        let (s, a) = self.discrete_pair(state, action)?;
        if self.terminal[s] {
            bail!(ContractViolation, "cannot step terminal state {s}");
        }
        let next = sample_categorical(self.transition_row(s, a), rng);
        Ok(EnvStep {
            observation: Observation::Discrete(next),
            reward: self.reward(s, a),
            terminal: self.terminal[next],
        })
    }

    fn is_terminal(&self, state: &Observation) -> bool {
        state.as_discrete().is_some_and(|s| s < self.num_states && self.terminal[s])
    }
}

/// One step of a delayed trajectory: the state reached, the reward observed
/// on arrival and whether the episode ended there.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRecord {
    pub state: AugmentedState,
    pub reward: f64,
    pub terminal: bool,
}

/// An append-only delayed trajectory `x_0, (x_1, r_1, d_1), ...`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    start: AugmentedState,
    records: Vec<TrajectoryRecord>,
    behavior: String,
}

impl Trajectory {
    pub fn new(start: AugmentedState, behavior: impl Into<String>) -> Self {
        Trajectory {
            start,
            records: Vec::new(),
            behavior: behavior.into(),
        }
    }

    pub fn push(&mut self, record: TrajectoryRecord) -> Result<()> {
        if self.records.last().is_some_and(|r| r.terminal) {
            bail!(ContractViolation, "cannot extend a trajectory past its terminal record");
        }
        self.records.push(record);
        Ok(())
    }

    pub fn start(&self) -> &AugmentedState {
        &self.start
    }

    pub fn records(&self) -> &[TrajectoryRecord] {
        &self.records
    }

    pub fn behavior(&self) -> &str {
        &self.behavior
    }

    /// Number of transitions.
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// The state at position `i`, where position 0 is the start.
    pub fn state(&self, i: usize) -> Option<&AugmentedState> {
        if i == 0 {
            Some(&self.start)
        } else {
            self.records.get(i - 1).map(|r| &r.state)
        }
    }

    /// Whether position `i` ends the episode. The start never does.
    pub fn terminal_at(&self, i: usize) -> bool {
        i > 0 && self.records.get(i - 1).is_some_and(|r| r.terminal)
    }
}
