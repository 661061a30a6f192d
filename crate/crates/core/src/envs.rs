//! Desk-scale benchmark environments.
//!
//! Environments carry no episode clock; horizons are enforced by the
//! training loop as truncations, not terminal states.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, RngCore};

use crate::error::{bail, Result};
use crate::mdp::{Action, ActionSpace, EnvStep, Environment, FiniteMdp, Observation, ObservationSpace};

pub const LEFT: usize = 0;
pub const RIGHT: usize = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OneDReward {
    /// +1 on reaching the rightmost cell.
    Bonus,
    /// The change in position on every step.
    Delta,
}

/// A row of cells; the agent moves left or right one cell per step and the
/// episode ends in the rightmost cell. It starts in the middle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OneDWorld {
    pub num_cells: usize,
    pub reward: OneDReward,
}

impl OneDWorld {
    pub fn new(num_cells: usize, reward: OneDReward) -> Result<Self> {
        if num_cells < 2 {
            bail!(InvalidArgument, "a 1D world needs at least two cells");
        }
        Ok(OneDWorld { num_cells, reward })
    }

    pub fn start(&self) -> usize {
        self.num_cells / 2
    }

    /// The equivalent tabular MDP, for the oracle.
    pub fn to_finite_mdp(&self) -> FiniteMdp {
        let n = self.num_cells;
        let mut initial = vec![0.0; n];
        initial[self.start()] = 1.0;
        let mut transitions = Vec::with_capacity(n);
        let mut rewards = Vec::with_capacity(n);
        for s in 0..n {
            let mut rows = Vec::new();
            let mut rs = Vec::new();
            for a in [LEFT, RIGHT] {
                let next = self.next_cell(s, a);
                let mut row = vec![0.0; n];
                row[next] = 1.0;
                rows.push(row);
                rs.push(self.reward_for(s, next));
            }
            transitions.push(rows);
            rewards.push(rs);
        }
        let mut terminal = vec![false; n];
        terminal[n - 1] = true;
        FiniteMdp::new(initial, transitions, rewards, terminal).expect("1D world tables are well formed")
    }

    fn next_cell(&self, s: usize, a: usize) -> usize {
        if a == RIGHT {
            (s + 1).min(self.num_cells - 1)
        } else {
            s.saturating_sub(1)
        }
    }

    fn reward_for(&self, s: usize, next: usize) -> f64 {
        match self.reward {
            OneDReward::Bonus => f64::from(u8::from(next == self.num_cells - 1 && s != next)),
            OneDReward::Delta => next as f64 - s as f64,
        }
    }
}

impl Default for OneDWorld {
    fn default() -> Self {
        OneDWorld {
            num_cells: 7,
            reward: OneDReward::Bonus,
        }
    }
}

impl Environment for OneDWorld {
    fn action_space(&self) -> ActionSpace {
        ActionSpace::Discrete(2)
    }

    fn observation_space(&self) -> ObservationSpace {
        ObservationSpace::Discrete(self.num_cells)
    }

    fn reset(&self, _rng: &mut dyn RngCore) -> Observation {
        Observation::Discrete(self.start())
    }

    fn step(&self, state: &Observation, action: &Action, _rng: &mut dyn RngCore) -> Result<EnvStep> {
        let (Some(s), Some(a)) = (state.as_discrete(), action.as_discrete()) else {
            bail!(InvalidArgument, "the 1D world takes discrete cells and actions");
        };
        if s >= self.num_cells || a > RIGHT {
            bail!(InvalidArgument, "cell {s} or action {a} out of range");
        }
        if s == self.num_cells - 1 {
            bail!(ContractViolation, "cannot step the terminal cell");
        }
        let next = self.next_cell(s, a);
        Ok(EnvStep {
            observation: Observation::Discrete(next),
            reward: self.reward_for(s, next),
            terminal: next == self.num_cells - 1,
        })
    }

    fn is_terminal(&self, state: &Observation) -> bool {
        state.as_discrete() == Some(self.num_cells - 1)
    }
}

/// A unit mass on a segment `[-1, 1]` pushed by a force in `[-1, 1]`.
/// Hitting a wall stops it. Reward is `-(position - goal)^2 * dt`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PointMass {
    pub dt: f64,
    pub goal: f64,
    /// Force multiplier.
    pub gain: f64,
    /// Start positions are uniform in `start +- start_spread`, at rest.
    pub start: f64,
    pub start_spread: f64,
}

impl Default for PointMass {
    fn default() -> Self {
        PointMass {
            dt: 0.1,
            goal: 0.5,
            gain: 5.0,
            start: -0.5,
            start_spread: 0.1,
        }
    }
}

impl Environment for PointMass {
    fn action_space(&self) -> ActionSpace {
        ActionSpace::Continuous(1)
    }

    fn observation_space(&self) -> ObservationSpace {
        ObservationSpace::Continuous(2)
    }

    fn reset(&self, rng: &mut dyn RngCore) -> Observation {
        let x = if self.start_spread > 0.0 {
            self.start + rng.random_range(-self.start_spread..self.start_spread)
        } else {
            self.start
        };
        Observation::Continuous(vec![x.clamp(-1.0, 1.0), 0.0])
    }

    fn step(&self, state: &Observation, action: &Action, _rng: &mut dyn RngCore) -> Result<EnvStep> {
        let Observation::Continuous(s) = state else {
            bail!(InvalidArgument, "point mass states are [position, velocity]");
        };
        let Some(a) = action.as_continuous().filter(|a| a.len() == 1) else {
            bail!(InvalidArgument, "point mass actions are one-dimensional");
        };
        if s.len() != 2 || !a[0].is_finite() {
            bail!(InvalidArgument, "malformed point mass state or action");
        }
        let force = a[0].clamp(-1.0, 1.0) * self.gain;
        let mut v = s[1] + force * self.dt;
        let mut x = s[0] + v * self.dt;
        if !(-1.0..=1.0).contains(&x) {
            x = x.clamp(-1.0, 1.0);
            v = 0.0;
        }
        let err = x - self.goal;
        Ok(EnvStep {
            observation: Observation::Continuous(vec![x, v]),
            reward: -err * err * self.dt,
            terminal: false,
        })
    }

    fn is_terminal(&self, _state: &Observation) -> bool {
        false
    }
}

/// Two states; action `a` moves to state `a`, and choosing 1 while in
/// state 1 pays 1. Staying in state 1 is optimal.
pub fn reward_chain() -> FiniteMdp {
    FiniteMdp::new(
        vec![1.0, 0.0],
        vec![vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![vec![1.0, 0.0], vec![0.0, 1.0]]],
        vec![vec![0.0, 0.0], vec![0.0, 1.0]],
        vec![false, false],
    )
    .expect("reward chain tables are well formed")
}

/// Exposes a discrete environment through a continuous action in `[-1, 1]`
/// split into equal bins, so Gaussian-policy agents can act on it.
#[derive(Clone, Debug, PartialEq)]
pub struct Binned<E> {
    pub inner: E,
}

impl<E: Environment> Binned<E> {
    pub fn new(inner: E) -> Result<Self> {
        match inner.action_space() {
            ActionSpace::Discrete(n) if n >= 2 => Ok(Binned { inner }),
            _ => bail!(InvalidArgument, "binning needs a discrete action space with at least two actions"),
        }
    }

    fn num_actions(&self) -> usize {
        self.inner.action_space().width()
    }

    /// The discrete action a continuous one maps to.
    pub fn bin(&self, action: &Action) -> Result<Action> {
        let Some(&[u]) = action.as_continuous() else {
            bail!(InvalidArgument, "binned environments take one-dimensional actions");
        };
        if !u.is_finite() {
            bail!(InvalidArgument, "non-finite action");
        }
        let n = self.num_actions();
        let i = (((u.clamp(-1.0, 1.0) + 1.0) / 2.0) * n as f64) as usize;
        Ok(Action::Discrete(i.min(n - 1)))
    }
}

impl<E: Environment> Environment for Binned<E> {
    fn action_space(&self) -> ActionSpace {
        ActionSpace::Continuous(1)
    }

    fn observation_space(&self) -> ObservationSpace {
        self.inner.observation_space()
    }

    fn reset(&self, rng: &mut dyn RngCore) -> Observation {
        self.inner.reset(rng)
    }

    fn step(&self, state: &Observation, action: &Action, rng: &mut dyn RngCore) -> Result<EnvStep> {
        let a = self.bin(action)?;
        self.inner.step(state, &a, rng)
    }

    fn is_terminal(&self, state: &Observation) -> bool {
        self.inner.is_terminal(state)
    }
}

/// The benchmark environments by name, with their default horizons.
#[derive(Clone, Debug, PartialEq)]
pub enum BenchEnv {
    OneD(Binned<OneDWorld>),
    PointMass(PointMass),
    Chain(Binned<FiniteMdp>),
}

impl BenchEnv {
    pub fn by_name(name: &str) -> Result<Self> {
        Ok(match name {
            "one-d" => BenchEnv::OneD(Binned::new(OneDWorld::default())?),
            "one-d-delta" => BenchEnv::OneD(Binned::new(OneDWorld::new(7, OneDReward::Delta)?)?),
            "point-mass" => BenchEnv::PointMass(PointMass::default()),
            "chain" => BenchEnv::Chain(Binned::new(reward_chain())?),
            _ => bail!(Config, "unknown environment `{name}` (expected one-d, one-d-delta, point-mass or chain)"),
        })
    }

    pub fn default_horizon(&self) -> usize {
        match self {
            BenchEnv::OneD(_) => 50,
            BenchEnv::PointMass(_) => 100,
            BenchEnv::Chain(_) => 20,
        }
    }

    fn inner(&self) -> &dyn Environment {
        match self {
            BenchEnv::OneD(e) => e,
            BenchEnv::PointMass(e) => e,
            BenchEnv::Chain(e) => e,
        }
    }
}

impl Environment for BenchEnv {
    fn action_space(&self) -> ActionSpace {
        self.inner().action_space()
    }

    fn observation_space(&self) -> ObservationSpace {
        self.inner().observation_space()
    }

    fn reset(&self, rng: &mut dyn RngCore) -> Observation {
        self.inner().reset(rng)
    }

    fn step(&self, state: &Observation, action: &Action, rng: &mut dyn RngCore) -> Result<EnvStep> {
        self.inner().step(state, action, rng)
    }

    fn is_terminal(&self, state: &Observation) -> bool {
        self.inner().is_terminal(state)
    }
}
