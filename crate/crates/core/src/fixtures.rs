//! Small named problems shared by the command line checks and the tests.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::agents::{ReplayMemory, ReplayRecord};
use crate::delay::{ActionBuffer, AugmentedState, ChannelConfig, ChannelSim, DelayProcess};
use crate::envs::PointMass;
use crate::error::Result;
use crate::estimators::BiasFixture;
use crate::mdp::{Action, ActionSpace, FiniteMdp, Observation, Trajectory, TrajectoryRecord};
use crate::oracle::{AugmentedFiniteMdp, ValidityMode};
use crate::policy::{DiscreteKey, Policy, TabularPolicy};
use crate::rng::stream;

/// Two states, two actions, stochastic transitions and mixed rewards.
pub fn two_state_mdp() -> FiniteMdp {
    FiniteMdp::new(
        vec![1.0, 0.0],
        vec![vec![vec![0.75, 0.25], vec![0.25, 0.75]], vec![vec![0.5, 0.5], vec![0.0, 1.0]]],
        vec![vec![0.0, 1.0], vec![0.5, -1.0]],
        vec![false, false],
    )
    .expect("valid tables")
}

/// Three states, two actions; every transition row has full support, so
/// any policy induces an ergodic chain.
pub fn three_state_mdp() -> FiniteMdp {
    FiniteMdp::new(
        vec![0.5, 0.25, 0.25],
        vec![
            vec![vec![0.6, 0.3, 0.1], vec![0.1, 0.2, 0.7]],
            vec![vec![0.3, 0.4, 0.3], vec![0.5, 0.25, 0.25]],
            vec![vec![0.2, 0.2, 0.6], vec![0.7, 0.2, 0.1]],
        ],
        vec![vec![1.0, 0.0], vec![-0.5, 2.0], vec![0.25, -1.0]],
        vec![false; 3],
    )
    .expect("valid tables")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DelayCase {
    Constant11,
    Constant12,
    /// iid `alpha` on {0, 1} and `beta` on {1, 2}.
    Random12,
}

impl DelayCase {
    pub const ALL: [DelayCase; 3] = [DelayCase::Constant11, DelayCase::Constant12, DelayCase::Random12];

    pub fn name(self) -> &'static str {
        match self {
            DelayCase::Constant11 => "const11",
            DelayCase::Constant12 => "const12",
            DelayCase::Random12 => "random12",
        }
    }

    pub fn processes(self) -> (DelayProcess, DelayProcess) {
        match self {
            DelayCase::Constant11 => (DelayProcess::constant(1), DelayProcess::constant(1)),
            DelayCase::Constant12 => (DelayProcess::constant(1), DelayProcess::constant(2)),
            DelayCase::Random12 => (
                DelayProcess::histogram(vec![0.5, 0.5]).expect("normalized"),
                DelayProcess::histogram(vec![0.0, 0.4, 0.6]).expect("normalized"),
            ),
        }
    }

    /// Longest fragment that satisfies the validity condition on every path,
    /// or `None` when some paths break it earlier.
    fn guaranteed_len(self) -> Option<usize> {
        match self {
            DelayCase::Constant11 => Some(2),
            DelayCase::Constant12 => Some(3),
            DelayCase::Random12 => None,
        }
    }
}

/// A stochastic tabular policy that depends on the whole augmented state,
/// buffer included, with rows spread over (0.15, 0.85).
pub fn scrambled_policy(aug: &AugmentedFiniteMdp, phase: f64) -> Result<Policy> {
    let mut table = TabularPolicy::uniform_default(vec![0.5, 0.5])?;
    for x in 0..aug.num_states() {
        let frac = ((x as f64 + 1.0) * 0.618_033_988_749_895 + phase).fract();
        let p = 0.15 + 0.7 * frac;
        table.set_state(DiscreteKey::of(&aug.state(x))?, vec![p, 1.0 - p])?;
    }
    Ok(Policy::Tabular(table))
}

/// One entry of the resampling-identity matrix.
pub struct SigmaFixture {
    pub name: String,
    pub aug: AugmentedFiniteMdp,
    pub pi: Policy,
    pub mu: Policy,
    pub x0: usize,
    pub n: usize,
    pub mode: ValidityMode,
}

/// {2, 3}-state MDPs x {constant(1,1), constant(1,2), random} delays x
/// {deterministic, stochastic} behaviour/target pairs x n = 1..=3, from
/// every initial base state. Constant delays stop at the longest valid n;
/// random delays compare only paths satisfying the validity condition.
pub fn sigma_fixtures() -> Result<Vec<SigmaFixture>> {
    let mut out = Vec::new();
    for (mdp_name, mdp) in [("s2", two_state_mdp()), ("s3", three_state_mdp())] {
        for case in DelayCase::ALL {
            let (pa, pb) = case.processes();
            let aug = AugmentedFiniteMdp::build(mdp.clone(), pa, pb)?;
            let pairs = [
                (
                    "det",
                    Policy::Constant(Action::Discrete(1)),
                    Policy::Constant(Action::Discrete(0)),
                ),
                ("stoch", scrambled_policy(&aug, 0.0)?, scrambled_policy(&aug, 0.5)?),
            ];
            let max_n = case.guaranteed_len().unwrap_or(3).min(3);
            let mode = match case.guaranteed_len() {
                Some(_) => ValidityMode::Strict,
                None => ValidityMode::Filter,
            };
            for (policy_name, pi, mu) in pairs {
                for s in 0..mdp.num_states() {
                    let x0 = aug.initial_index(s)?;
                    for n in 1..=max_n {
                        out.push(SigmaFixture {
                            name: format!("{mdp_name}-{}-{policy_name}-x{s}-n{n}", case.name()),
                            aug: aug.clone(),
                            pi: pi.clone(),
                            mu: mu.clone(),
                            x0,
                            n,
                            mode,
                        });
                    }
                }
            }
        }
    }
    Ok(out)
}

/// The bias probe on constant delays `alpha = 1`, `beta = 4`, which keeps
/// fragments up to length 5 valid; `off_policy` adds a behaviour policy
/// whose trajectories are resampled.
pub fn bias_fixture(off_policy: bool) -> Result<BiasFixture> {
    let aug = AugmentedFiniteMdp::build(two_state_mdp(), DelayProcess::constant(1), DelayProcess::constant(4))?;
    let pi = scrambled_policy(&aug, 0.25)?;
    let mu = if off_policy { Some(scrambled_policy(&aug, 0.75)?) } else { None };
    Ok(BiasFixture {
        x0: aug.initial_index(0)?,
        aug,
        pi,
        mu,
    })
}

/// The ergodic fixture for the steady-state bias identity: three states
/// and constant delays `alpha = 0`, `beta = 1`.
pub fn steady_state_fixture() -> Result<(AugmentedFiniteMdp, Policy)> {
    let aug = AugmentedFiniteMdp::build(three_state_mdp(), DelayProcess::constant(0), DelayProcess::constant(1))?;
    let pi = scrambled_policy(&aug, 0.1)?;
    Ok((aug, pi))
}

pub const LEFT: usize = 0;
pub const RIGHT: usize = 1;

fn walk_state(cell: usize, buffer: [usize; 3], alpha: usize, beta: usize) -> AugmentedState {
    AugmentedState {
        obs: Observation::Discrete(cell),
        buffer: ActionBuffer::from_entries(buffer.iter().map(|&a| Action::Discrete(a)).collect()).expect("K = 3"),
        alpha,
        beta,
        kappa: None,
    }
}

/// A 1D-world trajectory with `K = 3` collected by "always go left": the
/// start and three transitions with total delays 3, 2, 2, 2, so the
/// validity condition holds for two steps and fails at the third.
pub fn left_walk() -> Trajectory {
    let l = [LEFT; 3];
    let mut traj = Trajectory::new(walk_state(3, l, 1, 2), "always-left");
    for (cell, alpha, beta) in [(3, 1, 1), (2, 0, 2), (1, 1, 1)] {
        traj.push(TrajectoryRecord {
            state: walk_state(cell, l, alpha, beta),
            reward: 0.0,
            terminal: false,
        })
        .expect("non-terminal records");
    }
    traj
}

/// A replay memory filled by uniformly random actions on the point mass
/// through `channel`, one episode, `ticks` records.
pub fn point_mass_replay(channel: ChannelConfig, ticks: usize, seed: u64) -> Result<ReplayMemory> {
    let (mut env_rng, mut act_rng, mut channel_rng) = (stream(seed, 0), stream(seed, 1), stream(seed, 2));
    let mut sim = ChannelSim::new(PointMass::default(), channel, &mut env_rng, &mut channel_rng)?;
    let uniform = Policy::Uniform(ActionSpace::Continuous(1));
    let mut memory = ReplayMemory::new(ticks.max(1))?;
    for t in 0..ticks {
        let state = sim.state().clone();
        let (action, _) = uniform.sample(&state, &mut act_rng)?;
        let out = sim.step(action.clone(), &mut env_rng, &mut channel_rng)?;
        memory.push(ReplayRecord {
            state,
            action,
            reward: out.reward,
            next_state: out.state,
            terminal: out.terminal,
            episode_end: out.terminal || t + 1 == ticks,
        })?;
    }
    Ok(memory)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::apply_sigma_exact;

    #[test]
    fn matrix_covers_every_combination() {
        let fixtures = sigma_fixtures().unwrap();
        // s2: 2 starts x (2 + 3 + 3) n x 2 pairs; s3 likewise with 3 starts
        assert_eq!(fixtures.len(), 2 * 8 * 2 + 3 * 8 * 2);
        let mut names: Vec<_> = fixtures.iter().map(|f| f.name.clone()).collect();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), fixtures.len());
    }

    #[test]
    fn policies_differ() {
        for f in sigma_fixtures().unwrap().iter().take(3) {
            assert_ne!(f.pi, f.mu);
        }
    }

    #[test]
    fn a_strict_fixture_passes() {
        let f = &sigma_fixtures().unwrap()[1];
        assert!(apply_sigma_exact(&f.aug, &f.pi, &f.mu, f.x0, f.n, f.mode).unwrap().max_abs_error() <= 1e-12);
    }
}
