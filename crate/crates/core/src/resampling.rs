//! The validity condition and partial trajectory resampling.
//!
//! In a stored fragment `x_0, x_1, ..., x_n`, the `t` most recent buffer
//! entries of `x_t` are actions that no recorded observation depends on
//! whenever `alpha_t + beta_t >= t`. Those entries can be redrawn from the
//! current policy, turning an off-policy fragment into an on-policy one
//! without touching observations, delays or rewards.

use alloc::vec::Vec;

use rand::RngCore;

use crate::delay::AugmentedState;
use crate::error::{bail, Result};
use crate::mdp::{Trajectory, TrajectoryRecord};
use crate::policy::Policy;

/// The first step `t` (1-based) of `steps` that breaks the validity
/// condition or follows a terminal record, if any.
pub fn first_invalid_step(steps: &[TrajectoryRecord]) -> Option<usize> {
    for (i, step) in steps.iter().enumerate() {
        let t = i + 1;
        if step.state.total_delay() < t {
            return Some(t);
        }
        if i > 0 && steps[i - 1].terminal {
            return Some(t);
        }
    }
    None
}

/// A fragment satisfying the validity condition with no interior terminal.
#[derive(Clone, Debug, PartialEq)]
pub struct ValidSubTrajectory {
    start: AugmentedState,
    steps: Vec<TrajectoryRecord>,
}

impl ValidSubTrajectory {
    pub fn new(start: AugmentedState, steps: Vec<TrajectoryRecord>) -> Result<Self> {
        if let Some(t) = first_invalid_step(&steps) {
            bail!(ContractViolation, "fragment violates the validity condition at t = {t}");
        }
        if steps.len() > start.buffer.len() {
            bail!(ContractViolation, "fragment longer than the buffer length {}", start.buffer.len());
        }
        Ok(ValidSubTrajectory { start, steps })
    }

    pub fn start(&self) -> &AugmentedState {
        &self.start
    }

    pub fn steps(&self) -> &[TrajectoryRecord] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// The last state, `x_n` (the start when `n = 0`).
    pub fn last_state(&self) -> &AugmentedState {
        self.steps.last().map_or(&self.start, |s| &s.state)
    }

    pub fn ends_terminal(&self) -> bool {
        self.steps.last().is_some_and(|s| s.terminal)
    }

    /// Keeps the first `n` steps.
    pub fn truncated(&self, n: usize) -> ValidSubTrajectory {
        ValidSubTrajectory {
            start: self.start.clone(),
            steps: self.steps[..n.min(self.steps.len())].to_vec(),
        }
    }
}

/// The largest `n` such that the `n` records after `start_index` satisfy
/// the validity condition with no interior terminal, capped at the buffer
/// length. Position 0 is the trajectory's start state.
pub fn validity_length(traj: &Trajectory, start_index: usize) -> usize {
    let Some(start) = traj.state(start_index) else {
        return 0;
    };
    if traj.terminal_at(start_index) {
        return 0;
    }
    let cap = start.buffer.len();
    let mut n = 0;
    while n < cap {
        let t = n + 1;
        let Some(x) = traj.state(start_index + t) else { break };
        if x.total_delay() < t {
            break;
        }
        n = t;
        if traj.terminal_at(start_index + t) {
            break;
        }
    }
    n
}

/// The maximal valid fragment starting at `start_index`.
pub fn maximal_fragment(traj: &Trajectory, start_index: usize) -> Result<ValidSubTrajectory> {
    let Some(start) = traj.state(start_index) else {
        bail!(InvalidArgument, "start index {start_index} beyond trajectory length {}", traj.len());
    };
    let n = validity_length(traj, start_index);
    let steps = traj.records()[start_index..start_index + n].to_vec();
    ValidSubTrajectory::new(start.clone(), steps)
}

/// Redraws the buffered actions of a valid fragment under `pi`.
///
/// `x*_0 = x0`, and for each step `u*_t = (a*_{t-1}, u*_{t-1}[1..K-1])`
/// with `a*_{t-1} ~ pi(. | x*_{t-1})`. Observations, delays, rewards,
/// terminal flags and `kappa` are copied. Returns the resampled fragment
/// and the log-probabilities of the drawn actions.
pub fn resample_partial(
    pi: &Policy,
    x0: &AugmentedState,
    fragment: &ValidSubTrajectory,
    rng: &mut dyn RngCore,
) -> Result<(ValidSubTrajectory, Vec<f64>)> {
    if x0.buffer.len() != fragment.start.buffer.len() {
        bail!(InvalidArgument, "start state buffer length differs from the fragment's");
    }
    let mut steps = Vec::with_capacity(fragment.len());
    let mut log_probs = Vec::with_capacity(fragment.len());
    let mut prev = x0.clone();
    for step in &fragment.steps {
        let (a, lp) = pi.sample(&prev, rng)?;
        let state = AugmentedState {
            buffer: prev.buffer.push(a),
            ..step.state.clone()
        };
        log_probs.push(lp);
        steps.push(TrajectoryRecord {
            state: state.clone(),
            reward: step.reward,
            terminal: step.terminal,
        });
        prev = state;
    }
    Ok((
        ValidSubTrajectory {
            start: x0.clone(),
            steps,
        },
        log_probs,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::delay::ActionBuffer;
    use crate::mdp::{Action, Observation};
    use crate::policy::TabularPolicy;
    use crate::rng::seeded;
    use alloc::vec;

    const L: usize = 0;
    const R: usize = 1;

    fn state(obs: usize, buffer: &[usize], alpha: usize, beta: usize) -> AugmentedState {
        AugmentedState {
            obs: Observation::Discrete(obs),
            buffer: ActionBuffer::from_entries(buffer.iter().map(|&i| Action::Discrete(i)).collect()).unwrap(),
            alpha,
            beta,
            kappa: None,
        }
    }

    fn record(x: AugmentedState, terminal: bool) -> TrajectoryRecord {
        TrajectoryRecord {
            state: x,
            reward: 0.0,
            terminal,
        }
    }

    /// Behaviour "always left" in a 1D world with K = 3; total delays 2, 2, 2
    /// after the start, so the condition holds for t = 1, 2 only.
    fn left_walk() -> Trajectory {
        let mut traj = Trajectory::new(state(3, &[L, L, L], 1, 2), "always-left");
        traj.push(record(state(3, &[L, L, L], 1, 1), false)).unwrap();
        traj.push(record(state(2, &[L, L, L], 0, 2), false)).unwrap();
        traj.push(record(state(1, &[L, L, L], 1, 1), false)).unwrap();
        traj
    }

    #[test]
    fn one_d_world_fragment_has_length_two() {
        assert_eq!(validity_length(&left_walk(), 0), 2);
    }

    #[test]
    fn resampling_under_always_right_rewrites_recent_entries() {
        let traj = left_walk();
        let fragment = maximal_fragment(&traj, 0).unwrap();
        let pi = Policy::Constant(Action::Discrete(R));
        let (out, lps) = resample_partial(&pi, traj.start(), &fragment, &mut seeded(0)).unwrap();
        let bufs: Vec<_> = out.steps().iter().map(|s| s.state.buffer.entries().to_vec()).collect();
        let d = Action::Discrete;
        assert_eq!(bufs, vec![vec![d(R), d(L), d(L)], vec![d(R), d(R), d(L)]]);
        assert_eq!(lps, vec![0.0, 0.0]);
    }

    #[test]
    fn constant_delays_give_full_buffer_length() {
        let mut traj = Trajectory::new(state(0, &[0; 5], 2, 3), "mu");
        for _ in 0..20 {
            traj.push(record(state(0, &[0; 5], 2, 3), false)).unwrap();
        }
        assert_eq!(validity_length(&traj, 0), 5);
        assert_eq!(validity_length(&traj, 17), 3);
    }

    #[test]
    fn terminal_ends_fragment() {
        let mut traj = Trajectory::new(state(0, &[0; 3], 1, 2), "mu");
        traj.push(record(state(0, &[0; 3], 1, 2), true)).unwrap();
        assert_eq!(validity_length(&traj, 0), 1);
        assert_eq!(validity_length(&traj, 1), 0);
    }

    #[test]
    fn invalid_fragment_is_rejected() {
        let steps = vec![record(state(0, &[0; 3], 0, 1), false), record(state(0, &[0; 3], 0, 1), false)];
        let err = ValidSubTrajectory::new(state(0, &[0; 3], 0, 1), steps);
        assert!(matches!(err, Err(crate::Error::ContractViolation(m)) if m.contains("t = 2")));
    }

    #[test]
    fn behaviour_policy_resampling_is_identity_when_deterministic() {
        let traj = left_walk();
        let fragment = maximal_fragment(&traj, 0).unwrap();
        let mu = Policy::Tabular(TabularPolicy::uniform_default(vec![1.0, 0.0]).unwrap());
        let (out, _) = resample_partial(&mu, traj.start(), &fragment, &mut seeded(1)).unwrap();
        assert_eq!(out, fragment);
    }
}
