//! The augmented transition kernel, sampled.

use rand::RngCore;

use super::{ActionBuffer, AugmentedState, DelayProcess};
use crate::error::{bail, Result};
use crate::mdp::{Action, Environment, Observation};

/// Result of the variable-step update.
#[derive(Clone, Debug, PartialEq)]
pub struct FDeltaOutcome {
    pub obs: Observation,
    pub beta: usize,
    pub reward: f64,
    pub terminal: bool,
}

/// Samples the variable-step update for an observation-delay change
/// `delta = alpha - alpha'`.
///
/// `delta = -1` repeats the observation with zero reward. Otherwise the
/// undelayed environment advances `delta + 1` times; at level `i` a fresh
/// action delay `beta_i ~ p_beta(. | beta_{i-1})` is drawn and the action
/// `u[alpha - i + beta_i]` is applied, where `u[0]` is the pending action
/// `a`. Rewards accumulate. The unroll stops early if the environment
/// reaches a terminal state.
pub fn f_delta_sample(
    delta: isize,
    x: &AugmentedState,
    a: &Action,
    env: &dyn Environment,
    p_beta: &DelayProcess,
    rng: &mut dyn RngCore,
) -> Result<FDeltaOutcome> {
    if delta < -1 {
        bail!(InvalidArgument, "observation delay can grow by at most one per step (delta = {delta})");
    }
    if delta > x.alpha as isize {
        bail!(InvalidArgument, "delta {delta} exceeds the observation delay {}", x.alpha);
    }
    let mut obs = x.obs.clone();
    let mut beta = x.beta;
    let mut reward = 0.0;
    let mut terminal = env.is_terminal(&obs);
    for level in 0..=delta {
        if terminal {
            break;
        }
        let next_beta = p_beta.sample(beta, rng);
        let index = x.alpha - level as usize + next_beta;
        let applied = x.buffer.applied(index, a)?;
        let step = env.step(&obs, &applied, rng)?;
        obs = step.observation;
        reward += step.reward;
        terminal = step.terminal;
        beta = next_beta;
    }
    Ok(FDeltaOutcome {
        obs,
        beta,
        reward,
        terminal,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct DelayedStep {
    pub state: AugmentedState,
    pub reward: f64,
    pub terminal: bool,
}

/// One transition of the randomly delayed MDP.
pub fn rdmdp_step(
    x: &AugmentedState,
    a: &Action,
    env: &dyn Environment,
    p_alpha: &DelayProcess,
    p_beta: &DelayProcess,
    rng: &mut dyn RngCore,
) -> Result<DelayedStep> {
    let next_alpha = p_alpha.sample(x.alpha, rng);
    if next_alpha > x.alpha + 1 {
        bail!(
            ContractViolation,
            "observation delay jumped from {} to {next_alpha}",
            x.alpha
        );
    }
    let delta = x.alpha as isize - next_alpha as isize;
    let f = f_delta_sample(delta, x, a, env, p_beta, rng)?;
    Ok(DelayedStep {
        state: AugmentedState {
            obs: f.obs,
            buffer: x.buffer.push(a.clone()),
            alpha: next_alpha,
            beta: f.beta,
            kappa: None,
        },
        reward: f.reward,
        terminal: f.terminal,
    })
}

/// One transition of the constantly delayed MDP: a single undelayed step
/// under `u[alpha + beta]`.
pub fn cdmdp_step(
    x: &AugmentedState,
    a: &Action,
    env: &dyn Environment,
    alpha: usize,
    beta: usize,
    rng: &mut dyn RngCore,
) -> Result<DelayedStep> {
    if x.alpha != alpha || x.beta != beta {
        bail!(
            InvalidArgument,
            "state delays ({}, {}) differ from the constant delays ({alpha}, {beta})",
            x.alpha,
            x.beta
        );
    }
    let (obs, reward, terminal) = if env.is_terminal(&x.obs) {
        (x.obs.clone(), 0.0, true)
    } else {
        let applied = x.buffer.applied(alpha + beta, a)?;
        let step = env.step(&x.obs, &applied, rng)?;
        (step.observation, step.reward, step.terminal)
    };
    Ok(DelayedStep {
        state: AugmentedState {
            obs,
            buffer: x.buffer.push(a.clone()),
            alpha,
            beta,
            kappa: None,
        },
        reward,
        terminal,
    })
}

/// The initial augmented state: a fresh observation, a buffer filled with
/// the null action and the given initial delays.
pub fn initial_state(
    env: &dyn Environment,
    buffer_len: usize,
    alpha: usize,
    beta: usize,
    rng: &mut dyn RngCore,
) -> Result<AugmentedState> {
    Ok(AugmentedState {
        obs: env.reset(rng),
        buffer: ActionBuffer::filled(buffer_len, env.action_space().null_action())?,
        alpha,
        beta,
        kappa: None,
    })
}

/// A randomly delayed MDP built on an undelayed environment.
#[derive(Clone, Debug)]
pub struct Rdmdp<E> {
    pub env: E,
    pub p_alpha: DelayProcess,
    pub p_beta: DelayProcess,
    pub buffer_len: usize,
}

impl<E: Environment> Rdmdp<E> {
    /// Checks `K >= max_alpha + max_beta`, `beta >= 1` and the growth bound.
    pub fn new(env: E, p_alpha: DelayProcess, p_beta: DelayProcess, buffer_len: usize) -> Result<Self> {
        if buffer_len < p_alpha.max_delay() + p_beta.max_delay() {
            bail!(
                Config,
                "buffer length {buffer_len} is smaller than max_alpha + max_beta = {}",
                p_alpha.max_delay() + p_beta.max_delay()
            );
        }
        if p_beta.min_delay() == 0 {
            bail!(Config, "action delays must be at least 1");
        }
        if !p_alpha.growth_bounded() {
            bail!(Config, "observation delay process can grow by more than one per step");
        }
        Ok(Rdmdp {
            env,
            p_alpha,
            p_beta,
            buffer_len,
        })
    }

    pub fn max_alpha(&self) -> usize {
        self.p_alpha.max_delay()
    }

    pub fn max_beta(&self) -> usize {
        self.p_beta.max_delay()
    }

    /// Initial state with delays at their maxima.
    pub fn reset(&self, rng: &mut dyn RngCore) -> Result<AugmentedState> {
        initial_state(&self.env, self.buffer_len, self.max_alpha(), self.max_beta(), rng)
    }

    pub fn step(&self, x: &AugmentedState, a: &Action, rng: &mut dyn RngCore) -> Result<DelayedStep> {
        rdmdp_step(x, a, &self.env, &self.p_alpha, &self.p_beta, rng)
    }
}
