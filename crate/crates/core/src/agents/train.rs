use alloc::vec::Vec;

use rand::RngCore;

use super::{encoder_for, Agent, AgentConfig, AgentKind, ReplayMemory, ReplayRecord};
use crate::delay::{ChannelConfig, ChannelSim};
use crate::error::{bail, Result};
use crate::mdp::Environment;
use crate::policy::Policy;
use crate::rng::stream;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EvalMode {
    /// The squashed policy mean.
    Deterministic,
    /// Actions sampled from the policy.
    Stochastic,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub kind: AgentKind,
    pub agent: AgentConfig,
    pub channel: ChannelConfig,
    /// Episodes are truncated after this many agent ticks.
    pub horizon: usize,
    pub steps: usize,
    pub seed: u64,
    pub eval_every: usize,
    pub eval_episodes: usize,
    pub eval_mode: EvalMode,
}

impl TrainConfig {
    pub fn new(kind: AgentKind, channel: ChannelConfig, horizon: usize, steps: usize, seed: u64) -> Self {
        TrainConfig {
            kind,
            agent: AgentConfig::default(),
            channel,
            horizon,
            steps,
            seed,
            eval_every: 1000,
            eval_episodes: 5,
            eval_mode: EvalMode::Deterministic,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.channel.validate()?;
        self.agent.validate()?;
        if self.kind == AgentKind::Rtac && self.channel != rtac_channel() {
            bail!(Config, "rtac runs with constant delays alpha = 0, beta = 1 and K = 1");
        }
        if self.horizon == 0 || self.steps == 0 || self.eval_every == 0 || self.eval_episodes == 0 {
            bail!(Config, "horizon, steps, evaluation interval and episode count must be positive");
        }
        Ok(())
    }
}

/// The channel of the real-time setting: observations arrive instantly and
/// actions take effect one tick later.
pub fn rtac_channel() -> ChannelConfig {
    ChannelConfig::constant(0, 1)
}

/// One evaluation point. Losses are averaged over the updates since the
/// previous row (NaN when there were none); delays over visited states.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricsRow {
    pub step: usize,
    pub eval_return: f64,
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub mean_n: f64,
    pub alpha_mean: f64,
    pub beta_mean: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub rows: Vec<MetricsRow>,
    pub agent: Agent,
}

/// Undiscounted returns of `episodes` episodes of `policy` through the
/// channel, each truncated at `horizon` ticks.
#[allow(clippy::too_many_arguments)]
pub fn evaluate<E: Environment>(
    env: E,
    policy: &Policy,
    channel: &ChannelConfig,
    horizon: usize,
    episodes: usize,
    mode: EvalMode,
    env_rng: &mut dyn RngCore,
    agent_rng: &mut dyn RngCore,
    channel_rng: &mut dyn RngCore,
) -> Result<Vec<f64>> {
    let mut sim = ChannelSim::new(env, channel.clone(), env_rng, channel_rng)?;
    let mut returns = Vec::with_capacity(episodes);
    for episode in 0..episodes {
        if episode > 0 {
            sim.reset(env_rng, channel_rng)?;
        }
        let mut total = 0.0;
        for _ in 0..horizon {
            let x = sim.state();
            let a = match mode {
                EvalMode::Deterministic => policy.mode(x)?,
                EvalMode::Stochastic => policy.sample(x, agent_rng)?.0,
            };
            let out = sim.step(a, env_rng, channel_rng)?;
            total += out.reward;
            if out.terminal {
                break;
            }
        }
        returns.push(total);
    }
    Ok(returns)
}

#[derive(Default)]
struct Window {
    critic: f64,
    actor: f64,
    n: f64,
    updates: usize,
    alpha: f64,
    beta: f64,
    ticks: usize,
}

impl Window {
    fn mean(total: f64, count: usize) -> f64 {
        if count == 0 {
            f64::NAN
        } else {
            total / count as f64
        }
    }
}

/// Trains an agent through the channel simulation, one gradient update per
/// agent tick after the warmup, and evaluates it every `eval_every` ticks.
///
/// Randomness comes from separate streams of `seed` (environment, actions,
/// channel, updates, initialization and the evaluation copies of the first
/// three), so runs are reproducible bit for bit.
pub fn train<E: Environment + Clone>(
    env: E,
    config: &TrainConfig,
    on_row: &mut dyn FnMut(&MetricsRow),
) -> Result<TrainOutcome> {
    config.validate()?;
    let seed = config.seed;
    let (mut env_rng, mut act_rng, mut channel_rng) = (stream(seed, 0), stream(seed, 1), stream(seed, 2));
    let (mut update_rng, mut init_rng) = (stream(seed, 3), stream(seed, 4));
    let (mut eval_env, mut eval_act, mut eval_channel) = (stream(seed, 5), stream(seed, 6), stream(seed, 7));

    let encoder = encoder_for(
        config.kind,
        env.observation_space(),
        env.action_space(),
        &config.channel,
        config.agent.use_kappa,
    );
    let mut agent = Agent::new(config.kind, config.agent.clone(), encoder, &mut init_rng)?;
    let mut memory = ReplayMemory::new(config.agent.memory_capacity)?;
    let mut sim = ChannelSim::new(env.clone(), config.channel.clone(), &mut env_rng, &mut channel_rng)?;
    let uniform = Policy::Uniform(env.action_space());

    let mut rows = Vec::new();
    let mut window = Window::default();
    let mut episode_len = 0;
    for step in 1..=config.steps {
        let x = sim.state().clone();
        let action = if step <= config.agent.warmup {
            uniform.sample(&x, &mut act_rng)?.0
        } else {
            agent.policy().sample(&x, &mut act_rng)?.0
        };
        let out = sim.step(action.clone(), &mut env_rng, &mut channel_rng)?;
        episode_len += 1;
        let end = out.terminal || episode_len >= config.horizon;
        window.alpha += out.state.alpha as f64;
        window.beta += out.state.beta as f64;
        window.ticks += 1;
        memory.push(ReplayRecord {
            state: x,
            action,
            reward: out.reward,
            next_state: out.state,
            terminal: out.terminal,
            episode_end: end,
        })?;
        if end {
            sim.reset(&mut env_rng, &mut channel_rng)?;
            episode_len = 0;
        }
        if step > config.agent.warmup {
            let stats = agent.update(&memory, &mut update_rng)?;
            window.critic += stats.critic_loss;
            window.actor += stats.actor_loss;
            window.n += stats.mean_n;
            window.updates += 1;
        }
        if step % config.eval_every == 0 {
            let policy = Policy::GaussianMlp(agent.policy().clone());
            let returns = evaluate(
                env.clone(),
                &policy,
                &config.channel,
                config.horizon,
                config.eval_episodes,
                config.eval_mode,
                &mut eval_env,
                &mut eval_act,
                &mut eval_channel,
            )?;
            let row = MetricsRow {
                step,
                eval_return: returns.iter().sum::<f64>() / returns.len() as f64,
                critic_loss: Window::mean(window.critic, window.updates),
                actor_loss: Window::mean(window.actor, window.updates),
                mean_n: Window::mean(window.n, window.updates),
                alpha_mean: Window::mean(window.alpha, window.ticks),
                beta_mean: Window::mean(window.beta, window.ticks),
            };
            on_row(&row);
            rows.push(row);
            window = Window::default();
        }
    }
    Ok(TrainOutcome { rows, agent })
}
