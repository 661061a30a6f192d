//! Event-driven simulation of an agent talking to a remote actor over
//! delayed channels.
//!
//! Every tick the remote side (1) accepts arrived actions, keeping the most
//! recently produced one, (2) captures its state and sends it with the
//! cumulative reward and the timestamps needed to recover the delays, and
//! (3) steps the undelayed environment with the applied action. The agent
//! keeps the most recently produced observation that has arrived, turns
//! cumulative rewards into per-tick rewards, and sends one action per tick.

use alloc::vec::Vec;

use rand::RngCore;

use super::{ActionBuffer, AugmentedState, DelayProcess};
use crate::error::{bail, Result};
use crate::mdp::{Action, Environment, Observation};
use crate::policy::Policy;
use crate::rng::stream;

/// Where per-message latencies come from.
#[derive(Clone, Debug, PartialEq)]
pub enum LatencySource {
    /// Latencies drawn from a (possibly self-correlated) delay process.
    Process(DelayProcess),
    /// A recorded latency sequence, replayed cyclically. Values above the
    /// channel maximum are clipped.
    Trace(Vec<usize>),
}

impl LatencySource {
    fn min_latency(&self) -> usize {
        match self {
            LatencySource::Process(p) => p.min_delay(),
            LatencySource::Trace(t) => t.iter().copied().min().unwrap_or(0),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChannelConfig {
    pub buffer_len: usize,
    pub max_alpha: usize,
    pub max_beta: usize,
    pub observation_latency: LatencySource,
    pub action_latency: LatencySource,
}

impl ChannelConfig {
    /// Constant latencies with `K = alpha + beta`.
    pub fn constant(alpha: usize, beta: usize) -> Self {
        ChannelConfig {
            buffer_len: alpha + beta,
            max_alpha: alpha,
            max_beta: beta,
            observation_latency: LatencySource::Process(DelayProcess::constant(alpha)),
            action_latency: LatencySource::Process(DelayProcess::constant(beta)),
        }
    }

    /// Latencies from two delay processes, with maxima and `K` taken from them.
    pub fn from_processes(observation: DelayProcess, action: DelayProcess) -> Self {
        ChannelConfig {
            buffer_len: observation.max_delay() + action.max_delay(),
            max_alpha: observation.max_delay(),
            max_beta: action.max_delay(),
            observation_latency: LatencySource::Process(observation),
            action_latency: LatencySource::Process(action),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_beta == 0 {
            bail!(Config, "the maximum action delay must be at least 1");
        }
        if self.buffer_len < self.max_alpha + self.max_beta {
            bail!(
                Config,
                "buffer length K = {} must be at least max_alpha + max_beta = {}",
                self.buffer_len,
                self.max_alpha + self.max_beta
            );
        }
        if self.action_latency.min_latency() == 0 {
            bail!(Config, "action latency must be at least one tick");
        }
        for (source, max, what) in [
            (&self.observation_latency, self.max_alpha, "observation"),
            (&self.action_latency, self.max_beta, "action"),
        ] {
            match source {
                LatencySource::Process(p) if p.max_delay() > max => {
                    bail!(Config, "{what} delay process exceeds its maximum {max}")
                }
                LatencySource::Trace(t) if t.is_empty() => bail!(Config, "{what} latency trace is empty"),
                _ => {}
            }
        }
        Ok(())
    }
}

/// A timestamped message in flight.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelRecord<P> {
    pub payload_timestamp: i64,
    pub payload: P,
    pub arrival_tick: i64,
    seq: u64,
}

#[derive(Clone, Debug, PartialEq)]
struct Capture {
    obs: Observation,
    cumulative_reward: f64,
    /// Reward of the single transition that led to this capture.
    last_reward: f64,
    terminal: bool,
    beta: usize,
    kappa: usize,
}

#[derive(Clone, Debug)]
struct LatencyState {
    previous: usize,
    cursor: usize,
    over_max_run: usize,
}

impl LatencyState {
    fn new(initial: usize) -> Self {
        LatencyState {
            previous: initial,
            cursor: 0,
            over_max_run: 0,
        }
    }

    fn draw(&mut self, source: &LatencySource, max: usize, k: usize, rng: &mut dyn RngCore, what: &str) -> Result<usize> {
        let raw = match source {
            LatencySource::Process(p) => p.sample(self.previous, rng),
            LatencySource::Trace(t) => {
                let v = t[self.cursor % t.len()];
                self.cursor += 1;
                v
            }
        };
        let latency = if raw > max {
            self.over_max_run += 1;
            if self.over_max_run > k {
                bail!(
                    Overflow,
                    "{} consecutive {what} latencies above the maximum {max} exceed the buffer length {k}",
                    self.over_max_run
                );
            }
            max
        } else {
            self.over_max_run = 0;
            raw
        };
        self.previous = latency;
        Ok(latency)
    }
}

/// The remote actor and its undelayed environment.
#[derive(Clone, Debug)]
struct Remote {
    tick: i64,
    state: Observation,
    terminal: bool,
    halted: bool,
    cumulative_reward: f64,
    applied: Action,
    applied_stamp: i64,
}

/// Outcome of one agent tick.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelStep {
    pub state: AugmentedState,
    pub reward: f64,
    pub terminal: bool,
    /// Undelayed rewards produced remotely during this tick.
    pub undelayed_rewards: Vec<f64>,
}

/// A running channel simulation.
pub struct ChannelSim<E> {
    env: E,
    config: ChannelConfig,
    tick: i64,
    remote: Remote,
    actions_in_flight: Vec<ChannelRecord<Action>>,
    observations_in_flight: Vec<ChannelRecord<Capture>>,
    held: Capture,
    held_stamp: i64,
    buffer: ActionBuffer,
    current: AugmentedState,
    obs_latency: LatencyState,
    act_latency: LatencyState,
    seq: u64,
    pending_undelayed: Vec<f64>,
}

impl<E: Environment> ChannelSim<E> {
    /// Creates the simulation and starts the first episode.
    pub fn new(env: E, config: ChannelConfig, env_rng: &mut dyn RngCore, channel_rng: &mut dyn RngCore) -> Result<Self> {
        config.validate()?;
        let null = env.action_space().null_action();
        let obs = env.reset(env_rng);
        let placeholder = Capture {
            obs: obs.clone(),
            cumulative_reward: 0.0,
            last_reward: 0.0,
            terminal: false,
            beta: config.max_beta,
            kappa: config.max_beta - 1,
        };
        let buffer = ActionBuffer::filled(config.buffer_len, null.clone())?;
        let mut sim = ChannelSim {
            current: AugmentedState {
                obs: obs.clone(),
                buffer: buffer.clone(),
                alpha: config.max_alpha,
                beta: config.max_beta,
                kappa: Some(config.max_beta - 1),
            },
            remote: Remote {
                tick: 0,
                state: obs,
                terminal: false,
                halted: false,
                cumulative_reward: 0.0,
                applied: null,
                applied_stamp: 0,
            },
            obs_latency: LatencyState::new(config.max_alpha),
            act_latency: LatencyState::new(config.max_beta),
            env,
            tick: 0,
            actions_in_flight: Vec::new(),
            observations_in_flight: Vec::new(),
            held: placeholder,
            held_stamp: 0,
            buffer,
            seq: 0,
            pending_undelayed: Vec::new(),
            config,
        };
        sim.start_episode(None, env_rng, channel_rng)?;
        Ok(sim)
    }

    pub fn config(&self) -> &ChannelConfig {
        &self.config
    }

    pub fn env(&self) -> &E {
        &self.env
    }

    /// The agent's current augmented state.
    pub fn state(&self) -> &AugmentedState {
        &self.current
    }

    pub fn tick(&self) -> i64 {
        self.tick
    }

    /// Starts a new episode and returns its initial state.
    pub fn reset(&mut self, env_rng: &mut dyn RngCore, channel_rng: &mut dyn RngCore) -> Result<AugmentedState> {
        let obs = self.env.reset(env_rng);
        self.start_episode(Some(obs), env_rng, channel_rng)?;
        Ok(self.current.clone())
    }

    /// Re-initializes both sides at the maxima: the first observation was
    /// captured `max_alpha` ticks ago and the buffer holds null actions
    /// sent `max_beta` or more ticks before that.
    fn start_episode(
        &mut self,
        obs: Option<Observation>,
        env_rng: &mut dyn RngCore,
        channel_rng: &mut dyn RngCore,
    ) -> Result<()> {
        let c_alpha = self.config.max_alpha as i64;
        let c_beta = self.config.max_beta as i64;
        let k = self.config.buffer_len as i64;
        let null = self.env.action_space().null_action();
        let obs = obs.unwrap_or_else(|| self.current.obs.clone());
        self.tick = 0;
        self.actions_in_flight.clear();
        self.observations_in_flight.clear();
        self.pending_undelayed.clear();
        self.obs_latency = LatencyState::new(self.config.max_alpha);
        self.act_latency = LatencyState::new(self.config.max_beta);
        self.buffer = ActionBuffer::filled(self.config.buffer_len, null.clone())?;
        for stamp in -k..0 {
            self.seq += 1;
            self.actions_in_flight.push(ChannelRecord {
                payload_timestamp: stamp,
                payload: null.clone(),
                arrival_tick: stamp + c_beta,
                seq: self.seq,
            });
        }
        self.remote = Remote {
            tick: -c_alpha,
            terminal: self.env.is_terminal(&obs),
            state: obs.clone(),
            halted: false,
            cumulative_reward: 0.0,
            applied: null,
            applied_stamp: -c_alpha - c_beta,
        };
        self.accept_actions();
        self.held = Capture {
            obs: obs.clone(),
            cumulative_reward: 0.0,
            last_reward: 0.0,
            terminal: false,
            beta: self.config.max_beta,
            kappa: (self.remote.tick - 1 - self.remote.applied_stamp) as usize,
        };
        self.held_stamp = -c_alpha;
        self.current = AugmentedState {
            obs,
            buffer: self.buffer.clone(),
            alpha: self.config.max_alpha,
            beta: self.config.max_beta,
            kappa: Some(self.held.kappa),
        };
        for _ in 0..c_alpha {
            self.advance_remote(env_rng, channel_rng)?;
        }
        Ok(())
    }

    /// Applies the most recently produced action among those that have arrived.
    fn accept_actions(&mut self) {
        let now = self.remote.tick;
        let mut best: Option<ChannelRecord<Action>> = None;
        self.actions_in_flight.retain(|r| {
            if r.arrival_tick > now {
                return true;
            }
            let newer = match &best {
                None => true,
                Some(b) => (r.payload_timestamp, r.seq) > (b.payload_timestamp, b.seq),
            };
            if newer {
                best = Some(r.clone());
            }
            false
        });
        if let Some(r) = best {
            if r.payload_timestamp > self.remote.applied_stamp {
                self.remote.applied_stamp = r.payload_timestamp;
                self.remote.applied = r.payload;
            }
        }
    }

    /// Steps the environment with the applied action, moves to the next
    /// remote tick, accepts actions and sends a capture.
    fn advance_remote(&mut self, env_rng: &mut dyn RngCore, channel_rng: &mut dyn RngCore) -> Result<()> {
        if self.remote.halted {
            self.remote.tick += 1;
            return Ok(());
        }
        let mut last_reward = 0.0;
        if !self.remote.terminal {
            let step = self.env.step(&self.remote.state, &self.remote.applied, env_rng)?;
            self.remote.state = step.observation;
            self.remote.terminal = step.terminal;
            self.remote.cumulative_reward += step.reward;
            last_reward = step.reward;
            self.pending_undelayed.push(step.reward);
        }
        let used_stamp = self.remote.applied_stamp;
        self.remote.tick += 1;
        self.accept_actions();
        let now = self.remote.tick;
        let capture = Capture {
            obs: self.remote.state.clone(),
            cumulative_reward: self.remote.cumulative_reward,
            last_reward,
            terminal: self.remote.terminal,
            beta: (now - 1 - used_stamp) as usize,
            kappa: (now - 1 - self.remote.applied_stamp) as usize,
        };
        let latency = self.obs_latency.draw(
            &self.config.observation_latency,
            self.config.max_alpha,
            self.config.buffer_len,
            channel_rng,
            "observation",
        )?;
        self.seq += 1;
        self.observations_in_flight.push(ChannelRecord {
            payload_timestamp: now,
            payload: capture,
            arrival_tick: now + latency as i64,
            seq: self.seq,
        });
        if self.remote.terminal {
            self.remote.halted = true;
        }
        Ok(())
    }

    /// Sends `action`, advances both sides by one tick and returns the
    /// agent's next state with the reward delivered during the tick.
    pub fn step(&mut self, action: Action, env_rng: &mut dyn RngCore, channel_rng: &mut dyn RngCore) -> Result<ChannelStep> {
        if !self.env.action_space().contains(&action) {
            bail!(InvalidArgument, "action outside the action space");
        }
        let latency = self.act_latency.draw(
            &self.config.action_latency,
            self.config.max_beta,
            self.config.buffer_len,
            channel_rng,
            "action",
        )?;
        self.seq += 1;
        self.actions_in_flight.push(ChannelRecord {
            payload_timestamp: self.tick,
            payload: action.clone(),
            arrival_tick: self.tick + latency as i64,
            seq: self.seq,
        });
        self.buffer.push_in_place(action);
        self.advance_remote(env_rng, channel_rng)?;
        self.tick += 1;
        Ok(self.receive())
    }

    fn receive(&mut self) -> ChannelStep {
        let now = self.tick;
        let mut best: Option<ChannelRecord<Capture>> = None;
        self.observations_in_flight.retain(|r| {
            if r.arrival_tick > now {
                return true;
            }
            let newer = match &best {
                None => true,
                Some(b) => (r.payload_timestamp, r.seq) > (b.payload_timestamp, b.seq),
            };
            if newer {
                best = Some(r.clone());
            }
            false
        });
        let mut reward = 0.0;
        let mut terminal = false;
        if let Some(r) = best {
            if r.payload_timestamp > self.held_stamp {
                reward = if r.payload_timestamp == self.held_stamp + 1 {
                    r.payload.last_reward
                } else {
                    r.payload.cumulative_reward - self.held.cumulative_reward
                };
                terminal = r.payload.terminal;
                self.held_stamp = r.payload_timestamp;
                self.held = r.payload;
            }
        }
        self.current = AugmentedState {
            obs: self.held.obs.clone(),
            buffer: self.buffer.clone(),
            alpha: (now - self.held_stamp) as usize,
            beta: self.held.beta,
            kappa: Some(self.held.kappa),
        };
        ChannelStep {
            state: self.current.clone(),
            reward,
            terminal,
            undelayed_rewards: core::mem::take(&mut self.pending_undelayed),
        }
    }

    /// Production tick of the observation the agent currently holds.
    pub fn held_timestamp(&self) -> i64 {
        self.held_stamp
    }
}

/// One agent tick of a simulated run.
#[derive(Clone, Debug, PartialEq)]
pub struct TickRecord {
    pub tick: u64,
    pub episode: u64,
    /// State the action was computed from.
    pub state: AugmentedState,
    pub action: Action,
    pub next_state: AugmentedState,
    pub reward: f64,
    pub terminal: bool,
    pub held_timestamp: i64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ChannelLog {
    pub ticks: Vec<TickRecord>,
    /// Undelayed rewards per episode, in remote order.
    pub undelayed_rewards: Vec<Vec<f64>>,
}

/// Runs `policy` against `env` through the channel for `ticks` agent ticks,
/// starting new episodes on termination.
///
/// Randomness is split into independent streams for the environment, the
/// agent and the channel so that runs with different latency models
/// consume identical environment and policy draws.
pub fn channel_simulate<E: Environment>(
    env: E,
    policy: &Policy,
    config: ChannelConfig,
    ticks: u64,
    seed: u64,
) -> Result<ChannelLog> {
    if ticks == 0 {
        bail!(InvalidArgument, "a simulation needs at least one tick");
    }
    let mut env_rng = stream(seed, 0);
    let mut agent_rng = stream(seed, 1);
    let mut channel_rng = stream(seed, 2);
    let mut sim = ChannelSim::new(env, config, &mut env_rng, &mut channel_rng)?;
    let mut log = ChannelLog {
        ticks: Vec::with_capacity(ticks as usize),
        undelayed_rewards: alloc::vec![Vec::new()],
    };
    let mut episode = 0;
    for tick in 0..ticks {
        let state = sim.state().clone();
        let (action, _) = policy.sample(&state, &mut agent_rng)?;
        let step = sim.step(action.clone(), &mut env_rng, &mut channel_rng)?;
        log.undelayed_rewards[episode as usize].extend_from_slice(&step.undelayed_rewards);
        log.ticks.push(TickRecord {
            tick,
            episode,
            state,
            action,
            next_state: step.state,
            reward: step.reward,
            terminal: step.terminal,
            held_timestamp: sim.held_timestamp(),
        });
        if step.terminal {
            episode += 1;
            log.undelayed_rewards.push(Vec::new());
            sim.reset(&mut env_rng, &mut channel_rng)?;
            log.undelayed_rewards[episode as usize].append(&mut sim.pending_undelayed);
        }
    }
    Ok(log)
}
