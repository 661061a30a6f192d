//! Training algorithms: DCAC, SAC on augmented (or raw) observations, and
//! the RTAC special case of DCAC.

mod dcac;
mod replay;
mod sac;
pub mod tabular;
mod train;

use alloc::vec::Vec;

use rand::RngCore;

pub use dcac::{ActorPass, Dcac};
pub use replay::{ReplayMemory, ReplayRecord};
pub use sac::Sac;
pub use train::{evaluate, rtac_channel, train, EvalMode, MetricsRow, TrainConfig, TrainOutcome};

use crate::delay::ChannelConfig;
use crate::error::{bail, Result};
use crate::mdp::{ActionSpace, ObservationSpace};
use crate::nn::{Activation, Matrix, Mlp};
use crate::policy::{GaussianMlpPolicy, InputEncoder};
use crate::resampling::ValidSubTrajectory;
use crate::rng::standard_normal;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AgentKind {
    Dcac,
    /// SAC on the augmented state.
    Sac,
    /// DCAC with constant delays `alpha = 0`, `beta = 1`.
    Rtac,
    /// SAC on the delayed observation alone; not Markov under delays.
    SacNaive,
}

impl AgentKind {
    pub fn name(self) -> &'static str {
        match self {
            AgentKind::Dcac => "dcac",
            AgentKind::Sac => "sac",
            AgentKind::Rtac => "rtac",
            AgentKind::SacNaive => "sac-naive",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "dcac" => AgentKind::Dcac,
            "sac" => AgentKind::Sac,
            "rtac" => AgentKind::Rtac,
            "sac-naive" => AgentKind::SacNaive,
            _ => bail!(Config, "unknown agent `{s}` (expected dcac, sac, rtac or sac-naive)"),
        })
    }
}

/// Hyperparameters shared by all agents.
#[derive(Clone, Debug, PartialEq)]
pub struct AgentConfig {
    pub gamma: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub tau: f64,
    pub reward_scale: f64,
    pub entropy_scale: f64,
    /// Uniformly random actions and no updates for this many steps.
    pub warmup: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub memory_capacity: usize,
    pub use_kappa: bool,
    /// Caps DCAC fragment lengths below the validity length.
    pub max_fragment: Option<usize>,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            gamma: 0.99,
            lr: 3e-4,
            batch_size: 128,
            tau: 0.005,
            reward_scale: 5.0,
            entropy_scale: 1.0,
            warmup: 10_000,
            hidden: alloc::vec![64, 64],
            activation: Activation::Silu,
            memory_capacity: 1_000_000,
            use_kappa: true,
            max_fragment: None,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma) {
            bail!(Config, "gamma must lie in [0, 1), got {}", self.gamma);
        }
        if !(self.lr > 0.0) || !(0.0..=1.0).contains(&self.tau) {
            bail!(Config, "need lr > 0 and tau in [0, 1]");
        }
        if self.batch_size == 0 || self.memory_capacity == 0 || self.hidden.contains(&0) {
            bail!(Config, "batch size, memory capacity and hidden sizes must be positive");
        }
        if !(self.entropy_scale >= 0.0) || !self.reward_scale.is_finite() {
            bail!(Config, "entropy scale must be non-negative and reward scale finite");
        }
        Ok(())
    }
}

/// Losses and the mean fragment length of one update.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct UpdateStats {
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub mean_n: f64,
}

pub(crate) fn build_mlp(input: usize, config: &AgentConfig, output: usize, rng: &mut dyn RngCore) -> Result<Mlp> {
    let mut sizes = Vec::with_capacity(config.hidden.len() + 2);
    sizes.push(input);
    sizes.extend_from_slice(&config.hidden);
    sizes.push(output);
    Mlp::new(&sizes, config.activation, rng)
}

pub(crate) fn draw_noise(rows: usize, cols: usize, rng: &mut dyn RngCore) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| standard_normal(rng)).collect())
}

/// The network input layout an agent kind uses under a channel.
pub fn encoder_for(
    kind: AgentKind,
    observation: ObservationSpace,
    action: ActionSpace,
    channel: &ChannelConfig,
    use_kappa: bool,
) -> InputEncoder {
    InputEncoder {
        observation,
        action,
        buffer_len: channel.buffer_len,
        max_alpha: channel.max_alpha,
        max_beta: channel.max_beta,
        use_kappa,
        observation_only: kind == AgentKind::SacNaive,
    }
}

/// A neural agent.
#[derive(Clone, Debug)]
pub enum Agent {
    Dcac(Dcac),
    Sac(Sac),
}

impl Agent {
    pub fn new(kind: AgentKind, config: AgentConfig, encoder: InputEncoder, rng: &mut dyn RngCore) -> Result<Self> {
        if !matches!(encoder.action, ActionSpace::Continuous(_)) {
            bail!(Config, "neural agents need a continuous action space");
        }
        Ok(match kind {
            AgentKind::Dcac | AgentKind::Rtac => Agent::Dcac(Dcac::new(config, encoder, rng)?),
            AgentKind::Sac | AgentKind::SacNaive => Agent::Sac(Sac::new(config, encoder, rng)?),
        })
    }

    pub fn policy(&self) -> &GaussianMlpPolicy {
        match self {
            Agent::Dcac(a) => &a.policy,
            Agent::Sac(a) => &a.policy,
        }
    }

    pub fn config(&self) -> &AgentConfig {
        match self {
            Agent::Dcac(a) => &a.config,
            Agent::Sac(a) => &a.config,
        }
    }

    /// Samples a batch from `memory` and performs one update.
    pub fn update(&mut self, memory: &ReplayMemory, rng: &mut dyn RngCore) -> Result<UpdateStats> {
        let b = self.config().batch_size;
        match self {
            Agent::Dcac(a) => {
                let cap = a.config.max_fragment.unwrap_or(usize::MAX);
                let mut fragments: Vec<ValidSubTrajectory> = Vec::with_capacity(b);
                for _ in 0..b {
                    let i = memory.sample_index(rng)?;
                    fragments.push(memory.fragment(i, cap)?);
                }
                a.update(&fragments, rng)
            }
            Agent::Sac(a) => {
                let mut batch = Vec::with_capacity(b);
                for _ in 0..b {
                    let i = memory.sample_index(rng)?;
                    batch.push(memory.get(i).expect("sampled index is in range"));
                }
                a.update(&batch, rng)
            }
        }
    }
}
