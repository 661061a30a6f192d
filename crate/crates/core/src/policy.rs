//! Policies over augmented states.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;
use rand::{Rng, RngCore};

use crate::delay::AugmentedState;
use crate::error::{bail, Result};
use crate::mdp::{Action, ActionSpace, ObservationSpace};
use crate::nn::{squashed_gaussian_log_prob, squashed_gaussian_sample, Matrix, Mlp};
use crate::rng::{sample_categorical, standard_normal};

/// Hashable view of a fully discrete augmented state.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DiscreteKey {
    pub obs: usize,
    pub buffer: Vec<usize>,
    pub alpha: usize,
    pub beta: usize,
}

impl DiscreteKey {
    pub fn of(x: &AugmentedState) -> Result<Self> {
        let Some(obs) = x.obs.as_discrete() else {
            bail!(InvalidArgument, "tabular lookup needs a discrete observation");
        };
        let mut buffer = Vec::with_capacity(x.buffer.len());
        for a in x.buffer.entries() {
            match a.as_discrete() {
                Some(i) => buffer.push(i),
                None => bail!(InvalidArgument, "tabular lookup needs discrete buffered actions"),
            }
        }
        Ok(DiscreteKey {
            obs,
            buffer,
            alpha: x.alpha,
            beta: x.beta,
        })
    }
}

/// Discrete action distributions, looked up by full augmented state, then
/// by observation, then a default row.
#[derive(Clone, Debug, PartialEq)]
pub struct TabularPolicy {
    num_actions: usize,
    by_state: BTreeMap<DiscreteKey, Vec<f64>>,
    by_observation: Vec<Vec<f64>>,
    default: Vec<f64>,
}

fn check_row(row: &[f64], n: usize) -> Result<()> {
    if row.len() != n {
        bail!(InvalidArgument, "action distribution has {} entries, expected {n}", row.len());
    }
    if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
        bail!(InvalidArgument, "action distribution has a negative or non-finite entry");
    }
    let total: f64 = row.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        bail!(InvalidArgument, "action distribution sums to {total}");
    }
    Ok(())
}

impl TabularPolicy {
    /// The same distribution everywhere.
    pub fn uniform_default(row: Vec<f64>) -> Result<Self> {
        let n = row.len();
        check_row(&row, n)?;
        Ok(TabularPolicy {
            num_actions: n,
            by_state: BTreeMap::new(),
            by_observation: Vec::new(),
            default: row,
        })
    }

    /// One distribution per undelayed observation; buffer and delays are ignored.
    pub fn per_observation(rows: Vec<Vec<f64>>) -> Result<Self> {
        let Some(first) = rows.first() else {
            bail!(InvalidArgument, "a per-observation policy needs at least one row");
        };
        let n = first.len();
        for r in &rows {
            check_row(r, n)?;
        }
        Ok(TabularPolicy {
            num_actions: n,
            default: rows[0].clone(),
            by_state: BTreeMap::new(),
            by_observation: rows,
        })
    }

    /// Overrides the distribution for one augmented state.
    pub fn set_state(&mut self, key: DiscreteKey, row: Vec<f64>) -> Result<()> {
        check_row(&row, self.num_actions)?;
        self.by_state.insert(key, row);
        Ok(())
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn distribution(&self, x: &AugmentedState) -> Result<&[f64]> {
        let key = DiscreteKey::of(x)?;
        if let Some(row) = self.by_state.get(&key) {
            return Ok(row);
        }
        if let Some(row) = self.by_observation.get(key.obs) {
            return Ok(row);
        }
        Ok(&self.default)
    }
}

/// Encodes augmented states as network inputs: the observation, then
/// (unless `observation_only`) each buffered action, one-hot `alpha`,
/// one-hot `beta` and optionally one-hot `kappa`.
#[derive(Clone, Debug, PartialEq)]
pub struct InputEncoder {
    pub observation: ObservationSpace,
    pub action: ActionSpace,
    pub buffer_len: usize,
    pub max_alpha: usize,
    pub max_beta: usize,
    pub use_kappa: bool,
    pub observation_only: bool,
}

impl InputEncoder {
    pub fn width(&self) -> usize {
        let obs = self.observation.width();
        if self.observation_only {
            return obs;
        }
        obs + self.buffer_len * self.action.width()
            + (self.max_alpha + 1)
            + (self.max_beta + 1)
            + if self.use_kappa { self.max_beta } else { 0 }
    }

    /// Column offset of buffer entry `i` (1-based).
    pub fn buffer_column(&self, i: usize) -> Option<usize> {
        if self.observation_only || i == 0 || i > self.buffer_len {
            return None;
        }
        Some(self.observation.width() + (i - 1) * self.action.width())
    }

    pub fn encode_into(&self, x: &AugmentedState, out: &mut [f64]) -> Result<()> {
        if out.len() != self.width() {
            bail!(InvalidArgument, "encoding buffer has width {}, expected {}", out.len(), self.width());
        }
        out.iter_mut().for_each(|v| *v = 0.0);
        let ow = self.observation.width();
        match (&x.obs, self.observation) {
            (crate::mdp::Observation::Discrete(i), ObservationSpace::Discrete(n)) if *i < n => {}
            (crate::mdp::Observation::Continuous(v), ObservationSpace::Continuous(d)) if v.len() == d => {}
            _ => bail!(InvalidArgument, "observation does not match the encoder's observation space"),
        }
        self.observation.encode_into(&x.obs, &mut out[..ow]);
        if self.observation_only {
            return Ok(());
        }
        if x.buffer.len() != self.buffer_len {
            bail!(InvalidArgument, "buffer length {} differs from {}", x.buffer.len(), self.buffer_len);
        }
        if x.alpha > self.max_alpha || x.beta > self.max_beta {
            bail!(InvalidArgument, "delays ({}, {}) exceed the encoder maxima", x.alpha, x.beta);
        }
        let aw = self.action.width();
        for (i, a) in x.buffer.entries().iter().enumerate() {
            if !self.action.contains(a) {
                bail!(InvalidArgument, "buffered action outside the action space");
            }
            let start = ow + i * aw;
            self.action.encode_into(a, &mut out[start..start + aw]);
        }
        let mut at = ow + self.buffer_len * aw;
        out[at + x.alpha] = 1.0;
        at += self.max_alpha + 1;
        out[at + x.beta] = 1.0;
        at += self.max_beta + 1;
        if self.use_kappa {
            if let Some(k) = x.kappa {
                if k < self.max_beta {
                    out[at + k] = 1.0;
                }
            }
        }
        Ok(())
    }

    pub fn encode(&self, x: &AugmentedState) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.width()];
        self.encode_into(x, &mut out)?;
        Ok(out)
    }

    /// Encodes a batch, one state per row.
    pub fn encode_batch<'a>(&self, xs: impl IntoIterator<Item = &'a AugmentedState>) -> Result<Matrix> {
        let w = self.width();
        let mut data = Vec::new();
        let mut rows = 0;
        for x in xs {
            let start = data.len();
            data.resize(start + w, 0.0);
            self.encode_into(x, &mut data[start..])?;
            rows += 1;
        }
        Ok(Matrix::from_vec(rows, w, data))
    }
}

/// A tanh-squashed Gaussian policy whose network outputs `[mean, log_std]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianMlpPolicy {
    pub net: Mlp,
    pub encoder: InputEncoder,
    pub action_dim: usize,
}

impl GaussianMlpPolicy {
    pub fn new(net: Mlp, encoder: InputEncoder) -> Result<Self> {
        let ActionSpace::Continuous(d) = encoder.action else {
            bail!(InvalidArgument, "Gaussian policies need a continuous action space");
        };
        if net.input_width() != encoder.width() || net.output_width() != 2 * d {
            bail!(
                InvalidArgument,
                "network shape {:?} does not fit input width {} and action dimension {d}",
                net.sizes(),
                encoder.width()
            );
        }
        Ok(GaussianMlpPolicy {
            net,
            encoder,
            action_dim: d,
        })
    }

    /// Mean and raw log standard deviation at `x`.
    pub fn head(&self, x: &AugmentedState) -> Result<(Vec<f64>, Vec<f64>)> {
        let input = Matrix::from_vec(1, self.encoder.width(), self.encoder.encode(x)?);
        let out = self.net.forward(&input);
        let d = self.action_dim;
        Ok((out.data[..d].to_vec(), out.data[d..2 * d].to_vec()))
    }

    pub fn sample(&self, x: &AugmentedState, rng: &mut dyn RngCore) -> Result<(Action, f64)> {
        let (mean, log_std) = self.head(x)?;
        let eps: Vec<f64> = (0..self.action_dim).map(|_| standard_normal(rng)).collect();
        let (a, lp) = squashed_gaussian_sample(&mean, &log_std, &eps);
        if !lp.is_finite() {
            bail!(Numerical, "sampled action has non-finite log-density");
        }
        Ok((Action::Continuous(a), lp))
    }

    /// The squashed mean, used for evaluation.
    pub fn mode(&self, x: &AugmentedState) -> Result<Action> {
        let (mean, _) = self.head(x)?;
        Ok(Action::Continuous(mean.iter().map(|m| m.tanh()).collect()))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Policy {
    /// Always the same action.
    Constant(Action),
    Tabular(TabularPolicy),
    GaussianMlp(GaussianMlpPolicy),
    /// Uniform over the action space.
    Uniform(ActionSpace),
}

impl Policy {
    /// Draws an action and returns it with its log-probability (or
    /// log-density for continuous actions).
    pub fn sample(&self, x: &AugmentedState, rng: &mut dyn RngCore) -> Result<(Action, f64)> {
        match self {
            Policy::Constant(a) => Ok((a.clone(), 0.0)),
            Policy::Tabular(t) => {
                let row = t.distribution(x)?;
                let i = sample_categorical(row, rng);
                Ok((Action::Discrete(i), row[i].ln()))
            }
            Policy::GaussianMlp(g) => g.sample(x, rng),
            Policy::Uniform(space) => match *space {
                ActionSpace::Discrete(n) => Ok((Action::Discrete(rng.random_range(0..n)), -(n as f64).ln())),
                ActionSpace::Continuous(d) => {
                    let a = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
                    Ok((Action::Continuous(a), -(d as f64) * core::f64::consts::LN_2))
                }
            },
        }
    }

    /// `log pi(a | x)`. Zero-probability actions give negative infinity.
    pub fn log_prob(&self, x: &AugmentedState, a: &Action) -> Result<f64> {
        match self {
            Policy::Constant(c) => Ok(if c == a { 0.0 } else { f64::neg_infinity() }),
            Policy::Tabular(t) => {
                let row = t.distribution(x)?;
                match a.as_discrete() {
                    Some(i) if i < row.len() => Ok(row[i].ln()),
                    _ => bail!(InvalidArgument, "action outside the tabular policy's range"),
                }
            }
            Policy::GaussianMlp(g) => {
                let Some(v) = a.as_continuous().filter(|v| v.len() == g.action_dim) else {
                    bail!(InvalidArgument, "action does not match the policy's dimension");
                };
                let (mean, log_std) = g.head(x)?;
                Ok(squashed_gaussian_log_prob(&mean, &log_std, v))
            }
            Policy::Uniform(space) => {
                if !space.contains(a) {
                    bail!(InvalidArgument, "action outside the action space");
                }
                Ok(match *space {
                    ActionSpace::Discrete(n) => -(n as f64).ln(),
                    ActionSpace::Continuous(d) => -(d as f64) * core::f64::consts::LN_2,
                })
            }
        }
    }

    /// The full action distribution for discrete policies.
    pub fn distribution(&self, x: &AugmentedState, num_actions: usize) -> Result<Vec<f64>> {
        match self {
            Policy::Constant(Action::Discrete(i)) if *i < num_actions => {
                let mut row = vec![0.0; num_actions];
                row[*i] = 1.0;
                Ok(row)
            }
            Policy::Tabular(t) if t.num_actions() == num_actions => Ok(t.distribution(x)?.to_vec()),
            Policy::Uniform(ActionSpace::Discrete(n)) if *n == num_actions => {
                Ok(vec![1.0 / num_actions as f64; num_actions])
            }
            _ => bail!(InvalidArgument, "policy has no discrete distribution over {num_actions} actions"),
        }
    }

    /// A deterministic action for evaluation: the mode for tabular and
    /// Gaussian policies.
    pub fn mode(&self, x: &AugmentedState) -> Result<Action> {
        match self {
            Policy::Constant(a) => Ok(a.clone()),
            Policy::Tabular(t) => {
                let row = t.distribution(x)?;
                let best = (0..row.len()).fold(0, |b, i| if row[i] > row[b] { i } else { b });
                Ok(Action::Discrete(best))
            }
            Policy::GaussianMlp(g) => g.mode(x),
            Policy::Uniform(space) => Ok(space.null_action()),
        }
    }
}
