//! n-step state-value estimators over (resampled) fragments.
//!
//! `v_n(x0; tau) = sum_{i=1..n} gamma^{i-1} r_i + gamma^n v_0(x_n)`, with a
//! tail of 0 when the fragment ends in a terminal state. The soft variant
//! subtracts `c * sum_{i=0..n-1} gamma^i log pi(a_i | x_i)` for the
//! resampled actions.

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::vec::Vec;

#[allow(unused_imports)] // inherent float methods shadow these when std is linked
use num_traits::Float;
use rand::RngCore;

use crate::delay::AugmentedState;
use crate::error::{bail, Result};
use crate::mdp::Action;
use crate::nn::{Matrix, Mlp};
use crate::oracle::{apply_sigma_exact, enumerate_p_n, value_iteration, AugmentedFiniteMdp, TrajectoryDistribution, ValidityMode};
use crate::policy::{DiscreteKey, InputEncoder, Policy};
use crate::resampling::ValidSubTrajectory;

/// A state-value function `v_0`.
#[derive(Clone, Debug, PartialEq)]
pub enum ValueFunction {
    Constant(f64),
    /// Values per discrete augmented state, with a default for unseen states.
    Tabular { values: BTreeMap<DiscreteKey, f64>, default: f64 },
    Mlp { net: Mlp, encoder: InputEncoder },
    /// Another value function plus a constant bias.
    Biased { inner: Box<ValueFunction>, bias: f64 },
}

impl ValueFunction {
    pub fn value(&self, x: &AugmentedState) -> Result<f64> {
        let v = match self {
            ValueFunction::Constant(c) => *c,
            ValueFunction::Tabular { values, default } => {
                values.get(&DiscreteKey::of(x)?).copied().unwrap_or(*default)
            }
            ValueFunction::Mlp { net, encoder } => {
                let input = Matrix::from_vec(1, encoder.width(), encoder.encode(x)?);
                net.forward(&input).data[0]
            }
            ValueFunction::Biased { inner, bias } => inner.value(x)? + bias,
        };
        if !v.is_finite() {
            bail!(Numerical, "value function returned a non-finite value");
        }
        Ok(v)
    }

    /// A tabular value function from per-index values of an oracle MDP.
    pub fn from_oracle(aug: &AugmentedFiniteMdp, values: &[f64]) -> Result<Self> {
        let mut table = BTreeMap::new();
        for (x, v) in values.iter().enumerate() {
            table.insert(DiscreteKey::of(&aug.state(x))?, *v);
        }
        Ok(ValueFunction::Tabular {
            values: table,
            default: 0.0,
        })
    }
}

/// An estimate with its ingredients.
#[derive(Clone, Debug, PartialEq)]
pub struct EstimateReport {
    pub estimate: f64,
    pub n_used: usize,
    /// `-c * gamma^i * log pi(a_i | x_i)` for each resampled action.
    pub entropy_terms: Vec<f64>,
    pub gamma: f64,
}

fn discounted_rewards(fragment: &ValidSubTrajectory, gamma: f64) -> f64 {
    let mut total = 0.0;
    let mut discount = 1.0;
    for step in fragment.steps() {
        total += discount * step.reward;
        discount *= gamma;
    }
    total
}

fn tail(x0: &AugmentedState, fragment: &ValidSubTrajectory, v0: &ValueFunction, gamma: f64) -> Result<f64> {
    if fragment.ends_terminal() {
        return Ok(0.0);
    }
    let last = if fragment.is_empty() { x0 } else { fragment.last_state() };
    Ok(gamma.powi(fragment.len() as i32) * v0.value(last)?)
}

/// The plain n-step estimate with `n = fragment.len()`.
pub fn v_hat_n(x0: &AugmentedState, fragment: &ValidSubTrajectory, v0: &ValueFunction, gamma: f64) -> Result<f64> {
    Ok(discounted_rewards(fragment, gamma) + tail(x0, fragment, v0, gamma)?)
}

/// The entropy-augmented estimate with its per-action entropy terms.
pub fn soft_estimate(
    x0: &AugmentedState,
    fragment: &ValidSubTrajectory,
    log_probs: &[f64],
    v0: &ValueFunction,
    gamma: f64,
    entropy_scale: f64,
) -> Result<EstimateReport> {
    if log_probs.len() != fragment.len() {
        bail!(
            InvalidArgument,
            "{} log-probabilities for a fragment of length {}",
            log_probs.len(),
            fragment.len()
        );
    }
    let plain = v_hat_n(x0, fragment, v0, gamma)?;
    let mut entropy_terms = Vec::with_capacity(log_probs.len());
    let mut discount = 1.0;
    for lp in log_probs {
        entropy_terms.push(-entropy_scale * discount * lp);
        discount *= gamma;
    }
    let estimate = if entropy_scale == 0.0 { plain } else { plain + entropy_terms.iter().sum::<f64>() };
    Ok(EstimateReport {
        estimate,
        n_used: fragment.len(),
        entropy_terms,
        gamma,
    })
}

pub fn v_hat_soft_n(
    x0: &AugmentedState,
    fragment: &ValidSubTrajectory,
    log_probs: &[f64],
    v0: &ValueFunction,
    gamma: f64,
    entropy_scale: f64,
) -> Result<f64> {
    Ok(soft_estimate(x0, fragment, log_probs, v0, gamma, entropy_scale)?.estimate)
}

/// One-step action-value target `r + gamma q0(x', a')` with a single
/// `a' ~ pi(. | x')`; the tail is 0 after a terminal transition.
#[allow(clippy::too_many_arguments)]
pub fn q_hat_1(
    reward: f64,
    successor: &AugmentedState,
    terminal: bool,
    q0: &dyn Fn(&AugmentedState, &Action) -> Result<f64>,
    pi: &Policy,
    gamma: f64,
    rng: &mut dyn RngCore,
) -> Result<f64> {
    if terminal || gamma == 0.0 {
        return Ok(reward);
    }
    let (a, _) = pi.sample(successor, rng)?;
    Ok(reward + gamma * q0(successor, &a)?)
}

/// One-step target with the exact expectation over a discrete policy.
pub fn q_hat_1_expected(
    reward: f64,
    successor: &AugmentedState,
    terminal: bool,
    q0: &dyn Fn(&AugmentedState, &Action) -> Result<f64>,
    pi: &Policy,
    num_actions: usize,
    gamma: f64,
) -> Result<f64> {
    if terminal || gamma == 0.0 {
        return Ok(reward);
    }
    let probs = pi.distribution(successor, num_actions)?;
    let mut expected = 0.0;
    for (a, p) in probs.iter().enumerate() {
        if *p > 0.0 {
            expected += p * q0(successor, &Action::Discrete(a))?;
        }
    }
    Ok(reward + gamma * expected)
}

/// An oracle fixture for bias measurements: the augmented MDP, the target
/// policy, an optional behaviour policy and the start state.
#[derive(Clone, Debug)]
pub struct BiasFixture {
    pub aug: AugmentedFiniteMdp,
    pub pi: Policy,
    pub mu: Option<Policy>,
    pub x0: usize,
}

/// `E[v_n]` for keyed trajectories, with per-index value table `v0`.
pub fn expected_estimate(aug: &AugmentedFiniteMdp, dist: &TrajectoryDistribution, v0: &[f64], gamma: f64) -> f64 {
    let mut total = 0.0;
    for (path, p) in &dist.table {
        let mut ret = 0.0;
        let mut discount = 1.0;
        for &(_, r) in path {
            ret += discount * f64::from_bits(r);
            discount *= gamma;
        }
        let tail = match path.last() {
            Some(&(x, _)) if aug.is_terminal(x) => 0.0,
            Some(&(x, _)) => v0[x],
            None => 0.0,
        };
        total += p * (ret + discount * tail);
    }
    total
}

/// `E[v_{n(tau)}(x0; sigma^pi(tau))]` over behaviour trajectories of up to
/// `max_len` steps, each truncated at its validity length `n(tau)` and then
/// resampled exactly under `pi`. This is the estimate the agents form from
/// replayed fragments.
///
/// Under constant delays `n(tau)` is fixed and the estimate is unbiased for
/// an exact `v0`. Under random delays the cut at `n` depends on the delays
/// of `x_{n+1}`, so it is not a stopping time: the event correlates with the
/// last included transition and the estimate is biased even for `mu = pi`.
pub fn expected_resampled_estimate(
    aug: &AugmentedFiniteMdp,
    pi: &Policy,
    mu: &Policy,
    x0: usize,
    max_len: usize,
    v0: &[f64],
    gamma: f64,
) -> Result<f64> {
    if v0.len() != aug.num_states() {
        bail!(InvalidArgument, "value table has {} entries for {} states", v0.len(), aug.num_states());
    }
    let behaviour = enumerate_p_n(aug, mu, x0, max_len)?;
    let pi_table = aug.policy_table(pi)?;
    let mut total = 0.0;
    for (path, p) in &behaviour.table {
        let n = path
            .iter()
            .enumerate()
            .position(|(i, &(x, _))| {
                let (_, _, alpha, beta) = aug.decode(x);
                alpha + beta < i + 1
            })
            .unwrap_or(path.len());
        // (current resampled index, probability, discounted reward so far)
        let mut partial = alloc::vec![(x0, *p, 0.0)];
        let mut discount = 1.0;
        for &(x, r) in &path[..n] {
            let (s, _, alpha, beta) = aug.decode(x);
            let mut next = Vec::with_capacity(partial.len() * 2);
            for (prev, q, ret) in partial {
                let (_, prev_buf, _, _) = aug.decode(prev);
                for (a, &pa) in pi_table[prev].iter().enumerate() {
                    if pa == 0.0 {
                        continue;
                    }
                    let mut buf = Vec::with_capacity(prev_buf.len());
                    buf.push(a);
                    buf.extend_from_slice(&prev_buf[..prev_buf.len() - 1]);
                    let star = aug.index_of(s, &buf, alpha, beta)?;
                    next.push((star, q * pa, ret + discount * f64::from_bits(r)));
                }
            }
            partial = next;
            discount *= gamma;
        }
        for (last, q, ret) in partial {
            let tail = if aug.is_terminal(last) { 0.0 } else { v0[last] };
            total += q * (ret + discount * tail);
        }
    }
    Ok(total)
}

/// `(E[v_n(x0)] - v^pi(x0)) / b` with `v_0 = v^pi + b`, by exact
/// enumeration. With a behaviour policy the expectation is over behaviour
/// trajectories pushed through resampling.
pub fn measure_bias_reduction(fixture: &BiasFixture, bias: f64, n: usize, gamma: f64) -> Result<f64> {
    if bias == 0.0 {
        bail!(InvalidArgument, "the injected bias must be nonzero");
    }
    let aug = &fixture.aug;
    let v_pi = value_iteration(aug, &fixture.pi, gamma, 1e-14)?;
    let v0: Vec<f64> = v_pi.iter().map(|v| v + bias).collect();
    if n == 0 {
        return Ok((v0[fixture.x0] - v_pi[fixture.x0]) / bias);
    }
    let dist = match &fixture.mu {
        None => enumerate_p_n(aug, &fixture.pi, fixture.x0, n)?,
        Some(mu) => apply_sigma_exact(aug, &fixture.pi, mu, fixture.x0, n, ValidityMode::Strict)?.lhs,
    };
    Ok((expected_estimate(aug, &dist, &v0, gamma) - v_pi[fixture.x0]) / bias)
}
