//! Tabular counterparts of the agents, small enough to compare against the
//! exact oracle.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use rand::RngCore;

use crate::delay::AugmentedState;
use crate::error::{bail, Result};
use crate::estimators::{soft_estimate, ValueFunction};
use crate::mdp::FiniteMdp;
use crate::oracle::soft_max;
use crate::policy::{DiscreteKey, Policy};
use crate::resampling::{resample_partial, ValidSubTrajectory};

/// A state-value table trained with resampled soft n-step targets for a
/// fixed policy.
#[derive(Clone, Debug)]
pub struct TabularSoftCritic {
    table: ValueFunction,
    visits: BTreeMap<DiscreteKey, u64>,
    pub gamma: f64,
    pub entropy_scale: f64,
    /// Step size `visits^-decay`; 1 averages targets exactly.
    pub decay: f64,
}

impl TabularSoftCritic {
    pub fn new(gamma: f64, entropy_scale: f64, decay: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&gamma) || !(0.5..=1.0).contains(&decay) {
            bail!(InvalidArgument, "need 0 <= gamma < 1 and a step-size decay in [0.5, 1]");
        }
        Ok(TabularSoftCritic {
            table: ValueFunction::Tabular {
                values: BTreeMap::new(),
                default: 0.0,
            },
            visits: BTreeMap::new(),
            gamma,
            entropy_scale,
            decay,
        })
    }

    pub fn value(&self, x: &AugmentedState) -> Result<f64> {
        self.table.value(x)
    }

    pub fn as_value_function(&self) -> &ValueFunction {
        &self.table
    }

    /// Resamples `fragment` under `pi` and moves `v(x_0)` toward the soft
    /// n-step estimate. Returns the temporal-difference error.
    pub fn update(&mut self, pi: &Policy, fragment: &ValidSubTrajectory, rng: &mut dyn RngCore) -> Result<f64> {
        let x0 = fragment.start();
        let (resampled, log_probs) = resample_partial(pi, x0, fragment, rng)?;
        let target = soft_estimate(x0, &resampled, &log_probs, &self.table, self.gamma, self.entropy_scale)?.estimate;
        let key = DiscreteKey::of(x0)?;
        let count = self.visits.entry(key.clone()).or_insert(0);
        *count += 1;
        let step = (*count as f64).powf(-self.decay);
        let ValueFunction::Tabular { values, .. } = &mut self.table else {
            unreachable!("the critic table is always tabular")
        };
        let v = values.entry(key).or_insert(0.0);
        let error = target - *v;
        *v += step * error;
        Ok(error)
    }

    /// One minibatch step: every start state in the batch moves toward the
    /// mean of its targets, all computed from the table before the step.
    /// Returns the mean temporal-difference error.
    pub fn update_batch(&mut self, pi: &Policy, fragments: &[ValidSubTrajectory], rng: &mut dyn RngCore) -> Result<f64> {
        if fragments.is_empty() {
            bail!(InvalidArgument, "empty batch");
        }
        let mut sums: BTreeMap<DiscreteKey, (f64, usize)> = BTreeMap::new();
        for fragment in fragments {
            let x0 = fragment.start();
            let (resampled, log_probs) = resample_partial(pi, x0, fragment, rng)?;
            let target = soft_estimate(x0, &resampled, &log_probs, &self.table, self.gamma, self.entropy_scale)?.estimate;
            let entry = sums.entry(DiscreteKey::of(x0)?).or_insert((0.0, 0));
            entry.0 += target;
            entry.1 += 1;
        }
        let ValueFunction::Tabular { values, .. } = &mut self.table else {
            unreachable!("the critic table is always tabular")
        };
        let mut total_error = 0.0;
        for (key, (sum, count)) in sums {
            let visits = self.visits.entry(key.clone()).or_insert(0);
            *visits += 1;
            let step = (*visits as f64).powf(-self.decay);
            let v = values.entry(key).or_insert(0.0);
            let error = sum / count as f64 - *v;
            total_error += error * count as f64;
            *v += step * error;
        }
        Ok(total_error / fragments.len() as f64)
    }
}

/// Soft Q-learning on an undelayed finite MDP with the policy kept at the
/// entropy-regularized greedy `pi(a|s) ∝ exp(q(s,a) / c)`, the exact
/// minimizer of the SAC actor loss for a tabular critic.
#[derive(Clone, Debug)]
pub struct TabularSac {
    pub q: Vec<Vec<f64>>,
    pub gamma: f64,
    pub entropy_scale: f64,
    pub lr: f64,
}

impl TabularSac {
    pub fn new(mdp: &FiniteMdp, gamma: f64, entropy_scale: f64, lr: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&gamma) || !(entropy_scale > 0.0) || !(lr > 0.0 && lr <= 1.0) {
            bail!(InvalidArgument, "need 0 <= gamma < 1, a positive entropy scale and lr in (0, 1]");
        }
        Ok(TabularSac {
            q: vec![vec![0.0; mdp.num_actions()]; mdp.num_states()],
            gamma,
            entropy_scale,
            lr,
        })
    }

    pub fn policy_row(&self, s: usize) -> Vec<f64> {
        let c = self.entropy_scale;
        let v = soft_max(&self.q[s], c);
        self.q[s].iter().map(|q| ((q - v) / c).exp()).collect()
    }

    /// `q(s,a) += lr (r + gamma (1 - done) E_{a'~pi}[q(s',a') - c log pi(a'|s')] - q(s,a))`;
    /// the expectation is exact and equals the soft maximum of `q(s', .)`.
    pub fn update(&mut self, s: usize, a: usize, reward: f64, next: usize, terminal: bool) -> Result<f64> {
        if s >= self.q.len() || next >= self.q.len() || a >= self.q[s].len() {
            bail!(InvalidArgument, "transition ({s}, {a}, {next}) out of range");
        }
        let tail = if terminal { 0.0 } else { self.gamma * soft_max(&self.q[next], self.entropy_scale) };
        let error = reward + tail - self.q[s][a];
        self.q[s][a] += self.lr * error;
        Ok(error)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::reward_chain;
    use crate::oracle::soft_optimal_q;

    #[test]
    fn policy_row_is_a_distribution() {
        let mut sac = TabularSac::new(&reward_chain(), 0.9, 0.5, 0.5).unwrap();
        sac.q[0] = vec![1.0, -2.0];
        let row = sac.policy_row(0);
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(row[0] > row[1]);
    }

    #[test]
    fn sweeps_reach_the_soft_optimum_on_a_deterministic_chain() {
        let mdp = reward_chain();
        let mut sac = TabularSac::new(&mdp, 0.9, 0.5, 1.0).unwrap();
        for _ in 0..400 {
            for s in 0..2 {
                for a in 0..2 {
                    sac.update(s, a, mdp.reward(s, a), a, false).unwrap();
                }
            }
        }
        let q = soft_optimal_q(&mdp, 0.9, 0.5, 1e-13).unwrap();
        for s in 0..2 {
            for a in 0..2 {
                assert!((sac.q[s][a] - q[s][a]).abs() < 1e-9);
            }
        }
    }
}
