//! Tanh-squashed diagonal Gaussians with reparameterized sampling.
//!
//! For pre-squash `u = mean + std * eps` and action `a = tanh(u)`, the
//! log-density is `sum_j [log N(u_j; mean_j, std_j) - log(1 - tanh(u_j)^2)]`,
//! with `log(1 - tanh(u)^2) = 2 (ln 2 - u - softplus(-2u))` for stability.

use alloc::vec::Vec;

use num_traits::Float;

use super::{softplus, Matrix, Tape, Var};

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;

const HALF_LN_TWO_PI: f64 = 0.918_938_533_204_672_8;

fn log_squash_jacobian(u: f64) -> f64 {
    2.0 * (core::f64::consts::LN_2 - u - softplus(-2.0 * u))
}

/// Samples with fixed noise `eps`; returns the action and its log-density.
pub fn squashed_gaussian_sample(mean: &[f64], log_std: &[f64], eps: &[f64]) -> (Vec<f64>, f64) {
    let mut action = Vec::with_capacity(mean.len());
    let mut log_prob = 0.0;
    for j in 0..mean.len() {
        let ls = log_std[j].clamp(LOG_STD_MIN, LOG_STD_MAX);
        let u = mean[j] + ls.exp() * eps[j];
        action.push(u.tanh());
        log_prob += -0.5 * eps[j] * eps[j] - ls - HALF_LN_TWO_PI - log_squash_jacobian(u);
    }
    (action, log_prob)
}

/// Log-density of `action` in the open box `(-1, 1)^d`. Boundary actions
/// have density zero and give negative infinity.
pub fn squashed_gaussian_log_prob(mean: &[f64], log_std: &[f64], action: &[f64]) -> f64 {
    let mut log_prob = 0.0;
    for j in 0..mean.len() {
        if action[j].abs() >= 1.0 {
            return f64::neg_infinity();
        }
        let ls = log_std[j].clamp(LOG_STD_MIN, LOG_STD_MAX);
        let u = action[j].atanh();
        let eps = (u - mean[j]) / ls.exp();
        log_prob += -0.5 * eps * eps - ls - HALF_LN_TWO_PI - log_squash_jacobian(u);
    }
    log_prob
}

/// A reparameterized sample recorded on a tape.
#[derive(Clone, Copy, Debug)]
pub struct SquashedGaussian {
    /// `B x d` squashed actions.
    pub action: Var,
    /// `B x 1` log-densities.
    pub log_prob: Var,
}

impl SquashedGaussian {
    /// Records `tanh(mean + exp(clamp(log_std)) * noise)` and its log-density,
    /// both differentiable with respect to `mean` and `log_std`.
    pub fn record(tape: &mut Tape, mean: Var, log_std: Var, noise: &Matrix) -> Self {
        let ls = tape.clamp(log_std, LOG_STD_MIN, LOG_STD_MAX);
        let std = tape.exp(ls);
        let eps = tape.constant(noise.clone());
        let spread = tape.mul(std, eps);
        let u = tape.add(mean, spread);
        let action = tape.tanh(u);
        // -ls + 2u + 2 softplus(-2u) plus a constant in eps
        let neg2u = tape.scale(u, -2.0);
        let sp = tape.softplus(neg2u);
        let sp2 = tape.scale(sp, 2.0);
        let u2 = tape.scale(u, 2.0);
        let neg_ls = tape.scale(ls, -1.0);
        let a = tape.add(neg_ls, u2);
        let b = tape.add(a, sp2);
        let offset = noise.map(|e| -0.5 * e * e - HALF_LN_TWO_PI - 2.0 * core::f64::consts::LN_2);
        let c = tape.constant(offset);
        let per_dim = tape.add(b, c);
        let log_prob = tape.sum_cols(per_dim);
        SquashedGaussian { action, log_prob }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn zero_noise_gives_squashed_mean() {
        let (a, _) = squashed_gaussian_sample(&[0.3], &[-1.0], &[0.0]);
        assert_eq!(a[0], 0.3f64.tanh());
    }

    #[test]
    fn log_prob_reproduces_sampled_value() {
        let (a, lp) = squashed_gaussian_sample(&[0.2, -0.4], &[-0.5, 0.1], &[0.7, -1.3]);
        let again = squashed_gaussian_log_prob(&[0.2, -0.4], &[-0.5, 0.1], &a);
        assert!((lp - again).abs() < 1e-9);
    }

    #[test]
    fn density_integrates_to_one() {
        // midpoint rule on a fine grid over (-1, 1)
        let n = 200_000;
        let h = 2.0 / n as f64;
        let total: f64 = (0..n)
            .map(|i| {
                let a = -1.0 + (i as f64 + 0.5) * h;
                squashed_gaussian_log_prob(&[0.4], &[-0.3], &[a]).exp() * h
            })
            .sum();
        assert!((total - 1.0).abs() < 1e-3, "{total}");
    }

    #[test]
    fn tape_matches_plain_computation() {
        let mut tape = Tape::new();
        let mean = tape.param(Matrix::from_vec(2, 1, vec![0.2, -0.7]));
        let ls = tape.param(Matrix::from_vec(2, 1, vec![-0.5, 0.3]));
        let noise = Matrix::from_vec(2, 1, vec![0.9, -0.4]);
        let g = SquashedGaussian::record(&mut tape, mean, ls, &noise);
        for (r, (m, s, e)) in [(0.2, -0.5, 0.9), (-0.7, 0.3, -0.4)].into_iter().enumerate() {
            let (a, lp) = squashed_gaussian_sample(&[m], &[s], &[e]);
            assert!((tape.value(g.action).data[r] - a[0]).abs() < 1e-15);
            assert!((tape.value(g.log_prob).data[r] - lp).abs() < 1e-12);
        }
    }

    #[test]
    fn log_prob_gradient_matches_finite_differences() {
        let f = |m: f64, s: f64| squashed_gaussian_sample(&[m], &[s], &[0.6]).1;
        let (m, s) = (0.35, -0.2);
        let mut tape = Tape::new();
        let mv = tape.param(Matrix::from_vec(1, 1, vec![m]));
        let sv = tape.param(Matrix::from_vec(1, 1, vec![s]));
        let g = SquashedGaussian::record(&mut tape, mv, sv, &Matrix::from_vec(1, 1, vec![0.6]));
        let loss = tape.sum(g.log_prob);
        let grads = tape.backward(loss).unwrap();
        let h = 1e-5;
        let dm = (f(m + h, s) - f(m - h, s)) / (2.0 * h);
        let ds = (f(m, s + h) - f(m, s - h)) / (2.0 * h);
        let gm = grads.get(mv).unwrap().data[0];
        let gs = grads.get(sv).unwrap().data[0];
        assert!((gm - dm).abs() / dm.abs().max(1e-8) < 1e-4, "{gm} vs {dm}");
        assert!((gs - ds).abs() / ds.abs().max(1e-8) < 1e-4, "{gs} vs {ds}");
    }
}
