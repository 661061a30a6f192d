//! Soft actor-critic with twin action-value critics and 1-step backups.

use alloc::vec::Vec;

use rand::RngCore;

use super::{build_mlp, draw_noise, AgentConfig, ReplayRecord, UpdateStats};
use crate::error::{bail, Result};
use crate::nn::{polyak_update, squashed_gaussian_sample, Adam, Matrix, Mlp, SquashedGaussian, Tape, Var};
use crate::policy::{GaussianMlpPolicy, InputEncoder};

#[derive(Clone, Debug)]
pub struct Sac {
    pub config: AgentConfig,
    pub policy: GaussianMlpPolicy,
    /// Critics take `[encoded state, action]`.
    pub critics: [Mlp; 2],
    pub targets: [Mlp; 2],
    policy_opt: Adam,
    critic_opts: [Adam; 2],
}

impl Sac {
    pub fn new(config: AgentConfig, encoder: InputEncoder, rng: &mut dyn RngCore) -> Result<Self> {
        config.validate()?;
        let d = encoder.action.width();
        let w = encoder.width();
        let policy = GaussianMlpPolicy::new(build_mlp(w, &config, 2 * d, rng)?, encoder)?;
        let critics = [build_mlp(w + d, &config, 1, rng)?, build_mlp(w + d, &config, 1, rng)?];
        Ok(Self::from_parts(config, policy, critics))
    }

    pub fn from_parts(config: AgentConfig, policy: GaussianMlpPolicy, critics: [Mlp; 2]) -> Self {
        let policy_opt = Adam::new(policy.net.params(), config.lr);
        let critic_opts = [
            Adam::new(critics[0].params(), config.lr),
            Adam::new(critics[1].params(), config.lr),
        ];
        Sac {
            targets: critics.clone(),
            config,
            policy,
            critics,
            policy_opt,
            critic_opts,
        }
    }

    pub fn encoder(&self) -> &InputEncoder {
        &self.policy.encoder
    }

    /// Encoded states with `actions` (or zeros) in the trailing columns.
    fn state_action_inputs(&self, states: &Matrix, actions: Option<&Matrix>) -> Matrix {
        let d = self.encoder().action.width();
        let w = states.cols;
        let mut out = Matrix::zeros(states.rows, w + d);
        for r in 0..states.rows {
            out.row_mut(r)[..w].copy_from_slice(states.row(r));
            if let Some(a) = actions {
                out.row_mut(r)[w..].copy_from_slice(a.row(r));
            }
        }
        out
    }

    fn actions_of(&self, batch: &[&ReplayRecord]) -> Result<Matrix> {
        let d = self.encoder().action.width();
        let mut data = Vec::with_capacity(batch.len() * d);
        for rec in batch {
            match rec.action.as_continuous() {
                Some(a) if a.len() == d => data.extend_from_slice(a),
                _ => bail!(InvalidArgument, "SAC stores continuous actions of dimension {d}"),
            }
        }
        Ok(Matrix::from_vec(batch.len(), d, data))
    }

    /// `scale r + gamma (1 - terminal) (min_i qbar_i(x', a') - c log pi(a'|x'))`
    /// with `a' = tanh(mean + std * noise)` drawn at the successor.
    pub fn critic_targets(&self, batch: &[&ReplayRecord], noise: &Matrix) -> Result<Vec<f64>> {
        let enc = self.encoder();
        let d = enc.action.width();
        let next = enc.encode_batch(batch.iter().map(|r| &r.next_state))?;
        let head = self.policy.net.forward(&next);
        let mut actions = Matrix::zeros(batch.len(), d);
        let mut log_probs = Vec::with_capacity(batch.len());
        for r in 0..batch.len() {
            let row = head.row(r);
            let (a, lp) = squashed_gaussian_sample(&row[..d], &row[d..], noise.row(r));
            actions.row_mut(r).copy_from_slice(&a);
            log_probs.push(lp);
        }
        let input = self.state_action_inputs(&next, Some(&actions));
        let q1 = self.targets[0].forward(&input);
        let q2 = self.targets[1].forward(&input);
        let (gamma, c, scale) = (self.config.gamma, self.config.entropy_scale, self.config.reward_scale);
        let mut y = Vec::with_capacity(batch.len());
        for (r, rec) in batch.iter().enumerate() {
            let tail = if rec.terminal {
                0.0
            } else {
                gamma * (q1.data[r].min(q2.data[r]) - c * log_probs[r])
            };
            let target = scale * rec.reward + tail;
            if !target.is_finite() {
                bail!(Numerical, "non-finite critic target");
            }
            y.push(target);
        }
        Ok(y)
    }

    /// Records `sum_i mean_b (q_i(x, a) - y_b)^2`.
    pub fn record_critic(&self, tape: &mut Tape, batch: &[&ReplayRecord], targets: &[f64]) -> Result<(Var, [Vec<Var>; 2])> {
        let states = self.encoder().encode_batch(batch.iter().map(|r| &r.state))?;
        let actions = self.actions_of(batch)?;
        let input = tape.constant(self.state_action_inputs(&states, Some(&actions)));
        let y = tape.constant(Matrix::from_vec(targets.len(), 1, targets.to_vec()));
        let mut params: [Vec<Var>; 2] = [Vec::new(), Vec::new()];
        let mut total = None;
        for (i, critic) in self.critics.iter().enumerate() {
            params[i] = critic.to_tape(tape, true);
            let q = critic.forward_tape(tape, &params[i], input);
            let diff = tape.sub(q, y);
            let sq = tape.square(diff);
            let loss = tape.mean(sq);
            total = Some(match total {
                None => loss,
                Some(acc) => tape.add(acc, loss),
            });
        }
        Ok((total.expect("two critics"), params))
    }

    /// Records `mean_b (c log pi(a|x) - min_i q_i(x, a))` with a
    /// reparameterized `a` and frozen critics.
    pub fn record_actor(&self, tape: &mut Tape, batch: &[&ReplayRecord], noise: &Matrix) -> Result<(Var, Vec<Var>)> {
        let enc = self.encoder();
        let d = enc.action.width();
        let states = enc.encode_batch(batch.iter().map(|r| &r.state))?;
        let w = states.cols;
        let params = self.policy.net.to_tape(tape, true);
        let x = tape.constant(states.clone());
        let out = self.policy.net.forward_tape(tape, &params, x);
        let mean = tape.slice_cols(out, 0, d);
        let log_std = tape.slice_cols(out, d, d);
        let g = SquashedGaussian::record(tape, mean, log_std, noise);
        let input = tape.assemble(self.state_action_inputs(&states, None), &[(g.action, w)]);
        let q1p = self.critics[0].to_tape(tape, false);
        let q2p = self.critics[1].to_tape(tape, false);
        let q1 = self.critics[0].forward_tape(tape, &q1p, input);
        let q2 = self.critics[1].forward_tape(tape, &q2p, input);
        let qmin = tape.min(q1, q2);
        let ent = tape.scale(g.log_prob, self.config.entropy_scale);
        let per_row = tape.sub(ent, qmin);
        Ok((tape.mean(per_row), params))
    }

    pub fn update(&mut self, batch: &[&ReplayRecord], rng: &mut dyn RngCore) -> Result<UpdateStats> {
        if batch.is_empty() {
            bail!(InvalidArgument, "empty batch");
        }
        let d = self.encoder().action.width();
        let next_noise = draw_noise(batch.len(), d, rng);
        let actor_noise = draw_noise(batch.len(), d, rng);
        let targets = self.critic_targets(batch, &next_noise)?;

        let mut critic_tape = Tape::new();
        let (critic_loss, critic_params) = self.record_critic(&mut critic_tape, batch, &targets)?;
        let mut actor_tape = Tape::new();
        let (actor_loss, policy_params) = self.record_actor(&mut actor_tape, batch, &actor_noise)?;
        let (cv, av) = (critic_tape.scalar(critic_loss), actor_tape.scalar(actor_loss));
        if !cv.is_finite() || !av.is_finite() {
            bail!(Numerical, "non-finite loss (actor {av}, critic {cv})");
        }

        let mut grads = critic_tape.backward(critic_loss)?;
        for i in 0..2 {
            let g: Vec<Matrix> = critic_params[i]
                .iter()
                .zip(self.critics[i].params())
                .map(|(&v, p)| grads.take_or_zeros(v, p))
                .collect();
            self.critic_opts[i].step(self.critics[i].params_mut(), &g)?;
        }
        let mut grads = actor_tape.backward(actor_loss)?;
        let g: Vec<Matrix> = policy_params
            .iter()
            .zip(self.policy.net.params())
            .map(|(&v, p)| grads.take_or_zeros(v, p))
            .collect();
        self.policy_opt.step(self.policy.net.params_mut(), &g)?;
        for i in 0..2 {
            polyak_update(&mut self.targets[i], &self.critics[i], self.config.tau);
        }
        Ok(UpdateStats {
            critic_loss: cv / 2.0,
            actor_loss: av,
            mean_n: 1.0,
        })
    }
}
