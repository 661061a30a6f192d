//! Delay-correcting actor-critic with state-value critics.
//!
//! Each update samples fragments `x_0, ..., x_n` that satisfy the validity
//! condition, redraws their buffered actions from the current policy in
//! one reparameterized pass, and uses that pass twice:
//!
//! - the critics regress `v(x_0)` on the detached soft n-step estimate with
//!   the minimum of the twin target critics as tail;
//! - the actor ascends the same estimate with gradients flowing through
//!   every resampled action, including into later policy inputs and the
//!   tail critic's input (the online critics are frozen there).

use alloc::vec;
use alloc::vec::Vec;

use rand::RngCore;

use super::{build_mlp, draw_noise, AgentConfig, UpdateStats};
use crate::error::{bail, Result};
use crate::nn::{polyak_update, Adam, Matrix, Mlp, SquashedGaussian, Tape, Var};
use crate::policy::{GaussianMlpPolicy, InputEncoder};
use crate::resampling::ValidSubTrajectory;

#[derive(Clone, Debug)]
pub struct Dcac {
    pub config: AgentConfig,
    pub policy: GaussianMlpPolicy,
    pub critics: [Mlp; 2],
    pub targets: [Mlp; 2],
    policy_opt: Adam,
    critic_opts: [Adam; 2],
}

/// The tape nodes of one actor pass.
pub struct ActorPass {
    pub loss: Var,
    pub policy_params: Vec<Var>,
    /// `B x 1` log-densities of the resampled actions, one per level.
    pub log_probs: Vec<Var>,
    /// Encoded `x*_{n_b}` for every row.
    pub tail_input: Var,
}

/// Per-row constants of a fragment batch.
struct Layout {
    lens: Vec<usize>,
    max_len: usize,
    /// `scale * sum_t gamma^t r_{t+1}`.
    rewards: Vec<f64>,
    /// `gamma^n (1 - terminal)`.
    tail_weights: Vec<f64>,
}

/// `x_i` of a fragment, or its last state when `i` runs past the end.
fn state_at(f: &ValidSubTrajectory, i: usize) -> &crate::delay::AugmentedState {
    match i.min(f.len()) {
        0 => f.start(),
        k => &f.steps()[k - 1].state,
    }
}

impl Dcac {
    pub fn new(config: AgentConfig, encoder: InputEncoder, rng: &mut dyn RngCore) -> Result<Self> {
        config.validate()?;
        if encoder.observation_only {
            bail!(Config, "DCAC needs the augmented state, not the observation alone");
        }
        let d = encoder.action.width();
        let w = encoder.width();
        let policy = GaussianMlpPolicy::new(build_mlp(w, &config, 2 * d, rng)?, encoder)?;
        let critics = [build_mlp(w, &config, 1, rng)?, build_mlp(w, &config, 1, rng)?];
        Ok(Self::from_parts(config, policy, critics))
    }

    /// Assembles an agent from given networks; targets start as copies.
    pub fn from_parts(config: AgentConfig, policy: GaussianMlpPolicy, critics: [Mlp; 2]) -> Self {
        let policy_opt = Adam::new(policy.net.params(), config.lr);
        let critic_opts = [
            Adam::new(critics[0].params(), config.lr),
            Adam::new(critics[1].params(), config.lr),
        ];
        Dcac {
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

    fn layout(&self, fragments: &[ValidSubTrajectory]) -> Result<Layout> {
        if fragments.is_empty() {
            bail!(InvalidArgument, "empty batch");
        }
        let (gamma, scale) = (self.config.gamma, self.config.reward_scale);
        let lens: Vec<usize> = fragments.iter().map(|f| f.len()).collect();
        let mut rewards = Vec::with_capacity(fragments.len());
        let mut tail_weights = Vec::with_capacity(fragments.len());
        for f in fragments {
            let mut total = 0.0;
            let mut discount = 1.0;
            for step in f.steps() {
                total += discount * scale * step.reward;
                discount *= gamma;
            }
            rewards.push(total);
            tail_weights.push(if f.ends_terminal() { 0.0 } else { discount });
        }
        Ok(Layout {
            max_len: lens.iter().copied().max().unwrap_or(0),
            lens,
            rewards,
            tail_weights,
        })
    }

    /// Records the resampling pass and the actor loss
    /// `-mean_b v_soft(x_0; tau*)`. `noise[t]` is the `B x d` standard
    /// normal noise for level `t`.
    pub fn record_actor(&self, tape: &mut Tape, fragments: &[ValidSubTrajectory], noise: &[Matrix]) -> Result<ActorPass> {
        let layout = self.layout(fragments)?;
        if noise.len() < layout.max_len {
            bail!(InvalidArgument, "{} noise levels for fragments of length {}", noise.len(), layout.max_len);
        }
        let enc = self.encoder();
        let d = enc.action.width();
        let b = fragments.len();
        let policy_params = self.policy.net.to_tape(tape, true);
        let mut inputs = vec![tape.constant(enc.encode_batch(fragments.iter().map(|f| f.start()))?)];
        let mut actions: Vec<Var> = Vec::with_capacity(layout.max_len);
        let mut log_probs = Vec::with_capacity(layout.max_len);
        for t in 0..layout.max_len {
            let out = self.policy.net.forward_tape(tape, &policy_params, inputs[t]);
            let mean = tape.slice_cols(out, 0, d);
            let log_std = tape.slice_cols(out, d, d);
            let g = SquashedGaussian::record(tape, mean, log_std, &noise[t]);
            actions.push(g.action);
            log_probs.push(g.log_prob);
            // rows whose fragment is shorter reuse their last state; they are
            // masked out below
            let base = enc.encode_batch(fragments.iter().map(|f| state_at(f, t + 1)))?;
            let parts: Vec<(Var, usize)> = (1..=t + 1)
                .map(|j| (actions[t + 1 - j], enc.buffer_column(j).expect("fragment length is at most K")))
                .collect();
            inputs.push(tape.assemble(base, &parts));
        }
        let mut tail_input = None;
        for (t, &input) in inputs.iter().enumerate() {
            let mask = Matrix::from_vec(b, 1, layout.lens.iter().map(|&n| f64::from(u8::from(n == t))).collect());
            let m = tape.constant(mask);
            let part = tape.mul_col(input, m);
            tail_input = Some(match tail_input {
                None => part,
                Some(acc) => tape.add(acc, part),
            });
        }
        let tail_input = tail_input.expect("at least one level");

        let c = self.config.entropy_scale;
        let gamma = self.config.gamma;
        let mut objective = tape.constant(Matrix::from_vec(b, 1, layout.rewards.clone()));
        let mut discount = 1.0;
        for (t, &lp) in log_probs.iter().enumerate() {
            let w = layout.lens.iter().map(|&n| if t < n { -c * discount } else { 0.0 }).collect();
            let wv = tape.constant(Matrix::from_vec(b, 1, w));
            let term = tape.mul_col(lp, wv);
            objective = tape.add(objective, term);
            discount *= gamma;
        }
        let v1p = self.critics[0].to_tape(tape, false);
        let v2p = self.critics[1].to_tape(tape, false);
        let v1 = self.critics[0].forward_tape(tape, &v1p, tail_input);
        let v2 = self.critics[1].forward_tape(tape, &v2p, tail_input);
        let vmin = tape.min(v1, v2);
        let g = tape.constant(Matrix::from_vec(b, 1, layout.tail_weights.clone()));
        let tail = tape.mul_col(vmin, g);
        objective = tape.add(objective, tail);
        let mean = tape.mean(objective);
        let loss = tape.scale(mean, -1.0);
        Ok(ActorPass {
            loss,
            policy_params,
            log_probs,
            tail_input,
        })
    }

    /// Detached soft n-step targets from a recorded pass, with the minimum
    /// of the target critics as tail.
    pub fn critic_targets(&self, tape: &Tape, pass: &ActorPass, fragments: &[ValidSubTrajectory]) -> Result<Vec<f64>> {
        let layout = self.layout(fragments)?;
        let tail_in = tape.value(pass.tail_input);
        let t1 = self.targets[0].forward(tail_in);
        let t2 = self.targets[1].forward(tail_in);
        let c = self.config.entropy_scale;
        let gamma = self.config.gamma;
        let mut y = Vec::with_capacity(fragments.len());
        for (row, &n) in layout.lens.iter().enumerate() {
            let mut target = layout.rewards[row];
            let mut discount = 1.0;
            for lp in &pass.log_probs[..n] {
                target -= c * discount * tape.value(*lp).data[row];
                discount *= gamma;
            }
            target += layout.tail_weights[row] * t1.data[row].min(t2.data[row]);
            if !target.is_finite() {
                bail!(Numerical, "non-finite critic target");
            }
            y.push(target);
        }
        Ok(y)
    }

    /// Records `sum_i mean_b (v_i(x_0) - y_b)^2` over both online critics.
    pub fn record_critic(&self, tape: &mut Tape, fragments: &[ValidSubTrajectory], targets: &[f64]) -> Result<(Var, [Vec<Var>; 2])> {
        let x0 = tape.constant(self.encoder().encode_batch(fragments.iter().map(|f| f.start()))?);
        let y = tape.constant(Matrix::from_vec(targets.len(), 1, targets.to_vec()));
        let mut params: [Vec<Var>; 2] = [Vec::new(), Vec::new()];
        let mut total = None;
        for (i, critic) in self.critics.iter().enumerate() {
            params[i] = critic.to_tape(tape, true);
            let v = critic.forward_tape(tape, &params[i], x0);
            let diff = tape.sub(v, y);
            let sq = tape.square(diff);
            let loss = tape.mean(sq);
            total = Some(match total {
                None => loss,
                Some(acc) => tape.add(acc, loss),
            });
        }
        Ok((total.expect("two critics"), params))
    }

    /// One critic step, one actor step and a Polyak update of the targets.
    pub fn update(&mut self, fragments: &[ValidSubTrajectory], rng: &mut dyn RngCore) -> Result<UpdateStats> {
        let layout = self.layout(fragments)?;
        let d = self.encoder().action.width();
        let noise: Vec<Matrix> = (0..layout.max_len).map(|_| draw_noise(fragments.len(), d, rng)).collect();

        let mut actor_tape = Tape::new();
        let pass = self.record_actor(&mut actor_tape, fragments, &noise)?;
        let targets = self.critic_targets(&actor_tape, &pass, fragments)?;
        let actor_loss = actor_tape.scalar(pass.loss);

        let mut critic_tape = Tape::new();
        let (critic_loss, critic_params) = self.record_critic(&mut critic_tape, fragments, &targets)?;
        let critic_value = critic_tape.scalar(critic_loss);
        if !actor_loss.is_finite() || !critic_value.is_finite() {
            bail!(Numerical, "non-finite loss (actor {actor_loss}, critic {critic_value})");
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
        let mut grads = actor_tape.backward(pass.loss)?;
        let g: Vec<Matrix> = pass
            .policy_params
            .iter()
            .zip(self.policy.net.params())
            .map(|(&v, p)| grads.take_or_zeros(v, p))
            .collect();
        self.policy_opt.step(self.policy.net.params_mut(), &g)?;
        for i in 0..2 {
            polyak_update(&mut self.targets[i], &self.critics[i], self.config.tau);
        }
        Ok(UpdateStats {
            critic_loss: critic_value / 2.0,
            actor_loss,
            mean_n: layout.lens.iter().sum::<usize>() as f64 / layout.lens.len() as f64,
        })
    }
}
