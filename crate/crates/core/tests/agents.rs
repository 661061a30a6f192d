use dcac_core::agents::tabular::{TabularSac, TabularSoftCritic};
use dcac_core::agents::{encoder_for, rtac_channel, train, AgentConfig, AgentKind, Dcac, EvalMode, MetricsRow, ReplayMemory, Sac, TrainConfig};
use dcac_core::delay::{ActionBuffer, AugmentedState, ChannelConfig, DelayProcess, Rdmdp};
use dcac_core::envs::{reward_chain, Binned, PointMass};
use dcac_core::fixtures::{point_mass_replay, scrambled_policy, two_state_mdp};
use dcac_core::mdp::{Action, Environment, Trajectory, TrajectoryRecord};
use dcac_core::nn::{squashed_gaussian_sample, Activation, Matrix, Mlp, Tape};
use dcac_core::oracle::{soft_optimal_q, soft_value_iteration, AugmentedFiniteMdp};
use dcac_core::policy::{GaussianMlpPolicy, InputEncoder};
use dcac_core::resampling::{maximal_fragment, ValidSubTrajectory};
use dcac_core::rng::{sample_categorical, seeded};

fn small_config() -> AgentConfig {
    AgentConfig {
        hidden: vec![8, 8],
        batch_size: 4,
        warmup: 0,
        ..AgentConfig::default()
    }
}

fn point_mass_encoder(channel: &ChannelConfig) -> InputEncoder {
    let env = PointMass::default();
    encoder_for(AgentKind::Dcac, env.observation_space(), env.action_space(), channel, true)
}

fn point_mass_agent(channel: &ChannelConfig, config: AgentConfig, seed: u64) -> (Dcac, ReplayMemory) {
    let memory = point_mass_replay(channel.clone(), 12, seed).unwrap();
    let agent = Dcac::new(config, point_mass_encoder(channel), &mut seeded(seed + 100)).unwrap();
    (agent, memory)
}

fn fragments(memory: &ReplayMemory, starts: &[usize], max_len: usize) -> Vec<ValidSubTrajectory> {
    starts.iter().map(|&i| memory.fragment(i, max_len).unwrap()).collect()
}

fn zero_output_layer(net: &mut Mlp, bias: f64) {
    let params = net.params_mut();
    let n = params.len();
    params[n - 2].data.iter_mut().for_each(|w| *w = 0.0);
    params[n - 1].data.iter_mut().for_each(|b| *b = bias);
}

fn scalar_at(net: &Mlp, enc: &InputEncoder, x: &AugmentedState) -> f64 {
    net.forward(&Matrix::from_vec(1, enc.width(), enc.encode(x).unwrap())).data[0]
}

fn actor_gradient(agent: &Dcac, frags: &[ValidSubTrajectory], noise: &[Matrix]) -> Vec<f64> {
    let mut tape = Tape::new();
    let pass = agent.record_actor(&mut tape, frags, noise).unwrap();
    let mut grads = tape.backward(pass.loss).unwrap();
    pass.policy_params
        .iter()
        .zip(agent.policy.net.params())
        .flat_map(|(&v, p)| grads.take_or_zeros(v, p).data)
        .collect()
}

fn fixed_noise(levels: usize, rows: usize) -> Vec<Matrix> {
    (0..levels)
        .map(|t| Matrix::from_vec(rows, 1, (0..rows).map(|b| ((t * 7 + b * 3) % 5) as f64 * 0.4 - 0.8).collect()))
        .collect()
}

#[test]
fn zero_critics_and_rewards_give_zero_losses() {
    let channel = ChannelConfig::constant(1, 2);
    let config = AgentConfig {
        reward_scale: 0.0,
        entropy_scale: 0.0,
        ..small_config()
    };
    let (mut agent, memory) = point_mass_agent(&channel, config, 3);
    for i in 0..2 {
        zero_output_layer(&mut agent.critics[i], 0.0);
        zero_output_layer(&mut agent.targets[i], 0.0);
    }
    let frags = fragments(&memory, &[0, 2, 5, 7], usize::MAX);
    let mut tape = Tape::new();
    let pass = agent.record_actor(&mut tape, &frags, &fixed_noise(4, 4)).unwrap();
    let y = agent.critic_targets(&tape, &pass, &frags).unwrap();
    assert!(y.iter().all(|&t| t == 0.0), "{y:?}");
    assert_eq!(tape.scalar(pass.loss), 0.0);
    let mut critic_tape = Tape::new();
    let (loss, _) = agent.record_critic(&mut critic_tape, &frags, &y).unwrap();
    assert_eq!(critic_tape.scalar(loss), 0.0);
}

#[test]
fn zero_length_fragments_use_the_smaller_target_critic() {
    let channel = ChannelConfig::constant(1, 2);
    let (mut agent, memory) = point_mass_agent(&channel, small_config(), 4);
    // the second target sits strictly below the first everywhere
    agent.targets[1] = agent.targets[0].clone();
    let n = agent.targets[1].params().len();
    agent.targets[1].params_mut()[n - 1].data[0] -= 0.75;
    let frags = fragments(&memory, &[0, 3, 6], 0);
    assert!(frags.iter().all(|f| f.is_empty()));

    let mut tape = Tape::new();
    let pass = agent.record_actor(&mut tape, &frags, &[]).unwrap();
    let y = agent.critic_targets(&tape, &pass, &frags).unwrap();
    let enc = agent.encoder().clone();
    let mut expected_loss = 0.0;
    let mut actor = 0.0;
    for (f, &target) in frags.iter().zip(&y) {
        let x0 = f.start();
        let t0 = scalar_at(&agent.targets[0], &enc, x0);
        let t1 = scalar_at(&agent.targets[1], &enc, x0);
        assert!(t1 < t0);
        assert!((target - t1).abs() < 1e-12, "{target} vs {t1}");
        for critic in &agent.critics {
            expected_loss += (scalar_at(critic, &enc, x0) - t1).powi(2) / frags.len() as f64;
        }
        actor -= scalar_at(&agent.critics[0], &enc, x0).min(scalar_at(&agent.critics[1], &enc, x0)) / frags.len() as f64;
    }
    assert!((tape.scalar(pass.loss) - actor).abs() < 1e-12);
    let mut critic_tape = Tape::new();
    let (loss, _) = agent.record_critic(&mut critic_tape, &frags, &y).unwrap();
    assert!((critic_tape.scalar(loss) - expected_loss).abs() < 1e-12);

    // nothing is resampled, so the actor has no gradient
    let g = actor_gradient(&agent, &frags, &[]);
    assert!(g.iter().all(|&x| x == 0.0));
}

#[test]
fn one_step_targets_match_a_hand_computation() {
    let channel = ChannelConfig::constant(1, 2);
    let config = AgentConfig {
        entropy_scale: 0.3,
        ..small_config()
    };
    let (agent, memory) = point_mass_agent(&channel, config.clone(), 5);
    let frags = fragments(&memory, &[1, 4, 8], 1);
    assert!(frags.iter().all(|f| f.len() == 1));
    let noise = fixed_noise(1, frags.len());
    let mut tape = Tape::new();
    let pass = agent.record_actor(&mut tape, &frags, &noise).unwrap();
    let y = agent.critic_targets(&tape, &pass, &frags).unwrap();

    let enc = agent.encoder().clone();
    for (b, f) in frags.iter().enumerate() {
        let (mean, log_std) = agent.policy.head(f.start()).unwrap();
        let (a, log_prob) = squashed_gaussian_sample(&mean, &log_std, &[noise[0].data[b]]);
        let x1 = &f.steps()[0].state;
        let mut entries = x1.buffer.entries().to_vec();
        entries[0] = Action::Continuous(a);
        let resampled = AugmentedState {
            buffer: ActionBuffer::from_entries(entries).unwrap(),
            ..x1.clone()
        };
        let tail = scalar_at(&agent.targets[0], &enc, &resampled).min(scalar_at(&agent.targets[1], &enc, &resampled));
        let expected = config.reward_scale * f.steps()[0].reward - config.entropy_scale * log_prob + config.gamma * tail;
        assert!((y[b] - expected).abs() < 1e-12, "row {b}: {} vs {expected}", y[b]);
    }
}

#[test]
fn targets_follow_polyak_averaging_and_replay_is_untouched() {
    let channel = ChannelConfig::constant(1, 2);
    let config = AgentConfig { tau: 0.1, ..small_config() };
    let (agent, memory) = point_mass_agent(&channel, config, 6);
    let mut agent = dcac_core::agents::Agent::Dcac(agent);
    let before: Vec<_> = memory.iter().cloned().collect();
    let old_targets = match &agent {
        dcac_core::agents::Agent::Dcac(a) => a.targets.clone(),
        _ => unreachable!(),
    };
    agent.update(&memory, &mut seeded(1)).unwrap();
    let after: Vec<_> = memory.iter().cloned().collect();
    assert_eq!(before, after);

    let dcac_core::agents::Agent::Dcac(a) = &agent else { unreachable!() };
    for i in 0..2 {
        let mut moved = false;
        for ((t, o), c) in a.targets[i].params().iter().zip(old_targets[i].params()).zip(a.critics[i].params()) {
            for ((t, o), c) in t.data.iter().zip(&o.data).zip(&c.data) {
                assert!((t - (0.1 * c + 0.9 * o)).abs() <= 1e-15);
                moved |= t != o;
            }
        }
        assert!(moved);
        assert_ne!(a.targets[i].flat(), a.critics[i].flat());
    }
}

#[test]
fn optimal_policy_is_a_stationary_point() {
    let channel = rtac_channel();
    let enc = point_mass_encoder(&channel);
    let w = enc.width();
    let column = enc.buffer_column(1).unwrap();
    let a0: f64 = 0.3;
    // v(x) = -(silu(a - a0) + silu(a0 - a)), maximal where the newest
    // buffered action equals a0
    let mut critic = vec![0.0; w * 2 + 2 + 2 + 1];
    critic[column * 2] = 1.0;
    critic[column * 2 + 1] = -1.0;
    critic[w * 2] = -a0;
    critic[w * 2 + 1] = a0;
    critic[w * 2 + 2] = -1.0;
    critic[w * 2 + 3] = -1.0;
    let critic = Mlp::from_flat(&[w, 2, 1], Activation::Silu, &critic).unwrap();
    let config = AgentConfig {
        entropy_scale: 0.0,
        ..small_config()
    };
    let memory = point_mass_replay(channel, 12, 7).unwrap();
    let frags = fragments(&memory, &[0, 2, 4, 6, 9], usize::MAX);
    assert!(frags.iter().all(|f| f.len() == 1));
    let noise = fixed_noise(1, frags.len());

    let gradient_norm = |mean: f64, log_std: f64| {
        let mut head = vec![0.0; w * 2 + 2];
        head[w * 2] = mean;
        head[w * 2 + 1] = log_std;
        let policy = GaussianMlpPolicy::new(Mlp::from_flat(&[w, 2], Activation::Silu, &head).unwrap(), enc.clone()).unwrap();
        let agent = Dcac::from_parts(config.clone(), policy, [critic.clone(), critic.clone()]);
        actor_gradient(&agent, &frags, &noise).iter().map(|g| g * g).sum::<f64>().sqrt()
    };
    let at_optimum = gradient_norm(a0.atanh(), -30.0);
    assert!(at_optimum < 1e-6, "{at_optimum}");
    assert!(gradient_norm(0.0, -30.0) > 1e-2);
}

#[test]
fn large_entropy_scale_turns_the_actor_into_an_entropy_maximizer() {
    let channel = ChannelConfig::constant(1, 2);
    let big = AgentConfig {
        entropy_scale: 1e3,
        ..small_config()
    };
    let (agent, memory) = point_mass_agent(&channel, big.clone(), 8);
    let frags = fragments(&memory, &[0, 1, 3, 5, 8, 9], usize::MAX);
    let noise = fixed_noise(4, frags.len());
    let g_big = actor_gradient(&agent, &frags, &noise);

    let pure = AgentConfig {
        entropy_scale: 1.0,
        reward_scale: 0.0,
        ..big
    };
    let mut critics = agent.critics.clone();
    critics.iter_mut().for_each(|c| zero_output_layer(c, 0.0));
    let entropy_only = Dcac::from_parts(pure, agent.policy.clone(), critics);
    let g_ent = actor_gradient(&entropy_only, &frags, &noise);

    let dot: f64 = g_big.iter().zip(&g_ent).map(|(a, b)| a * b).sum();
    let norm = |g: &[f64]| g.iter().map(|x| x * x).sum::<f64>().sqrt();
    let cosine = dot / (norm(&g_big) * norm(&g_ent));
    assert!(cosine > 0.99, "{cosine}");
}

#[test]
fn tabular_critic_reaches_the_soft_value_from_off_policy_data() {
    let (alpha, beta) = (1, 2);
    let mdp = reward_chain();
    let (pa, pb) = (DelayProcess::constant(alpha), DelayProcess::constant(beta));
    let aug = AugmentedFiniteMdp::build(mdp.clone(), pa.clone(), pb.clone()).unwrap();
    let kernel = Rdmdp::new(mdp, pa, pb, alpha + beta).unwrap();
    let pi = scrambled_policy(&aug, 0.3).unwrap();
    let mu = scrambled_policy(&aug, 0.8).unwrap();
    let (gamma, c) = (0.5, 0.2);
    let v = soft_value_iteration(&aug, &pi, gamma, c, 1e-14).unwrap();

    let mut critic = TabularSoftCritic::new(gamma, c, 1.0).unwrap();
    let mut rng = seeded(11);
    for k in 0..10_000 {
        let mut batch = Vec::with_capacity(256);
        for j in 0..256 {
            let x0 = aug.state((k + j) % aug.num_states());
            let mut traj = Trajectory::new(x0.clone(), "behaviour");
            let mut x = x0;
            for _ in 0..alpha + beta {
                let (a, _) = mu.sample(&x, &mut rng).unwrap();
                let step = kernel.step(&x, &a, &mut rng).unwrap();
                traj.push(TrajectoryRecord {
                    state: step.state.clone(),
                    reward: step.reward,
                    terminal: step.terminal,
                })
                .unwrap();
                x = step.state;
            }
            batch.push(maximal_fragment(&traj, 0).unwrap());
        }
        critic.update_batch(&pi, &batch, &mut rng).unwrap();
    }
    let err = (0..aug.num_states())
        .map(|i| (critic.value(&aug.state(i)).unwrap() - v[i]).abs())
        .fold(0.0, f64::max);
    assert!(err < 1e-3, "sup error {err:.2e}");
}

#[test]
fn tabular_sac_reaches_soft_q_on_a_stochastic_mdp() {
    let mdp = two_state_mdp();
    let (gamma, c) = (0.5, 0.5);
    let q_star = soft_optimal_q(&mdp, gamma, c, 1e-14).unwrap();
    let mut sac = TabularSac::new(&mdp, gamma, c, 1.0).unwrap();
    let mut visits = vec![vec![0u64; 2]; 2];
    // iterates are averaged over the second half to cancel sampling noise
    let mut average = vec![vec![0.0; 2]; 2];
    let mut rng = seeded(12);
    let total = 1_000_000;
    for k in 0..total {
        let (s, a) = ((k / 2) % 2, k % 2);
        visits[s][a] += 1;
        sac.lr = (visits[s][a] as f64).powf(-0.7);
        let next = sample_categorical(mdp.transition_row(s, a), &mut rng);
        sac.update(s, a, mdp.reward(s, a), next, false).unwrap();
        if k >= total / 2 {
            average[s][a] += sac.q[s][a] / (total / 8) as f64;
        }
    }
    let err = (0..2)
        .flat_map(|s| (0..2).map(move |a| (s, a)))
        .map(|(s, a)| (average[s][a] - q_star[s][a]).abs())
        .fold(0.0, f64::max);
    assert!(err < 1e-3, "sup error {err:.2e}");
}

fn chain_config(kind: AgentKind, channel: ChannelConfig, steps: usize, seed: u64) -> TrainConfig {
    let mut config = TrainConfig::new(kind, channel, 20, steps, seed);
    config.agent = AgentConfig {
        hidden: vec![32, 32],
        batch_size: 32,
        warmup: 500,
        ..AgentConfig::default()
    };
    config.eval_every = 500;
    config.eval_episodes = 2;
    config.eval_mode = EvalMode::Deterministic;
    config
}

/// Rows compared bit for bit, so NaN losses compare equal.
fn row_bits(rows: &[MetricsRow]) -> Vec<[u64; 7]> {
    rows.iter()
        .map(|r| {
            [r.step as f64, r.eval_return, r.critic_loss, r.actor_loss, r.mean_n, r.alpha_mean, r.beta_mean].map(f64::to_bits)
        })
        .collect()
}

fn chain() -> Binned<dcac_core::mdp::FiniteMdp> {
    Binned::new(reward_chain()).unwrap()
}

#[test]
fn rtac_is_dcac_with_one_step_fragments() {
    assert_eq!(rtac_channel().buffer_len, 1);
    let rtac = chain_config(AgentKind::Rtac, rtac_channel(), 1500, 3);
    let mut dcac = chain_config(AgentKind::Dcac, rtac_channel(), 1500, 3);
    dcac.agent.max_fragment = Some(1);
    let a = train(chain(), &rtac, &mut |_| {}).unwrap();
    let b = train(chain(), &dcac, &mut |_| {}).unwrap();
    assert_eq!(row_bits(&a.rows), row_bits(&b.rows));
    assert_eq!(a.agent.policy().net.flat(), b.agent.policy().net.flat());
    assert!(a.rows.iter().filter(|r| !r.mean_n.is_nan()).all(|r| r.mean_n == 1.0));

    let mut wrong = rtac.clone();
    wrong.channel = ChannelConfig::constant(1, 1);
    assert!(train(chain(), &wrong, &mut |_| {}).is_err());
}

#[test]
fn training_is_reproducible_and_agents_differ() {
    let channel = ChannelConfig::constant(1, 2);
    let run = |kind, seed| train(chain(), &chain_config(kind, channel.clone(), 1500, seed), &mut |_| {}).unwrap();
    let first = run(AgentKind::Dcac, 5);
    let again = run(AgentKind::Dcac, 5);
    assert_eq!(row_bits(&first.rows), row_bits(&again.rows));
    assert_eq!(first.agent.policy().net.flat(), again.agent.policy().net.flat());
    assert_ne!(first.agent.policy().net.flat(), run(AgentKind::Dcac, 6).agent.policy().net.flat());

    let sac = run(AgentKind::Sac, 5);
    assert_ne!(row_bits(&first.rows), row_bits(&sac.rows));
    assert_ne!(first.agent.policy().net.flat(), sac.agent.policy().net.flat());
}

/// The best undiscounted return over `horizon` ticks with `alpha = 0`,
/// `beta = 1`: the first applied action is the buffered null action.
fn chain_optimum(horizon: usize) -> f64 {
    let env = chain();
    let mdp = &env.inner;
    let first = env.bin(&env.action_space().null_action()).unwrap().as_discrete().unwrap();
    let mut values = vec![0.0; mdp.num_states()];
    for _ in 0..horizon - 1 {
        values = (0..mdp.num_states())
            .map(|s| {
                (0..mdp.num_actions())
                    .map(|a| mdp.reward(s, a) + (0..mdp.num_states()).map(|t| mdp.transition_row(s, a)[t] * values[t]).sum::<f64>())
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect();
    }
    let s0 = 0;
    mdp.reward(s0, first) + (0..mdp.num_states()).map(|t| mdp.transition_row(s0, first)[t] * values[t]).sum::<f64>()
}

#[test]
fn both_agents_learn_the_undelayed_chain() {
    let optimum = chain_optimum(20);
    assert_eq!(optimum, 19.0);
    for kind in [AgentKind::Dcac, AgentKind::Sac] {
        let outcome = train(chain(), &chain_config(kind, rtac_channel(), 5000, 1), &mut |_| {}).unwrap();
        let last = outcome.rows.last().unwrap().eval_return;
        assert!(last >= 0.95 * optimum, "{kind:?}: {last} of {optimum}");
    }
}

/// Largest central-difference mismatch of `grad` over every parameter of
/// `net`, relative to the largest numerical derivative.
fn finite_difference_error(net: &Mlp, grad: &[f64], loss: &dyn Fn(&Mlp) -> f64) -> f64 {
    let h = 1e-6;
    let flat = net.flat();
    let (mut worst, mut scale) = (0.0f64, 0.0f64);
    for (k, g) in grad.iter().enumerate() {
        let shifted = |delta: f64| {
            let mut p = flat.clone();
            p[k] += delta;
            loss(&Mlp::from_flat(net.sizes(), net.activation(), &p).unwrap())
        };
        let numeric = (shifted(h) - shifted(-h)) / (2.0 * h);
        worst = worst.max((numeric - g).abs());
        scale = scale.max(numeric.abs());
    }
    worst / scale.max(1e-12)
}

fn flat_gradient(tape: &mut Tape, loss: dcac_core::nn::Var, params: &[dcac_core::nn::Var], net: &Mlp) -> Vec<f64> {
    let mut grads = tape.backward(loss).unwrap();
    params.iter().zip(net.params()).flat_map(|(&v, p)| grads.take_or_zeros(v, p).data).collect()
}

#[test]
fn loss_gradients_match_finite_differences() {
    let channel = ChannelConfig::constant(1, 2);
    let config = AgentConfig {
        entropy_scale: 0.2,
        ..small_config()
    };
    let (dcac, memory) = point_mass_agent(&channel, config.clone(), 9);
    let frags = fragments(&memory, &[0, 2, 4, 7], usize::MAX);
    let noise = fixed_noise(4, frags.len());

    let actor_loss = |net: &Mlp| {
        let mut agent = dcac.clone();
        agent.policy.net = net.clone();
        let mut tape = Tape::new();
        let pass = agent.record_actor(&mut tape, &frags, &noise).unwrap();
        tape.scalar(pass.loss)
    };
    let g = actor_gradient(&dcac, &frags, &noise);
    let err = finite_difference_error(&dcac.policy.net, &g, &actor_loss);
    assert!(err < 1e-3, "dcac actor {err:.2e}");

    let mut tape = Tape::new();
    let pass = dcac.record_actor(&mut tape, &frags, &noise).unwrap();
    let y = dcac.critic_targets(&tape, &pass, &frags).unwrap();
    let mut tape = Tape::new();
    let (loss, params) = dcac.record_critic(&mut tape, &frags, &y).unwrap();
    let g = flat_gradient(&mut tape, loss, &params[0], &dcac.critics[0]);
    let critic_loss = |net: &Mlp| {
        let mut agent = dcac.clone();
        agent.critics[0] = net.clone();
        let mut tape = Tape::new();
        let (loss, _) = agent.record_critic(&mut tape, &frags, &y).unwrap();
        tape.scalar(loss)
    };
    let err = finite_difference_error(&dcac.critics[0], &g, &critic_loss);
    assert!(err < 1e-3, "dcac critic {err:.2e}");

    let env = PointMass::default();
    let enc = encoder_for(AgentKind::Sac, env.observation_space(), env.action_space(), &channel, true);
    let sac = Sac::new(config, enc, &mut seeded(19)).unwrap();
    let batch: Vec<_> = memory.iter().take(5).collect();
    let noise = fixed_noise(1, batch.len()).remove(0);
    let mut tape = Tape::new();
    let (loss, params) = sac.record_actor(&mut tape, &batch, &noise).unwrap();
    let g = flat_gradient(&mut tape, loss, &params, &sac.policy.net);
    let sac_actor = |net: &Mlp| {
        let mut agent = sac.clone();
        agent.policy.net = net.clone();
        let mut tape = Tape::new();
        let (loss, _) = agent.record_actor(&mut tape, &batch, &noise).unwrap();
        tape.scalar(loss)
    };
    let err = finite_difference_error(&sac.policy.net, &g, &sac_actor);
    assert!(err < 1e-3, "sac actor {err:.2e}");

    let y = sac.critic_targets(&batch, &noise).unwrap();
    let mut tape = Tape::new();
    let (loss, params) = sac.record_critic(&mut tape, &batch, &y).unwrap();
    let g = flat_gradient(&mut tape, loss, &params[1], &sac.critics[1]);
    let sac_critic = |net: &Mlp| {
        let mut agent = sac.clone();
        agent.critics[1] = net.clone();
        let mut tape = Tape::new();
        let (loss, _) = agent.record_critic(&mut tape, &batch, &y).unwrap();
        tape.scalar(loss)
    };
    let err = finite_difference_error(&sac.critics[1], &g, &sac_critic);
    assert!(err < 1e-3, "sac critic {err:.2e}");
}
