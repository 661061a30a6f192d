use dcac_core::delay::{cdmdp_step, channel_simulate, initial_state, ChannelConfig, DelayProcess, LatencySource};
use dcac_core::envs::{OneDWorld, PointMass};
use dcac_core::fixtures::three_state_mdp;
use dcac_core::mdp::{ActionSpace, Environment};
use dcac_core::policy::Policy;
use dcac_core::rng::stream;

/// Replays the channel's environment and policy draws through the
/// constant-delay kernel and returns the rollout, resetting on terminals.
fn cdmdp_rollout<E: Environment>(env: &E, alpha: usize, beta: usize, ticks: usize, seed: u64) -> Vec<(dcac_core::delay::AugmentedState, f64, bool)> {
    let (mut env_rng, mut agent_rng) = (stream(seed, 0), stream(seed, 1));
    let policy = Policy::Uniform(env.action_space());
    let mut x = initial_state(env, alpha + beta, alpha, beta, &mut env_rng).unwrap();
    let mut out = Vec::with_capacity(ticks);
    for _ in 0..ticks {
        let (a, _) = policy.sample(&x, &mut agent_rng).unwrap();
        let step = cdmdp_step(&x, &a, env, alpha, beta, &mut env_rng).unwrap();
        out.push((step.state.clone(), step.reward, step.terminal));
        x = if step.terminal {
            initial_state(env, alpha + beta, alpha, beta, &mut env_rng).unwrap()
        } else {
            step.state
        };
    }
    out
}

fn assert_channel_matches_kernel<E: Environment + Clone>(env: E, alpha: usize, beta: usize, ticks: usize, seed: u64) {
    let policy = Policy::Uniform(env.action_space());
    let log = channel_simulate(env.clone(), &policy, ChannelConfig::constant(alpha, beta), ticks as u64, seed).unwrap();
    let kernel = cdmdp_rollout(&env, alpha, beta, ticks, seed);
    for (t, (rec, (x, r, done))) in log.ticks.iter().zip(&kernel).enumerate() {
        let s = &rec.next_state;
        assert_eq!((&s.obs, &s.buffer, s.alpha, s.beta), (&x.obs, &x.buffer, x.alpha, x.beta), "tick {t}");
        assert_eq!(rec.reward.to_bits(), r.to_bits(), "tick {t}");
        assert_eq!(rec.terminal, *done, "tick {t}");
        assert_eq!(s.kappa, Some(beta - 1));
    }
}

#[test]
fn constant_latency_channel_is_the_constant_delay_kernel() {
    assert_channel_matches_kernel(three_state_mdp(), 2, 3, 10_000, 7);
    assert_channel_matches_kernel(three_state_mdp(), 0, 1, 10_000, 8);
    assert_channel_matches_kernel(OneDWorld::default(), 1, 2, 10_000, 9);
    assert_channel_matches_kernel(PointMass::default(), 2, 3, 10_000, 10);
}

fn random_channel(seed: u64) -> ChannelConfig {
    let mut c = ChannelConfig::from_processes(
        DelayProcess::histogram(vec![0.3, 0.3, 0.2, 0.1, 0.1]).unwrap(),
        DelayProcess::histogram(vec![0.0, 0.5, 0.25, 0.25]).unwrap(),
    );
    if seed % 2 == 1 {
        c.observation_latency = LatencySource::Trace(vec![4, 0, 0, 3, 1, 2, 0]);
    }
    c
}

/// After every tick the rewards delivered so far sum to the undelayed
/// rewards of the steps the held observation has seen, i.e. all but the
/// last `alpha` of them.
#[test]
fn delivered_rewards_telescope_to_the_undelayed_sum() {
    for seed in 0..4 {
        let env = three_state_mdp();
        let log = channel_simulate(env, &Policy::Uniform(ActionSpace::Discrete(2)), random_channel(seed), 5_000, seed).unwrap();
        assert_eq!(log.undelayed_rewards.len(), 1, "the fixture never terminates");
        let produced = &log.undelayed_rewards[0];
        // steps the remote took before the first agent tick
        let head = produced.len() - log.ticks.len();
        let (mut delivered, mut prefix, mut seen) = (0.0, 0.0, 0);
        for (t, rec) in log.ticks.iter().enumerate() {
            delivered += rec.reward;
            let upto = head + t + 1 - rec.next_state.alpha;
            while seen < upto {
                prefix += produced[seen];
                seen += 1;
            }
            assert!((delivered - prefix).abs() <= 1e-12 * prefix.abs().max(1.0), "seed {seed} tick {t}");
        }
    }
}

#[test]
fn observation_delay_grows_by_at_most_one_per_tick() {
    let env = three_state_mdp();
    for seed in 0..2 {
        let log = channel_simulate(env.clone(), &Policy::Uniform(ActionSpace::Discrete(2)), random_channel(seed), 500_000, seed).unwrap();
        let mut prev = log.ticks[0].state.alpha;
        for t in &log.ticks {
            assert!(t.next_state.alpha <= prev + 1, "tick {}", t.tick);
            assert!(t.next_state.total_delay() <= 7);
            prev = t.next_state.alpha;
        }
    }
}
