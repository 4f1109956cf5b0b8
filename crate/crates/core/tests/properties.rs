mod common;

use proptest::prelude::*;
use rand::Rng;

use twin_offload::agents::{
    actor_spec, bellman_targets, epsilon_greedy, n_step_returns, Baseline, Features, Policy, PolicyKind,
};
use twin_offload::compute::{drain, scalarize, Action};
use twin_offload::env::{generate_arrivals, observation_dim, Env, ObsMode, QueueState, RateChain, REDUCED_OBS_DIM};
use twin_offload::nn::{entropy, policy_logit_grad, softmax, Network, ParameterStore, RmsProp};
use twin_offload::predict::Predictors;
use twin_offload::scenario::{sample_uniform, Config, CostWeights, Interval, QueueMode, SimParams, TrainParams};

proptest! {
    #[test]
    fn queue_occupancy_tracks_admitted_tasks(sizes in prop::collection::vec(0.01f64..400.0, 1..60), pops in 0usize..30) {
        let mut q = QueueState::new(1000.0);
        let mut admitted = Vec::new();
        for (i, s) in sizes.iter().enumerate() {
            if q.push_back(common::task(*s, 1.0)) {
                admitted.push(*s);
            }
            prop_assert!(q.occupied_mb() <= 1000.0 + 1e-9, "after push {i}");
        }
        for _ in 0..pops.min(admitted.len()) {
            q.pop_front();
            admitted.remove(0);
        }
        prop_assert!((q.occupied_mb() - admitted.iter().sum::<f64>()).abs() < 1e-6);
        prop_assert_eq!(q.len(), admitted.len());
    }

    #[test]
    fn drain_remaining_is_nonincreasing(x in 0.0f64..50.0, supply in prop::collection::vec(0.0f64..5.0, 0..40)) {
        let trace = match drain(x, &supply, 0) { Ok(t) => t, Err(u) => u.trace };
        prop_assert!(trace.remaining_series.windows(2).all(|w| w[1] <= w[0]));
        prop_assert!(trace.remaining_series.iter().all(|r| *r >= 0.0));
    }

    #[test]
    fn softmax_is_a_distribution(logits in prop::collection::vec(-800.0f64..800.0, 1..8)) {
        let p = softmax(&logits);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|v| *v > 0.0));
        prop_assert!(entropy(&p) <= (logits.len() as f64).ln() + 1e-12);
    }

    #[test]
    fn myopic_returns_are_rewards(rewards in prop::collection::vec(-5.0f64..5.0, 1..25), v in -10.0f64..10.0) {
        prop_assert_eq!(n_step_returns(&rewards, v, 0.0), rewards);
    }

    #[test]
    fn uniform_samples_stay_in_range(lo in -5.0f64..5.0, width in 0.0f64..5.0, seed in any::<u64>()) {
        let iv = Interval::new(lo, lo + width).unwrap();
        let mut r = common::rng(seed);
        for _ in 0..20 {
            prop_assert!(iv.contains(sample_uniform(iv, &mut r).unwrap()));
        }
    }

    #[test]
    fn scalarized_cost_is_nonnegative(t in 0.0f64..100.0, e in 0.0f64..100.0, rc in 0.0f64..100.0) {
        prop_assert!(scalarize(t, e, rc, &CostWeights::default()) >= 0.0);
    }

    #[test]
    fn greedy_choice_without_exploration(q in prop::collection::vec(-10.0f64..10.0, 3)) {
        let mut r = common::rng(1);
        let a = epsilon_greedy(&q, 0.0, &mut r);
        prop_assert!(q.iter().all(|v| *v <= q[a]));
    }
}

#[test]
fn queue_never_overflows_over_a_million_fuzzed_steps() {
    let msg = common::queue_fuzz(1_000_000, 21).unwrap();
    eprintln!("{msg}");
}

#[test]
fn local_only_never_retransmits() {
    let r = common::al_retransmissions(&[5.0, 10.0, 15.0, 20.0, 25.0], 3).unwrap();
    assert!(r.iter().all(|x| *x == 0.0), "{r:?}");
}

#[test]
fn offload_fractions_sum_to_one_and_am_is_all_mec() {
    for (kind, mode, f) in common::baseline_fractions(3).unwrap() {
        assert!((f.iter().sum::<f64>() - 1.0).abs() < 1e-9, "{kind} {mode:?} {f:?}");
        assert!(f.iter().all(|x| (0.0..=1.0 + 1e-12).contains(x)));
        match kind {
            PolicyKind::Al => assert_eq!(f[0], 1.0),
            PolicyKind::Am => assert_eq!(f[1], 1.0),
            PolicyKind::Ac => assert!((f[2] - 1.0).abs() < 1e-12),
            _ => {}
        }
    }
}

#[test]
fn arrivals_are_poisson() {
    let sim = SimParams::default();
    let mut r = common::rng(22);
    let mut id = 0;
    let n = 100_000;
    let counts: Vec<f64> =
        (0..n).map(|s| generate_arrivals(0.7, &sim, s, &mut id, &mut r).unwrap().len() as f64).collect();
    let mean = counts.iter().sum::<f64>() / n as f64;
    let var = counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    assert!((mean - 0.7).abs() < 0.02, "mean {mean}");
    assert!((var - 0.7).abs() < 0.03, "variance {var}");
    assert_eq!(id, counts.iter().sum::<f64>() as u64);
    assert!(generate_arrivals(0.0, &sim, 0, &mut id, &mut r).unwrap().is_empty());
    assert!(generate_arrivals(-1.0, &sim, 0, &mut id, &mut r).is_err());
}

#[test]
fn rate_chain_visits_states_at_stationary_frequencies() {
    let sim = SimParams::default();
    let mut chain = RateChain::new(sim.rate_states.clone(), sim.rate_transitions.clone(), 1, 0).unwrap();
    let mut r = common::rng(23);
    let n = 200_000;
    let mut visits = [0usize; 4];
    for _ in 0..n {
        chain.advance(&mut r);
        visits[chain.state_index()] += 1;
    }
    // hub chain: pi_1 = 1/2, the three spokes 1/6 each
    for (i, want) in [1.0 / 6.0, 0.5, 1.0 / 6.0, 1.0 / 6.0].iter().enumerate() {
        let got = visits[i] as f64 / n as f64;
        assert!((got - want).abs() < 0.01, "state {i}: {got}");
    }
}

#[test]
fn rate_chain_holds_for_the_dwell() {
    let sim = SimParams::default();
    let mut chain = RateChain::new(sim.rate_states.clone(), sim.rate_transitions.clone(), 20, 1).unwrap();
    let mut r = common::rng(24);
    for _ in 0..19 {
        assert_eq!(chain.advance(&mut r), 0.5);
    }
    assert_ne!(chain.advance(&mut r), 0.5);
}

fn some_observation() -> twin_offload::env::Observation {
    let sim = SimParams::default();
    let mut env = Env::new(sim.clone(), CostWeights::default(), Predictors::oracle(&sim), ObsMode::Full).unwrap();
    env.reset(1).unwrap()
}

#[test]
fn random_choice_is_uniform() {
    let obs = some_observation();
    let mut p = Baseline::new(PolicyKind::Rc, 25).unwrap();
    let n = 30_000;
    let mut counts = [0usize; 3];
    for _ in 0..n {
        counts[p.act(&obs).unwrap().index()] += 1;
    }
    for c in counts {
        assert!((c as f64 / n as f64 - 1.0 / 3.0).abs() < 0.02, "{counts:?}");
    }
}

#[test]
fn fixed_baselines_ignore_the_state() {
    let obs = some_observation();
    for (kind, a) in [(PolicyKind::Al, Action::Local), (PolicyKind::Am, Action::Mec), (PolicyKind::Ac, Action::Cloud)] {
        let mut p = Baseline::new(kind, 0).unwrap();
        assert!((0..50).all(|_| p.act(&obs).unwrap() == a));
    }
    assert!(Baseline::new(PolicyKind::A3c, 0).is_err());
}

#[test]
fn full_exploration_is_uniform() {
    let mut r = common::rng(26);
    let q = [5.0, -1.0, 0.0];
    let n = 10_000;
    let mut counts = [0usize; 3];
    for _ in 0..n {
        counts[epsilon_greedy(&q, 1.0, &mut r)] += 1;
    }
    for c in counts {
        assert!((c as f64 / n as f64 - 1.0 / 3.0).abs() < 0.02, "{counts:?}");
    }
}

#[test]
fn target_sync_period_zero_is_rejected() {
    let tp = TrainParams { dqn_target_sync: 0, ..TrainParams::default() };
    assert!(tp.validate().is_err());
    assert!(Config::parse("dqn_target_sync = 0").is_err());
}

#[test]
fn myopic_bellman_target_is_the_reward() {
    let y = bellman_targets(&[0.25, -3.0], &[false, false], &[vec![9.0, 1.0, 2.0], vec![4.0, 4.0, 8.0]], 0.0).unwrap();
    assert_eq!(y, vec![0.25, -3.0]);
}

#[test]
fn entropy_only_updates_never_reduce_entropy() {
    let tp = TrainParams { actor_hidden: vec![16], ..TrainParams::default() };
    let net = Network::new(actor_spec(6, &tp)).unwrap();
    let mut r = common::rng(27);
    let mut params = net.init_params(&mut r);
    // sharpen the initial policy so there is entropy to gain
    for p in params.iter_mut() {
        *p *= 4.0;
    }
    let states: Vec<Vec<f64>> = (0..8).map(|_| (0..6).map(|_| r.random_range(-1.0..1.0)).collect()).collect();
    let mean_entropy = |p: &[f64]| states.iter().map(|s| entropy(&net.forward(p, s).unwrap().output)).sum::<f64>() / 8.0;
    let mut last = mean_entropy(&params);
    let start = last;
    for _ in 0..200 {
        let mut g = vec![0.0; net.param_count()];
        for s in &states {
            let f = net.forward(&params, s).unwrap();
            net.backward(&params, &f, &policy_logit_grad(&f.output, 0, 0.0, 0.01), &mut g).unwrap();
        }
        for (p, g) in params.iter_mut().zip(&g) {
            *p -= 0.5 * g;
        }
        let h = mean_entropy(&params);
        assert!(h >= last - 1e-12, "entropy fell from {last} to {h}");
        last = h;
    }
    assert!(last > start);
}

#[test]
fn zero_advantage_and_no_entropy_gives_zero_actor_gradient() {
    let g = policy_logit_grad(&[0.2, 0.5, 0.3], 1, 0.0, 0.0);
    assert!(g.iter().all(|x| *x == 0.0));
}

#[test]
fn store_counts_every_gradient_under_eight_threads() {
    let store = ParameterStore::new(vec![0.0; 64], vec![(8, 8)], RmsProp::default()).unwrap();
    let per_thread = 500;
    let seen: Vec<Vec<u64>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..8)
            .map(|_| s.spawn(|| (0..per_thread).map(|_| store.apply(&[1.0; 64], 1e-3).unwrap()).collect::<Vec<u64>>()))
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    assert_eq!(store.version(), 8 * per_thread);
    for v in &seen {
        assert!(v.windows(2).all(|w| w[1] > w[0]));
    }
    let mut all: Vec<u64> = seen.into_iter().flatten().collect();
    all.sort_unstable();
    assert_eq!(all, (1..=8 * per_thread).collect::<Vec<_>>());
}

#[test]
fn reduced_observation_has_seven_features() {
    let sim = SimParams::default();
    assert_eq!(observation_dim(&sim, ObsMode::Reduced), 7);
    assert_eq!(REDUCED_OBS_DIM, 7);
    assert_eq!(PolicyKind::A3cl.obs_mode(), ObsMode::Reduced);
    assert_eq!(Features::new(&sim, ObsMode::Reduced).dim(&sim), 7);
    assert_eq!(some_observation().to_vec(ObsMode::Reduced).len(), 7);
    assert_eq!(observation_dim(&sim, ObsMode::Full), 112);
}

#[test]
fn static_mode_has_no_arrivals() {
    let mut cfg = Config::default();
    cfg.sim.queue_mode = QueueMode::Static;
    let mut env = Env::new(cfg.sim.clone(), cfg.weights.clone(), Predictors::oracle(&cfg.sim), ObsMode::Full).unwrap();
    env.reset(4).unwrap();
    let start = env.queue().unwrap().len();
    let mut steps = 0;
    while !env.is_done() {
        env.step(Action::Local).unwrap();
        steps += 1;
    }
    assert_eq!(steps, start);
    assert_eq!(env.stats().unwrap().discarded_tasks, 0);
}
