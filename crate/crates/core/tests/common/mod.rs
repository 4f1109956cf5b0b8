//! Checks shared by the oracle, property and acceptance test targets. Each
//! returns a one-line detail on success and a diagnostic on failure.

#![allow(dead_code)]

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use twin_offload::agents::{
    actor_spec, critic_spec, n_step_returns, Baseline, PolicyKind, Policy,
};
use twin_offload::channel::{bessel_j0, kappa_from_mobility, FadingLink};
use twin_offload::compute::{drain, local_execute, reward, CostBreakdown};
use twin_offload::env::{Env, ObsMode};
use twin_offload::harness::evaluate;
use twin_offload::nn::{policy_logit_grad, policy_loss, Network};
use twin_offload::predict::Predictors;
use twin_offload::scenario::{Config, CostWeights, QueueMode, SimParams, TaskSpec, TrainParams};

pub type Check = Result<String, String>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn task(data_mb: f64, cycles_gc: f64) -> TaskSpec {
    TaskSpec { id: 0, data_mb, cycles_gc, deadline_slots: 20, arrival_slot: 0 }
}

/// Constant supply `s` drains `x` in exactly `ceil(x / s)` slots.
pub fn drain_closed_form() -> Check {
    let mut r = rng(11);
    for i in 0..100 {
        let x: f64 = r.random_range(0.01..100.0);
        let s: f64 = r.random_range(0.1..10.0);
        let want = (x / s).ceil() as u64;
        let supply = vec![s; want as usize + 5];
        let got = drain(x, &supply, 7).map_err(|u| format!("instance {i}: unfinished with {} left", u.remaining))?;
        if got.duration() != want || got.start_slot != 7 {
            return Err(format!("instance {i}: x={x} s={s}: {} slots, closed form {want}", got.duration()));
        }
    }
    Ok("100/100 instances match ceil(x/s)".into())
}

/// Backward sweep against the direct double sum.
pub fn n_step_brute_force() -> Check {
    let mut r = rng(12);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = r.random_range(1..=20);
        let rewards: Vec<f64> = (0..n).map(|_| r.random_range(-2.0..1.0)).collect();
        let v: f64 = r.random_range(-5.0..5.0);
        let gamma: f64 = r.random_range(0.0..=1.0);
        let got = n_step_returns(&rewards, v, gamma);
        for i in 0..n {
            let mut want = gamma.powi((n - i) as i32) * v;
            for l in 0..n - i {
                want += gamma.powi(l as i32) * rewards[i + l];
            }
            worst = worst.max((got[i] - want).abs());
        }
    }
    if worst < 1e-9 {
        Ok(format!("max |diff| {worst:.1e} over 100 rollouts"))
    } else {
        Err(format!("max |diff| {worst:.3e}"))
    }
}

fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / na.max(nb).max(1e-300)
}

fn finite_difference(params: &[f64], loss: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let h = 1e-6;
    let mut p = params.to_vec();
    (0..p.len())
        .map(|i| {
            let orig = p[i];
            p[i] = orig + h;
            let up = loss(&p);
            p[i] = orig - h;
            let down = loss(&p);
            p[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Relative errors of the analytic actor and critic gradients on a
/// 112-32-3 / 112-32-1 pair against central differences.
pub fn gradient_check() -> Result<(f64, f64), String> {
    let tp = TrainParams { actor_hidden: vec![32], critic_hidden: vec![32], ..TrainParams::default() };
    let actor = Network::new(actor_spec(112, &tp)).map_err(|e| e.to_string())?;
    let critic = Network::new(critic_spec(112, &tp)).map_err(|e| e.to_string())?;
    let mut r = rng(13);
    let pa = actor.init_params(&mut r);
    let pc = critic.init_params(&mut r);
    let batch: Vec<(Vec<f64>, usize, f64, f64)> = (0..4)
        .map(|_| {
            let x: Vec<f64> = (0..112).map(|_| r.random_range(-1.0..1.0)).collect();
            (x, r.random_range(0..3), r.random_range(-1.0..1.0), r.random_range(-1.0..1.0))
        })
        .collect();
    let phi = 0.01;

    let actor_loss = |p: &[f64]| -> f64 {
        batch.iter().map(|(x, a, adv, _)| policy_loss(&actor.forward(p, x).unwrap().output, *a, *adv, phi)).sum()
    };
    let mut ga = vec![0.0; actor.param_count()];
    for (x, a, adv, _) in &batch {
        let f = actor.forward(&pa, x).map_err(|e| e.to_string())?;
        actor.backward(&pa, &f, &policy_logit_grad(&f.output, *a, *adv, phi), &mut ga).map_err(|e| e.to_string())?;
    }
    let ea = relative_error(&ga, &finite_difference(&pa, actor_loss));

    let critic_loss =
        |p: &[f64]| -> f64 { batch.iter().map(|(x, _, _, ret)| (ret - critic.forward(p, x).unwrap().output[0]).powi(2)).sum() };
    let mut gc = vec![0.0; critic.param_count()];
    for (x, _, _, ret) in &batch {
        let f = critic.forward(&pc, x).map_err(|e| e.to_string())?;
        let v = f.output[0];
        critic.backward(&pc, &f, &[-2.0 * (ret - v)], &mut gc).map_err(|e| e.to_string())?;
    }
    let ec = relative_error(&gc, &finite_difference(&pc, critic_loss));
    Ok((ea, ec))
}

/// `J0` by its power series, summed independently of the library.
pub fn j0_reference(x: f64) -> f64 {
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..60 {
        term *= -(x * x / 4.0) / ((k * k) as f64);
        sum += term;
    }
    sum
}

pub fn kappa_checks() -> Check {
    let k0 = kappa_from_mobility(0.0, 2e9, 0.2).map_err(|e| e.to_string())?;
    let z = bessel_j0(2.404826);
    let zr = j0_reference(2.404826);
    if k0 == 1.0 && z.abs() < 1e-4 && zr.abs() < 1e-4 {
        Ok(format!("kappa(0) = {k0}, J0(2.404826) = {z:.2e} (series {zr:.2e})"))
    } else {
        Err(format!("kappa(0) = {k0}, J0(2.404826) = {z:e}, series {zr:e}"))
    }
}

/// Mean power and lag-1 correlation of the recurrence at `kappa` over `n` steps.
pub fn fading_moments(kappa: f64, n: usize, seed: u64) -> (f64, f64) {
    let mut r = rng(seed);
    let mut link = FadingLink::new(kappa, 1.0, 1e6, 1e-9, &mut r).unwrap();
    let mut prev = link.h;
    let (mut power, mut lag) = (0.0, 0.0);
    for _ in 0..n {
        let h = link.step(&mut r);
        power += h.norm_sqr();
        lag += (h * prev.conj()).re;
        prev = h;
    }
    (power / n as f64, lag / power)
}

pub fn fading_stationarity() -> Check {
    let kappa = 0.9;
    let (p, rho) = fading_moments(kappa, 100_000, 14);
    let ok = (p - 1.0).abs() <= 0.02 && (rho - kappa).abs() <= 0.02 * kappa;
    let msg = format!("E|h|^2 = {p:.4}, lag-1 correlation {rho:.4} (kappa {kappa})");
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

/// Hand-computed rewards with the default weights (upsilon 0.005, eta 5, psi 5, F 1).
pub fn reward_fixtures() -> Check {
    let w = CostWeights::default();
    let sim = SimParams::default();
    let f = sim.handover_penalty;
    let base = |c: f64| CostBreakdown { scalar_cost: c, ..Default::default() };
    let cases = [
        ("plain C = 1.8", base(1.8), -0.009),
        ("deadline overrun 2 slots, C = 1", CostBreakdown { deadline_overrun: 2.0, ..base(1.0) }, -0.055),
        ("overflow 0.5 MB, C = 1", CostBreakdown { overflow_mb: 0.5, ..base(1.0) }, -0.0175),
        ("handover", CostBreakdown { handover: true, ..base(3.0) }, -1.0),
        // 4 Gc at 2 Gc/slot: 0.4 s, energy 2^3 * 2 = 16, C = 0.4*0.4 + 0.4*16 = 6.56
        ("local 4 Gc task", local_execute(&task(1.0, 4.0), &sim, &w), -0.0328),
    ];
    for (name, c, want) in cases {
        let got = reward(&c, &w, f);
        if (got - want).abs() > 1e-12 {
            return Err(format!("{name}: reward {got}, expected {want}"));
        }
    }
    Ok("5 fixtures (plain, deadline, overflow, handover, local) exact".into())
}

/// Random actions for `steps` decisions; checks occupancy after every step
/// and that dropped arrivals are all counted.
pub fn queue_fuzz(steps: u64, seed: u64) -> Check {
    let mut sim = SimParams { rate_states: vec![0.5, 1.5, 3.0, 6.0], episode_decisions: 5_000, ..SimParams::default() };
    sim.task_size_range_mb.hi = 20.0;
    let cap = sim.queue_capacity_mb;
    let mut env = Env::new(sim.clone(), CostWeights::default(), Predictors::oracle(&sim), ObsMode::Reduced)
        .map_err(|e| e.to_string())?;
    let mut r = rng(seed);
    let (mut done_steps, mut episode, mut drops, mut max_occ) = (0u64, 0u64, 0u64, 0.0f64);
    while done_steps < steps {
        env.reset(seed.wrapping_add(episode)).map_err(|e| e.to_string())?;
        episode += 1;
        let mut counted = 0;
        while !env.is_done() && done_steps < steps {
            let s = env.step_index(r.random_range(0..3)).map_err(|e| e.to_string())?;
            done_steps += 1;
            counted += s.info.dropped_tasks;
            let occ = env.queue().map_err(|e| e.to_string())?.occupied_mb();
            max_occ = max_occ.max(occ);
            if occ > cap + 1e-9 {
                return Err(format!("occupancy {occ} MB > {cap} MB at step {done_steps}"));
            }
        }
        let stats = env.stats().map_err(|e| e.to_string())?;
        // arrivals dropped while waiting for work are counted by the episode only
        if stats.discarded_tasks < counted {
            return Err(format!("episode {episode}: {} discards recorded, {counted} seen in steps", stats.discarded_tasks));
        }
        drops += stats.discarded_tasks;
    }
    Ok(format!("{done_steps} steps, max occupancy {max_occ:.1} MB, {drops} drops counted"))
}

/// AL retransmissions over the speed grid (must all be zero).
pub fn al_retransmissions(speeds: &[f64], episodes: u64) -> Result<Vec<f64>, String> {
    speeds
        .iter()
        .map(|&v| {
            let mut cfg = Config::default();
            cfg.sim.vehicle_speed_mps = v;
            let mut p = Baseline::new(PolicyKind::Al, 1).map_err(|e| e.to_string())?;
            let s = evaluate(&cfg, &Predictors::oracle(&cfg.sim), &mut p, 1, episodes).map_err(|e| e.to_string())?;
            Ok(s.to_row(&cfg, PolicyKind::Al, "speed", &v.to_string(), 1).retransmitted_per_episode)
        })
        .collect()
}

/// Offload fractions for every baseline in both queue modes.
pub fn baseline_fractions(episodes: u64) -> Result<Vec<(PolicyKind, QueueMode, [f64; 3])>, String> {
    let mut out = Vec::new();
    for mode in [QueueMode::Static, QueueMode::Dynamic] {
        for kind in [PolicyKind::Al, PolicyKind::Am, PolicyKind::Ac, PolicyKind::Rc] {
            let mut cfg = Config::default();
            cfg.sim.queue_mode = mode;
            let mut p: Box<dyn Policy> = Box::new(Baseline::new(kind, 3).map_err(|e| e.to_string())?);
            let s = evaluate(&cfg, &Predictors::oracle(&cfg.sim), p.as_mut(), 3, episodes).map_err(|e| e.to_string())?;
            out.push((kind, mode, s.offload_fractions()));
        }
    }
    Ok(out)
}
