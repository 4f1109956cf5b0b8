use rand::Rng;

use super::{argmax, q_spec, CurveRecorder, Features, PolicyKind, Trained};
use crate::compute::Action;
use crate::env::Env;
use crate::error::{Error, Result};
use crate::nn::{Network, ParameterStore, RmsProp};
use crate::predict::Predictors;
use crate::scenario::{derive_seed, rng_stream, streams, Config};

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub done: bool,
}

/// Fixed-capacity ring of transitions; the oldest entry is overwritten.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::usage("replay capacity must be >= 1"));
        }
        Ok(ReplayBuffer { capacity, items: Vec::with_capacity(capacity.min(1 << 16)), next: 0 })
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Uniform minibatch, drawn with replacement.
    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Result<Vec<&Transition>> {
        if self.items.is_empty() {
            return Err(Error::usage("sampling from an empty replay buffer"));
        }
        Ok((0..batch).map(|_| &self.items[rng.random_range(0..self.items.len())]).collect())
    }
}

/// `y = r + gamma (1 - done) max_a' Q_target(s', a')`.
pub fn bellman_targets(rewards: &[f64], dones: &[bool], next_q: &[Vec<f64>], gamma: f64) -> Result<Vec<f64>> {
    if rewards.len() != dones.len() || rewards.len() != next_q.len() {
        return Err(Error::usage("bellman inputs differ in length"));
    }
    Ok(rewards
        .iter()
        .zip(dones)
        .zip(next_q)
        .map(|((&r, &d), q)| {
            let best = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if d || q.is_empty() {
                r
            } else {
                r + gamma * best
            }
        })
        .collect())
}

/// Linear epsilon schedule from `start` to `end` over `decay_steps`.
pub(crate) fn epsilon(step: u64, start: f64, end: f64, decay_steps: u64) -> f64 {
    if step >= decay_steps {
        return end;
    }
    let f = step as f64 / decay_steps as f64;
    start + (end - start) * f
}

/// Uniform random action with probability `eps`, else the greedy one.
pub fn epsilon_greedy<R: Rng + ?Sized>(q: &[f64], eps: f64, rng: &mut R) -> usize {
    if rng.random::<f64>() < eps {
        rng.random_range(0..q.len())
    } else {
        argmax(q)
    }
}

/// Gradient of the mean squared TD error over a minibatch, on the taken
/// actions only.
fn td_gradient(net: &Network, online: &[f64], target: &[f64], batch: &[&Transition], gamma: f64) -> Result<Vec<f64>> {
    let next_q = batch.iter().map(|t| Ok(net.forward(target, &t.next_state)?.output)).collect::<Result<Vec<_>>>()?;
    let rewards: Vec<f64> = batch.iter().map(|t| t.reward).collect();
    let dones: Vec<bool> = batch.iter().map(|t| t.done).collect();
    let y = bellman_targets(&rewards, &dones, &next_q, gamma)?;
    let mut grad = vec![0.0; net.param_count()];
    let scale = 2.0 / batch.len() as f64;
    for (t, y) in batch.iter().zip(y) {
        let f = net.forward(online, &t.state)?;
        let mut g = vec![0.0; f.output.len()];
        g[t.action] = scale * (f.output[t.action] - y);
        net.backward(online, &f, &g, &mut grad)?;
    }
    Ok(grad)
}

/// Trains the DQN baseline on a single environment.
pub fn train_dqn(cfg: &Config, predictors: &Predictors, seed: u64) -> Result<Trained> {
    cfg.validate()?;
    let tp = &cfg.train;
    let kind = PolicyKind::Dqn;
    let features = Features::new(&cfg.sim, kind.obs_mode());
    let net = Network::new(q_spec(features.dim(&cfg.sim), tp))?;
    let mut init = rng_stream(seed, streams::INIT_WEIGHTS);
    let store = ParameterStore::new(
        net.init_params(&mut init),
        net.shapes().to_vec(),
        RmsProp { decay: tp.rmsprop_decay, eps: tp.rmsprop_eps },
    )?;
    let (mut target, _) = store.snapshot();
    let mut online = target.clone();
    let mut replay = ReplayBuffer::new(tp.dqn_buffer)?;
    let mut policy_rng = rng_stream(seed, streams::POLICY);
    let mut replay_rng = rng_stream(seed, streams::REPLAY);
    let mut curve = CurveRecorder::new(tp.curve_interval);

    let mut env = Env::new(cfg.sim.clone(), cfg.weights.clone(), predictors.clone(), kind.obs_mode())?;
    let env_seed = derive_seed(seed, 1);
    let mut episode = 0u64;
    let mut obs = env.reset(derive_seed(env_seed, episode))?;
    let decay_steps = (tp.dqn_eps_decay_fraction * tp.total_decisions as f64).round() as u64;
    let (mut episodes, mut updates) = (0u64, 0u64);

    for step in 0..tp.total_decisions {
        while env.is_done() {
            episode += 1;
            if episode > step + 1_000 {
                return Err(Error::Worker("environment ends every episode at reset".into()));
            }
            obs = env.reset(derive_seed(env_seed, episode))?;
        }
        let x = features.encode(&obs);
        let eps = epsilon(step, tp.dqn_eps_start, tp.dqn_eps_end, decay_steps);
        let q = net.forward(&online, &x)?.output;
        let a = epsilon_greedy(&q, eps, &mut policy_rng);
        let s = env.step(Action::from_index(a)?)?;
        let time_s = if s.info.handover { 0.0 } else { s.info.cost.time_slots * cfg.sim.slot_duration_s };
        if s.done {
            episodes += 1;
        }
        curve.record(episodes, s.reward, time_s, s.info.energy_spent);
        let next = features.encode(&s.observation);
        replay.push(Transition { state: x, action: a, reward: s.reward, next_state: next, done: s.done });
        obs = s.observation;

        let t = step + 1;
        if t >= tp.dqn_train_start && t % tp.dqn_train_every == 0 {
            let batch = replay.sample(tp.dqn_batch, &mut replay_rng)?;
            let g = td_gradient(&net, &online, &target, &batch, tp.gamma)?;
            store.apply(&g, tp.dqn_lr)?;
            store.snapshot_into(&mut online);
            updates += 1;
        }
        if t % tp.dqn_target_sync == 0 {
            target.copy_from_slice(&online);
        }
    }

    Ok(Trained {
        kind,
        policy_params: online,
        critic_params: None,
        policy_spec: net.spec().clone(),
        curve: curve.finish(episodes),
        decisions: tp.total_decisions,
        episodes,
        updates,
    })
}
