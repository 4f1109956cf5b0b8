use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Mutex;

use rand_chacha::ChaCha8Rng;

use super::{actor_spec, critic_spec, n_step_returns, sample_index, CurveRecorder, Features, PolicyKind, Trained};
use crate::compute::Action;
use crate::env::{Env, Observation};
use crate::error::{Error, Result};
use crate::nn::{policy_logit_grad, Network, ParameterStore, RmsProp};
use crate::predict::Predictors;
use crate::scenario::{derive_seed, rng_stream, streams, Config};

/// Actor and critic networks over a shared feature map.
#[derive(Debug, Clone)]
pub struct ActorCritic {
    pub actor: Network,
    pub critic: Network,
    pub features: Features,
}

impl ActorCritic {
    pub fn new(cfg: &Config, kind: PolicyKind) -> Result<Self> {
        let features = Features::new(&cfg.sim, kind.obs_mode());
        let dim = features.dim(&cfg.sim);
        Ok(ActorCritic {
            actor: Network::new(actor_spec(dim, &cfg.train))?,
            critic: Network::new(critic_spec(dim, &cfg.train))?,
            features,
        })
    }
}

/// Up to `m` transitions gathered under one weight snapshot.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Rollout {
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    /// `V(s_{t+m})`, or 0 when the rollout ended the episode.
    pub bootstrap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct A3cGradients {
    pub actor: Vec<f64>,
    pub critic: Vec<f64>,
}

/// Gradients of `sum_i [-A_i ln pi(a_i|s_i) - phi H(pi(.|s_i))]` for the actor
/// and `sum_i (R_i - V(s_i))^2` for the critic.
pub fn a3c_update(
    ac: &ActorCritic,
    actor_params: &[f64],
    critic_params: &[f64],
    rollout: &Rollout,
    gamma: f64,
    entropy_weight: f64,
) -> Result<A3cGradients> {
    let n = rollout.states.len();
    if rollout.actions.len() != n || rollout.rewards.len() != n || rollout.values.len() != n {
        return Err(Error::usage("rollout arrays differ in length"));
    }
    let targets = n_step_returns(&rollout.rewards, rollout.bootstrap, gamma);
    let mut ga = vec![0.0; ac.actor.param_count()];
    let mut gc = vec![0.0; ac.critic.param_count()];
    for i in 0..n {
        let s = &rollout.states[i];
        let fa = ac.actor.forward(actor_params, s)?;
        let fc = ac.critic.forward(critic_params, s)?;
        let v = fc.output[0];
        let adv = targets[i] - v;
        let gl = policy_logit_grad(&fa.output, rollout.actions[i], adv, entropy_weight);
        ac.actor.backward(actor_params, &fa, &gl, &mut ga)?;
        ac.critic.backward(critic_params, &fc, &[-2.0 * (targets[i] - v)], &mut gc)?;
    }
    Ok(A3cGradients { actor: ga, critic: gc })
}

/// Per-decision sample for the training curve.
#[derive(Debug, Clone, Copy)]
struct Sample {
    reward: f64,
    time_s: f64,
    energy: f64,
    episode_end: bool,
}

struct Worker {
    env: Env,
    seed: u64,
    episodes: u64,
    obs: Observation,
    rng: ChaCha8Rng,
    actor: Vec<f64>,
    critic: Vec<f64>,
}

impl Worker {
    fn new(cfg: &Config, kind: PolicyKind, predictors: &Predictors, seed: u64) -> Result<Self> {
        let mut env = Env::new(cfg.sim.clone(), cfg.weights.clone(), predictors.clone(), kind.obs_mode())?;
        let obs = env.reset(derive_seed(seed, 0))?;
        Ok(Worker {
            env,
            seed,
            episodes: 0,
            obs,
            rng: rng_stream(seed, streams::POLICY),
            actor: Vec::new(),
            critic: Vec::new(),
        })
    }

    fn next_episode(&mut self) -> Result<()> {
        // an episode can end at reset (static mode with an empty fill)
        loop {
            self.episodes += 1;
            self.obs = self.env.reset(derive_seed(self.seed, self.episodes))?;
            if !self.env.is_done() {
                return Ok(());
            }
            if self.episodes > 1_000 {
                return Err(Error::Worker("environment ends every episode at reset".into()));
            }
        }
    }

    fn rollout(&mut self, ac: &ActorCritic, m: usize, budget: u64) -> Result<(Rollout, Vec<Sample>)> {
        if self.env.is_done() {
            self.next_episode()?;
        }
        let mut r = Rollout::default();
        let mut samples = Vec::with_capacity(m);
        let steps = (m as u64).min(budget.max(1)) as usize;
        let mut done = false;
        for _ in 0..steps {
            let x = ac.features.encode(&self.obs);
            let probs = ac.actor.forward(&self.actor, &x)?.output;
            let v = ac.critic.forward(&self.critic, &x)?.output[0];
            let a = sample_index(&probs, &mut self.rng);
            let step = self.env.step(Action::from_index(a)?)?;
            let time_s = if step.info.handover { 0.0 } else { step.info.cost.time_slots * self.env.sim().slot_duration_s };
            samples.push(Sample { reward: step.reward, time_s, energy: step.info.energy_spent, episode_end: step.done });
            r.states.push(x);
            r.actions.push(a);
            r.rewards.push(step.reward);
            r.values.push(v);
            self.obs = step.observation;
            if step.done {
                done = true;
                break;
            }
        }
        r.bootstrap = if done {
            0.0
        } else {
            let x = ac.features.encode(&self.obs);
            ac.critic.forward(&self.critic, &x)?.output[0]
        };
        Ok((r, samples))
    }
}

struct Shared<'a> {
    ac: &'a ActorCritic,
    actor: ParameterStore,
    critic: ParameterStore,
    steps: AtomicU64,
    episodes: AtomicU64,
    updates: AtomicU64,
    abort: AtomicBool,
    curve: Mutex<CurveRecorder>,
    cfg: &'a Config,
}

impl Shared<'_> {
    /// One Algorithm-1 iteration for a worker: pull, roll out, push.
    fn iterate(&self, w: &mut Worker) -> Result<bool> {
        let tp = &self.cfg.train;
        let used = self.steps.load(Ordering::SeqCst);
        if used >= tp.total_decisions || self.abort.load(Ordering::SeqCst) {
            return Ok(false);
        }
        self.actor.snapshot_into(&mut w.actor);
        self.critic.snapshot_into(&mut w.critic);
        let (rollout, samples) = w.rollout(self.ac, tp.rollout_len, tp.total_decisions - used)?;
        let g = a3c_update(self.ac, &w.actor, &w.critic, &rollout, tp.gamma, tp.entropy_weight)?;
        self.actor.apply(&g.actor, tp.lr_actor)?;
        self.critic.apply(&g.critic, tp.lr_critic)?;
        self.updates.fetch_add(1, Ordering::SeqCst);
        self.steps.fetch_add(samples.len() as u64, Ordering::SeqCst);
        let mut curve = self.curve.lock().unwrap_or_else(|e| e.into_inner());
        for s in samples {
            if s.episode_end {
                self.episodes.fetch_add(1, Ordering::SeqCst);
            }
            curve.record(self.episodes.load(Ordering::SeqCst), s.reward, s.time_s, s.energy);
        }
        Ok(true)
    }
}

/// Trains A3C (full observation) or A3CL (reduced observation).
///
/// With `deterministic` the workers take turns on the calling thread, which
/// makes a run a pure function of `(config, seed)`. Otherwise each worker
/// runs on its own thread against the shared stores.
pub fn train_a3c(cfg: &Config, kind: PolicyKind, predictors: &Predictors, seed: u64, deterministic: bool) -> Result<Trained> {
    if !matches!(kind, PolicyKind::A3c | PolicyKind::A3cl) {
        return Err(Error::usage(format!("train_a3c cannot train {kind}")));
    }
    cfg.validate()?;
    let tp = &cfg.train;
    let ac = ActorCritic::new(cfg, kind)?;
    let mut init = rng_stream(seed, streams::INIT_WEIGHTS);
    let opt = RmsProp { decay: tp.rmsprop_decay, eps: tp.rmsprop_eps };
    let shared = Shared {
        ac: &ac,
        actor: ParameterStore::new(ac.actor.init_params(&mut init), ac.actor.shapes().to_vec(), opt)?,
        critic: ParameterStore::new(ac.critic.init_params(&mut init), ac.critic.shapes().to_vec(), opt)?,
        steps: AtomicU64::new(0),
        episodes: AtomicU64::new(0),
        updates: AtomicU64::new(0),
        abort: AtomicBool::new(false),
        curve: Mutex::new(CurveRecorder::new(tp.curve_interval)),
        cfg,
    };
    let mut workers = (0..tp.workers)
        .map(|i| Worker::new(cfg, kind, predictors, derive_seed(seed, 1 + i as u64)))
        .collect::<Result<Vec<_>>>()?;

    if deterministic || tp.workers == 1 {
        'outer: loop {
            for w in workers.iter_mut() {
                if !shared.iterate(w)? {
                    break 'outer;
                }
            }
        }
    } else {
        let results: Vec<Result<()>> = std::thread::scope(|scope| {
            let handles: Vec<_> = workers
                .iter_mut()
                .map(|w| {
                    let shared = &shared;
                    scope.spawn(move || -> Result<()> {
                        loop {
                            match shared.iterate(w) {
                                Ok(true) => {}
                                Ok(false) => return Ok(()),
                                Err(e) => {
                                    shared.abort.store(true, Ordering::SeqCst);
                                    return Err(e);
                                }
                            }
                        }
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().unwrap_or_else(|_| Err(Error::Worker("worker thread panicked".into()))))
                .collect()
        });
        for r in results {
            r.map_err(|e| Error::Worker(e.to_string()))?;
        }
    }

    let episodes = shared.episodes.load(Ordering::SeqCst);
    let curve = shared.curve.into_inner().unwrap_or_else(|e| e.into_inner()).finish(episodes);
    Ok(Trained {
        kind,
        policy_params: shared.actor.snapshot().0,
        critic_params: Some(shared.critic.snapshot().0),
        policy_spec: ac.actor.spec().clone(),
        curve,
        decisions: shared.steps.load(Ordering::SeqCst),
        episodes,
        updates: shared.updates.load(Ordering::SeqCst),
    })
}
