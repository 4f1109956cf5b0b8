//! Offloading policies: the four static baselines, A3C (and its reduced-state
//! variant A3CL), and DQN.

mod a3c;
mod dqn;

pub use a3c::{a3c_update, train_a3c, ActorCritic, A3cGradients, Rollout};
pub use dqn::{bellman_targets, epsilon_greedy, train_dqn, ReplayBuffer, Transition};

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::compute::Action;
use crate::channel::large_scale_loss;
use crate::env::{rsu_distance, ObsMode, Observation};
use crate::error::{Error, Result};
use crate::nn::{self, Activation, Head, Network, NetworkSpec};
use crate::scenario::{rng_stream, streams, SimParams, TrainParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PolicyKind {
    /// All local.
    Al,
    /// All MEC.
    Am,
    /// All cloud.
    Ac,
    /// Uniformly random.
    Rc,
    A3c,
    A3cl,
    Dqn,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 7] =
        [PolicyKind::Al, PolicyKind::Am, PolicyKind::Ac, PolicyKind::Rc, PolicyKind::A3c, PolicyKind::A3cl, PolicyKind::Dqn];

    pub fn is_learned(self) -> bool {
        matches!(self, PolicyKind::A3c | PolicyKind::A3cl | PolicyKind::Dqn)
    }

    pub fn obs_mode(self) -> ObsMode {
        match self {
            PolicyKind::A3cl => ObsMode::Reduced,
            _ => ObsMode::Full,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Al => "AL",
            PolicyKind::Am => "AM",
            PolicyKind::Ac => "AC",
            PolicyKind::Rc => "RC",
            PolicyKind::A3c => "A3C",
            PolicyKind::A3cl => "A3CL",
            PolicyKind::Dqn => "DQN",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        PolicyKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::usage(format!("unknown policy `{s}` (expected AL, AM, AC, RC, A3C, A3CL or DQN)")))
    }
}

pub trait Policy: Send {
    fn kind(&self) -> PolicyKind;

    fn act(&mut self, obs: &Observation) -> Result<Action>;

    fn obs_mode(&self) -> ObsMode {
        self.kind().obs_mode()
    }
}

/// AL, AM, AC and RC.
#[derive(Debug, Clone)]
pub struct Baseline {
    kind: PolicyKind,
    rng: ChaCha8Rng,
}

impl Baseline {
    pub fn new(kind: PolicyKind, seed: u64) -> Result<Self> {
        if kind.is_learned() {
            return Err(Error::usage(format!("{kind} is not a static baseline")));
        }
        Ok(Baseline { kind, rng: rng_stream(seed, streams::POLICY) })
    }
}

impl Policy for Baseline {
    fn kind(&self) -> PolicyKind {
        self.kind
    }

    fn act(&mut self, _obs: &Observation) -> Result<Action> {
        Ok(match self.kind {
            PolicyKind::Al => Action::Local,
            PolicyKind::Am => Action::Mec,
            PolicyKind::Ac => Action::Cloud,
            _ => Action::ALL[self.rng.random_range(0..3)],
        })
    }
}

/// Maps a raw observation to network inputs: occupancy and battery as
/// fractions, task size and cycles over their range maxima, gains as
/// standardised `log10` SNR, capacities over the range maximum, forecasts
/// over a rate scale.
#[derive(Debug, Clone, PartialEq)]
pub struct Features {
    mode: ObsMode,
    queue_cap: f64,
    battery: f64,
    size_hi: f64,
    cycles_hi: f64,
    /// Minus the typical `log10` gain of each link.
    mec_snr_offset: f64,
    cloud_snr_offset: f64,
    capacity_hi: f64,
    mec_rate_scale: f64,
    cloud_rate_scale: f64,
}

/// Standard deviation of `log10 |h|^2` for unit-power Rayleigh fading.
const SNR_SPAN: f64 = 0.557;
/// Mean of `log10 |h|^2` for unit-power Rayleigh fading (`-gamma_E / ln 10`).
const LOG10_FADING_MEAN: f64 = -0.2507;
/// Spectral efficiency (bit/s/Hz) that maps a forecast to 1.
const RATE_EFFICIENCY: f64 = 30.0;

impl Features {
    pub fn new(sim: &SimParams, mode: ObsMode) -> Self {
        let rate_scale = |bw: f64| RATE_EFFICIENCY * bw * sim.slot_duration_s / 8e6;
        // typical log10 gain: path loss averaged along one RSU segment, plus the fading mean
        let n = 64;
        let mec_loss = (0..n)
            .map(|i| {
                let x = (i as f64 + 0.5) / n as f64 * sim.rsu_spacing_m;
                large_scale_loss(rsu_distance(x, sim), sim.path_loss_exponent).log10()
            })
            .sum::<f64>()
            / n as f64;
        let cloud_loss = large_scale_loss(sim.cloud_distance_m, sim.path_loss_exponent).log10();
        Features {
            mode,
            queue_cap: sim.queue_capacity_mb,
            battery: sim.initial_battery,
            size_hi: sim.task_size_range_mb.hi.max(1e-9),
            cycles_hi: sim.task_cycles_range_gc.hi.max(1e-9),
            mec_snr_offset: -mec_loss - LOG10_FADING_MEAN,
            cloud_snr_offset: -cloud_loss - LOG10_FADING_MEAN,
            capacity_hi: sim.mec_capacity_range_gc_per_slot.hi.max(1e-9),
            mec_rate_scale: rate_scale(sim.mec_bandwidth_hz),
            cloud_rate_scale: rate_scale(sim.cloud_bandwidth_hz),
        }
    }

    pub fn mode(&self) -> ObsMode {
        self.mode
    }

    fn snr(g: f64, offset: f64) -> f64 {
        (g.max(1e-300).log10() + offset) / SNR_SPAN
    }

    pub fn dim(&self, sim: &SimParams) -> usize {
        crate::env::observation_dim(sim, self.mode)
    }

    pub fn encode(&self, obs: &Observation) -> Vec<f64> {
        let mut v = vec![
            obs.queue_mb / self.queue_cap,
            obs.battery / self.battery,
            obs.task_data_mb / self.size_hi,
            obs.task_cycles_gc / self.cycles_hi,
        ];
        let last = |h: &[f64]| h.last().copied().unwrap_or(0.0);
        match self.mode {
            ObsMode::Full => {
                v.extend(obs.mec_gains.iter().map(|&g| Self::snr(g, self.mec_snr_offset)));
                v.extend(obs.cloud_gains.iter().map(|&g| Self::snr(g, self.cloud_snr_offset)));
                v.extend(obs.mec_capacities.iter().map(|&f| f / self.capacity_hi));
                v.push(obs.predicted_mec_throughput / self.mec_rate_scale);
                v.push(obs.predicted_cloud_throughput / self.cloud_rate_scale);
                v.push(obs.predicted_task_rate);
            }
            ObsMode::Reduced => {
                v.push(Self::snr(last(&obs.mec_gains), self.mec_snr_offset));
                v.push(Self::snr(last(&obs.cloud_gains), self.cloud_snr_offset));
                v.push(last(&obs.mec_capacities) / self.capacity_hi);
            }
        }
        v
    }
}

/// Targets `R_i = r_i + gamma R_{i+1}`, seeded with `bootstrap` (0 on a
/// terminal rollout).
pub fn n_step_returns(rewards: &[f64], bootstrap: f64, gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut r = bootstrap;
    for i in (0..rewards.len()).rev() {
        r = rewards[i] + gamma * r;
        out[i] = r;
    }
    out
}

pub fn advantage(targets: &[f64], values: &[f64]) -> Result<Vec<f64>> {
    if targets.len() != values.len() {
        return Err(Error::usage("targets and values differ in length"));
    }
    Ok(targets.iter().zip(values).map(|(t, v)| t - v).collect())
}

pub fn actor_spec(input_dim: usize, tp: &TrainParams) -> NetworkSpec {
    NetworkSpec {
        input_dim,
        hidden: tp.actor_hidden.clone(),
        activation: Activation::Relu6,
        head: Head::Policy(3),
        recurrent: None,
    }
}

pub fn critic_spec(input_dim: usize, tp: &TrainParams) -> NetworkSpec {
    NetworkSpec {
        input_dim,
        hidden: tp.critic_hidden.clone(),
        activation: Activation::Relu6,
        head: Head::Value,
        recurrent: None,
    }
}

pub fn q_spec(input_dim: usize, tp: &TrainParams) -> NetworkSpec {
    NetworkSpec {
        input_dim,
        hidden: tp.dqn_hidden.clone(),
        activation: Activation::Relu6,
        head: Head::Linear(3),
        recurrent: None,
    }
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// A trained network acting through its features: an actor (policy head,
/// greedy or sampled) or a Q-network (greedy).
#[derive(Debug, Clone)]
pub struct LearnedPolicy {
    kind: PolicyKind,
    net: Network,
    params: Vec<f64>,
    features: Features,
    greedy: bool,
    rng: ChaCha8Rng,
}

impl LearnedPolicy {
    pub fn new(kind: PolicyKind, sim: &SimParams, tp: &TrainParams, params: Vec<f64>, seed: u64) -> Result<Self> {
        let features = Features::new(sim, kind.obs_mode());
        let dim = features.dim(sim);
        let spec = match kind {
            PolicyKind::A3c | PolicyKind::A3cl => actor_spec(dim, tp),
            PolicyKind::Dqn => q_spec(dim, tp),
            other => return Err(Error::usage(format!("{other} has no network"))),
        };
        let net = Network::new(spec)?;
        if params.len() != net.param_count() {
            return Err(Error::usage(format!(
                "{kind} checkpoint holds {} parameters, network needs {}",
                params.len(),
                net.param_count()
            )));
        }
        Ok(LearnedPolicy { kind, net, params, features, greedy: tp.greedy_eval, rng: rng_stream(seed, streams::POLICY) })
    }

    pub fn load(kind: PolicyKind, sim: &SimParams, tp: &TrainParams, path: &Path, seed: u64) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingCheckpoint { policy: kind.name().to_string(), path: path.to_path_buf() });
        }
        let ck = nn::load_checkpoint(path)?;
        Self::new(kind, sim, tp, ck.params, seed)
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn set_greedy(&mut self, greedy: bool) {
        self.greedy = greedy;
    }

    /// Action probabilities (actors) or Q-values (DQN).
    pub fn evaluate(&self, obs: &Observation) -> Result<Vec<f64>> {
        Ok(self.net.forward(&self.params, &self.features.encode(obs))?.output)
    }
}

impl Policy for LearnedPolicy {
    fn kind(&self) -> PolicyKind {
        self.kind
    }

    fn act(&mut self, obs: &Observation) -> Result<Action> {
        let out = self.evaluate(obs)?;
        let i = match self.kind {
            PolicyKind::Dqn => argmax(&out),
            _ if self.greedy => argmax(&out),
            _ => sample_index(&out, &mut self.rng),
        };
        Action::from_index(i)
    }
}

pub(crate) fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// One row of a training curve.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveRow {
    pub episode: u64,
    pub steps: u64,
    pub mean_reward: f64,
    pub mean_time_s: f64,
    pub mean_energy: f64,
}

/// Collapses per-decision samples into one row per `interval` decisions.
#[derive(Debug, Clone)]
pub(crate) struct CurveRecorder {
    interval: u64,
    rows: Vec<CurveRow>,
    steps: u64,
    n: u64,
    reward: f64,
    time_s: f64,
    energy: f64,
}

impl CurveRecorder {
    pub(crate) fn new(interval: u64) -> Self {
        CurveRecorder { interval: interval.max(1), rows: Vec::new(), steps: 0, n: 0, reward: 0.0, time_s: 0.0, energy: 0.0 }
    }

    pub(crate) fn record(&mut self, episode: u64, reward: f64, time_s: f64, energy: f64) {
        self.steps += 1;
        self.n += 1;
        self.reward += reward;
        self.time_s += time_s;
        self.energy += energy;
        if self.n == self.interval {
            self.flush(episode);
        }
    }

    fn flush(&mut self, episode: u64) {
        if self.n == 0 {
            return;
        }
        let n = self.n as f64;
        self.rows.push(CurveRow {
            episode,
            steps: self.steps,
            mean_reward: self.reward / n,
            mean_time_s: self.time_s / n,
            mean_energy: self.energy / n,
        });
        self.n = 0;
        self.reward = 0.0;
        self.time_s = 0.0;
        self.energy = 0.0;
    }

    pub(crate) fn finish(mut self, episode: u64) -> Vec<CurveRow> {
        self.flush(episode);
        self.rows
    }
}

pub fn write_curve(path: &Path, rows: &[CurveRow]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["episode", "steps", "mean_reward", "mean_time_s", "mean_energy"])?;
    for r in rows {
        w.write_record([
            r.episode.to_string(),
            r.steps.to_string(),
            format!("{:?}", r.mean_reward),
            format!("{:?}", r.mean_time_s),
            format!("{:?}", r.mean_energy),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Result of a training run.
#[derive(Debug, Clone)]
pub struct Trained {
    pub kind: PolicyKind,
    /// Actor (A3C, A3CL) or online Q-network (DQN) weights.
    pub policy_params: Vec<f64>,
    pub critic_params: Option<Vec<f64>>,
    pub policy_spec: NetworkSpec,
    pub curve: Vec<CurveRow>,
    pub decisions: u64,
    pub episodes: u64,
    pub updates: u64,
}

impl Trained {
    pub fn save(&self, path: &Path) -> Result<()> {
        let net = Network::new(self.policy_spec.clone())?;
        nn::save_checkpoint(path, &format!("policy={} | {}", self.kind, self.policy_spec.describe()), net.shapes(), &self.policy_params)
    }

    pub fn policy(&self, sim: &SimParams, tp: &TrainParams, seed: u64) -> Result<LearnedPolicy> {
        let mut p = self.policy_params.clone();
        nn::quantize(&mut p);
        LearnedPolicy::new(self.kind, sim, tp, p, seed)
    }
}
