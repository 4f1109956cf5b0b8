//! Configuration, units and seeded randomness shared by every other module.
//!
//! Internal units: data in megabytes, cycles in Gigacycles, time in slots.
//! Seconds only appear when costs are scalarized or reported.
//!
//! The config file is plain text with one `key = value` per line and `#`
//! comments. Unset keys keep their defaults. See `docs/config.md` for the
//! full key list.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Closed interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        let iv = Interval { lo, hi };
        iv.check("interval")?;
        Ok(iv)
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }

    pub fn mean(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    fn check(&self, name: &str) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite()) || self.lo > self.hi {
            return Err(Error::validation(format!(
                "{name}: inverted or non-finite interval [{}, {}]",
                self.lo, self.hi
            )));
        }
        Ok(())
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.lo, self.hi)
    }
}

/// Draws uniformly from `range`. Uses `lo + u * (hi - lo)` so that two ranges
/// driven by the same stream stay ordered draw by draw.
pub fn sample_uniform<R: Rng + ?Sized>(range: Interval, rng: &mut R) -> Result<f64> {
    range.check("sample_uniform")?;
    let u: f64 = rng.random();
    Ok(range.lo + u * (range.hi - range.lo))
}

/// Seeded generator for one named stream. Identical `(seed, stream)` pairs
/// replay identical draws.
pub fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// SplitMix64 mix of a base seed with an index; used for per-episode and
/// per-worker seeds.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(0x632B_E59B_D9B4_E019);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream ids. Each stochastic process owns its own stream so that changing
/// one process (say MEC capacity) leaves the draws of the others untouched.
pub mod streams {
    pub const MEC_FADING: u64 = 1;
    pub const CLOUD_FADING: u64 = 2;
    pub const MEC_CAPACITY: u64 = 3;
    pub const ARRIVALS: u64 = 4;
    pub const RATE_CHAIN: u64 = 5;
    pub const INITIAL_QUEUE: u64 = 6;
    pub const PLACEMENT: u64 = 7;
    pub const POLICY: u64 = 8;
    pub const INIT_WEIGHTS: u64 = 9;
    pub const REPLAY: u64 = 10;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QueueMode {
    /// Pre-filled queue, no arrivals; the episode ends when the queue drains.
    Static,
    /// Empty queue, Poisson arrivals with Markov-modulated rate.
    Dynamic,
}

impl FromStr for QueueMode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "static" => Ok(QueueMode::Static),
            "dynamic" => Ok(QueueMode::Dynamic),
            other => Err(format!("expected `static` or `dynamic`, got `{other}`")),
        }
    }
}

impl fmt::Display for QueueMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            QueueMode::Static => "static",
            QueueMode::Dynamic => "dynamic",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimParams {
    pub slot_duration_s: f64,
    pub rsu_spacing_m: f64,
    pub vehicle_speed_mps: f64,
    pub queue_capacity_mb: f64,
    pub deadline_slots: u32,
    pub task_size_range_mb: Interval,
    pub task_cycles_range_gc: Interval,
    pub tx_power_w: f64,
    pub carrier_hz: f64,
    pub mec_bandwidth_hz: f64,
    pub cloud_bandwidth_hz: f64,
    pub noise_power_dbm: f64,
    /// Read `noise_power_dbm` as dBm/Hz and multiply by the link bandwidth.
    pub noise_is_density: bool,
    pub local_capacity_gc_per_slot: f64,
    pub cloud_capacity_gc_per_slot: f64,
    pub mec_capacity_range_gc_per_slot: Interval,
    pub rent_compute_coeff: f64,
    pub rent_price_exponent: f64,
    /// Priced per MB.
    pub rent_transfer_coeff: f64,
    pub switched_capacitance: f64,
    pub power_exponent: f64,
    pub gain_history_len: usize,
    pub capacity_history_len: usize,
    pub rate_history_len: usize,
    pub prediction_horizon_slots: usize,
    pub initial_battery: f64,
    pub handover_penalty: f64,
    pub path_loss_exponent: f64,
    pub cloud_distance_m: f64,
    /// Perpendicular distance between the road and each RSU (RSUs sit at segment midpoints).
    pub rsu_offset_m: f64,
    /// Drain cloud uploads over per-slot rates instead of the single decision-slot rate.
    pub cloud_uses_drain: bool,
    pub queue_mode: QueueMode,
    /// Fraction of queue capacity filled at reset in static mode.
    pub static_fill_fraction: f64,
    /// Decisions per episode before the episode is cut.
    pub episode_decisions: u64,
    pub rate_states: Vec<f64>,
    /// Row-stochastic transition matrix over `rate_states`.
    pub rate_transitions: Vec<Vec<f64>>,
    pub rate_dwell_slots: u64,
}

impl Default for SimParams {
    fn default() -> Self {
        let third = 1.0 / 3.0;
        SimParams {
            slot_duration_s: 0.2,
            rsu_spacing_m: 50.0,
            vehicle_speed_mps: 10.0,
            queue_capacity_mb: 1000.0,
            deadline_slots: 20,
            task_size_range_mb: Interval { lo: 0.1, hi: 2.5 },
            task_cycles_range_gc: Interval { lo: 1.0, hi: 10.0 },
            tx_power_w: 1.25,
            carrier_hz: 2e9,
            mec_bandwidth_hz: 10e6,
            cloud_bandwidth_hz: 5e6,
            noise_power_dbm: -114.0,
            noise_is_density: false,
            local_capacity_gc_per_slot: 2.0,
            cloud_capacity_gc_per_slot: 20.0,
            mec_capacity_range_gc_per_slot: Interval { lo: 2.0, hi: 10.0 },
            rent_compute_coeff: 3.0,
            rent_price_exponent: 1.0,
            rent_transfer_coeff: 1.0,
            switched_capacitance: 1.0,
            power_exponent: 3.0,
            gain_history_len: 50,
            capacity_history_len: 5,
            rate_history_len: 5,
            prediction_horizon_slots: 10,
            initial_battery: 10_000.0,
            handover_penalty: 1.0,
            path_loss_exponent: 2.0,
            cloud_distance_m: 500.0,
            rsu_offset_m: 5.0,
            cloud_uses_drain: false,
            queue_mode: QueueMode::Dynamic,
            static_fill_fraction: 0.5,
            episode_decisions: 500,
            rate_states: vec![0.1, 0.5, 0.7, 0.9],
            rate_transitions: vec![
                vec![0.0, 1.0, 0.0, 0.0],
                vec![third, 0.0, third, third],
                vec![0.0, 1.0, 0.0, 0.0],
                vec![0.0, 1.0, 0.0, 0.0],
            ],
            rate_dwell_slots: 20,
        }
    }
}

impl SimParams {
    /// Noise power in watts for a link of the given bandwidth.
    pub fn noise_power_w(&self, bandwidth_hz: f64) -> f64 {
        let w = 10f64.powf(self.noise_power_dbm / 10.0) * 1e-3;
        if self.noise_is_density {
            w * bandwidth_hz
        } else {
            w
        }
    }

    /// Local CPU power per slot, `zeta * f^tau` with `f` in Gc/slot.
    pub fn local_power(&self) -> f64 {
        self.switched_capacitance * self.local_capacity_gc_per_slot.powf(self.power_exponent)
    }

    /// Metres travelled per slot.
    pub fn step_m(&self) -> f64 {
        self.vehicle_speed_mps * self.slot_duration_s
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("slot_duration_s", self.slot_duration_s),
            ("rsu_spacing_m", self.rsu_spacing_m),
            ("queue_capacity_mb", self.queue_capacity_mb),
            ("tx_power_w", self.tx_power_w),
            ("carrier_hz", self.carrier_hz),
            ("mec_bandwidth_hz", self.mec_bandwidth_hz),
            ("cloud_bandwidth_hz", self.cloud_bandwidth_hz),
            ("local_capacity_gc_per_slot", self.local_capacity_gc_per_slot),
            ("cloud_capacity_gc_per_slot", self.cloud_capacity_gc_per_slot),
            ("switched_capacitance", self.switched_capacitance),
            ("power_exponent", self.power_exponent),
            ("initial_battery", self.initial_battery),
            ("path_loss_exponent", self.path_loss_exponent),
            ("cloud_distance_m", self.cloud_distance_m),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::validation(format!("{name} must be > 0, got {v}")));
            }
        }
        let non_negative = [
            ("vehicle_speed_mps", self.vehicle_speed_mps),
            ("rent_compute_coeff", self.rent_compute_coeff),
            ("rent_transfer_coeff", self.rent_transfer_coeff),
            ("handover_penalty", self.handover_penalty),
            ("rsu_offset_m", self.rsu_offset_m),
        ];
        for (name, v) in non_negative {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::validation(format!("{name} must be >= 0, got {v}")));
            }
        }
        if self.rent_price_exponent < 1.0 {
            return Err(Error::validation("rent_price_exponent must be >= 1"));
        }
        if !self.noise_power_dbm.is_finite() {
            return Err(Error::validation("noise_power_dbm must be finite"));
        }
        if self.deadline_slots == 0 {
            return Err(Error::validation("deadline_slots must be > 0"));
        }
        self.task_size_range_mb.check("task_size_range_mb")?;
        self.task_cycles_range_gc.check("task_cycles_range_gc")?;
        self.mec_capacity_range_gc_per_slot.check("mec_capacity_range_gc_per_slot")?;
        if self.task_size_range_mb.lo <= 0.0 || self.task_cycles_range_gc.lo < 0.0 {
            return Err(Error::validation("task ranges must be positive"));
        }
        if self.mec_capacity_range_gc_per_slot.lo < 0.0 {
            return Err(Error::validation("mec capacity range must be >= 0"));
        }
        for (name, v) in [
            ("gain_history_len", self.gain_history_len),
            ("capacity_history_len", self.capacity_history_len),
            ("rate_history_len", self.rate_history_len),
            ("prediction_horizon_slots", self.prediction_horizon_slots),
        ] {
            if v == 0 {
                return Err(Error::validation(format!("{name} must be >= 1")));
            }
        }
        if !(0.0..=1.0).contains(&self.static_fill_fraction) {
            return Err(Error::validation("static_fill_fraction must lie in [0, 1]"));
        }
        if self.episode_decisions == 0 {
            return Err(Error::validation("episode_decisions must be >= 1"));
        }
        if self.rate_dwell_slots == 0 {
            return Err(Error::validation("rate_dwell_slots must be >= 1"));
        }
        check_chain(&self.rate_states, &self.rate_transitions)
    }
}

pub(crate) fn check_chain(states: &[f64], matrix: &[Vec<f64>]) -> Result<()> {
    if states.is_empty() {
        return Err(Error::validation("rate chain needs at least one state"));
    }
    if states.iter().any(|&l| !(l.is_finite() && l >= 0.0)) {
        return Err(Error::validation("rate states must be finite and >= 0"));
    }
    if matrix.len() != states.len() {
        return Err(Error::validation(format!(
            "transition matrix has {} rows for {} states",
            matrix.len(),
            states.len()
        )));
    }
    for (i, row) in matrix.iter().enumerate() {
        if row.len() != states.len() {
            return Err(Error::validation(format!("transition row {i} has {} entries", row.len())));
        }
        if row.iter().any(|&p| !(p.is_finite() && p >= 0.0)) {
            return Err(Error::validation(format!("transition row {i} has a negative entry")));
        }
        let s: f64 = row.iter().sum();
        if (s - 1.0).abs() > 1e-6 {
            return Err(Error::validation(format!("transition row {i} sums to {s}, not 1")));
        }
    }
    Ok(())
}

/// Scalarization weights and reward shaping coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct CostWeights {
    pub xi_time: f64,
    pub xi_energy: f64,
    pub xi_rent: f64,
    /// Deadline-overrun penalty coefficient.
    pub eta: f64,
    /// Queue-overflow penalty coefficient.
    pub psi: f64,
    /// Reward scale.
    pub upsilon: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        CostWeights { xi_time: 0.4, xi_energy: 0.4, xi_rent: 0.2, eta: 5.0, psi: 5.0, upsilon: 0.005 }
    }
}

impl CostWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.xi_time, self.xi_energy, self.xi_rent, self.eta, self.psi, self.upsilon];
        if all.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::validation("cost weights must be finite and >= 0"));
        }
        let sum = self.xi_time + self.xi_energy + self.xi_rent;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::validation(format!("xi sum ≠ 1 (xi_time + xi_energy + xi_rent = {sum})")));
        }
        if self.upsilon <= 0.0 {
            return Err(Error::validation("upsilon must be > 0"));
        }
        Ok(())
    }
}

/// Trainer hyperparameters (A3C, A3CL and DQN).
#[derive(Debug, Clone, PartialEq)]
pub struct TrainParams {
    pub lr_actor: f64,
    pub lr_critic: f64,
    pub entropy_weight: f64,
    pub gamma: f64,
    pub workers: usize,
    pub rollout_len: usize,
    pub total_decisions: u64,
    pub actor_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    pub rmsprop_decay: f64,
    pub rmsprop_eps: f64,
    /// Decisions summarised by each training-curve row.
    pub curve_interval: u64,
    /// Evaluate learned policies by argmax instead of sampling.
    pub greedy_eval: bool,
    pub dqn_lr: f64,
    pub dqn_hidden: Vec<usize>,
    pub dqn_buffer: usize,
    pub dqn_batch: usize,
    pub dqn_target_sync: u64,
    pub dqn_train_start: u64,
    pub dqn_eps_start: f64,
    pub dqn_eps_end: f64,
    /// Fraction of the decision budget over which epsilon decays linearly.
    pub dqn_eps_decay_fraction: f64,
    /// Environment steps between minibatch updates.
    pub dqn_train_every: u64,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams {
            lr_actor: 1e-5,
            lr_critic: 1e-5,
            entropy_weight: 0.01,
            gamma: 0.9,
            workers: 8,
            rollout_len: 20,
            total_decisions: 200_000,
            actor_hidden: vec![256, 128],
            critic_hidden: vec![256, 128],
            rmsprop_decay: 0.99,
            rmsprop_eps: 1e-8,
            curve_interval: 1,
            greedy_eval: true,
            dqn_lr: 1e-5,
            dqn_hidden: vec![256, 128],
            dqn_buffer: 100_000,
            dqn_batch: 32,
            dqn_target_sync: 1000,
            dqn_train_start: 1000,
            dqn_eps_start: 1.0,
            dqn_eps_end: 0.05,
            dqn_eps_decay_fraction: 0.5,
            dqn_train_every: 4,
        }
    }
}

impl TrainParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::validation("gamma must lie in [0, 1]"));
        }
        if self.workers == 0 {
            return Err(Error::validation("workers must be >= 1"));
        }
        if self.rollout_len == 0 {
            return Err(Error::validation("rollout_len must be >= 1"));
        }
        if self.curve_interval == 0 {
            return Err(Error::validation("curve_interval must be >= 1"));
        }
        if self.dqn_target_sync == 0 {
            return Err(Error::validation("dqn_target_sync must be >= 1 (period 0 disallowed)"));
        }
        if self.dqn_train_every == 0 {
            return Err(Error::validation("dqn_train_every must be >= 1"));
        }
        if self.dqn_buffer == 0 || self.dqn_batch == 0 {
            return Err(Error::validation("dqn_buffer and dqn_batch must be >= 1"));
        }
        for (name, widths) in
            [("actor_hidden", &self.actor_hidden), ("critic_hidden", &self.critic_hidden), ("dqn_hidden", &self.dqn_hidden)]
        {
            if widths.iter().any(|&w| w == 0) {
                return Err(Error::validation(format!("{name}: widths must be > 0")));
            }
        }
        for (name, v) in [("lr_actor", self.lr_actor), ("lr_critic", self.lr_critic), ("dqn_lr", self.dqn_lr)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::validation(format!("{name} must be > 0")));
            }
        }
        if !(0.0..=1.0).contains(&self.dqn_eps_start) || !(0.0..=1.0).contains(&self.dqn_eps_end) {
            return Err(Error::validation("dqn epsilons must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Predictor architecture and pretraining knobs.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictParams {
    pub throughput_rnn: usize,
    pub throughput_dense: Vec<usize>,
    pub rate_rnn: usize,
    pub rate_dense: Vec<usize>,
    pub pretrain_trace_slots: usize,
    pub pretrain_epochs: usize,
    pub pretrain_lr: f64,
    pub pretrain_batch: usize,
    pub holdout_fraction: f64,
    /// Use trained predictors in the environment; otherwise the window-mean oracle.
    pub use_trained: bool,
}

impl Default for PredictParams {
    fn default() -> Self {
        PredictParams {
            throughput_rnn: 256,
            throughput_dense: vec![512, 256],
            rate_rnn: 128,
            rate_dense: vec![512],
            pretrain_trace_slots: 100_000,
            pretrain_epochs: 3,
            pretrain_lr: 1e-3,
            pretrain_batch: 32,
            holdout_fraction: 0.2,
            use_trained: false,
        }
    }
}

impl PredictParams {
    pub fn validate(&self) -> Result<()> {
        if self.throughput_rnn == 0 || self.rate_rnn == 0 {
            return Err(Error::validation("predictor recurrent widths must be > 0"));
        }
        if self.throughput_dense.iter().chain(&self.rate_dense).any(|&w| w == 0) {
            return Err(Error::validation("predictor dense widths must be > 0"));
        }
        if !(self.holdout_fraction > 0.0 && self.holdout_fraction < 1.0) {
            return Err(Error::validation("holdout_fraction must lie in (0, 1)"));
        }
        if self.pretrain_batch == 0 {
            return Err(Error::validation("pretrain_batch must be >= 1"));
        }
        Ok(())
    }
}

/// Everything a run needs. Immutable after load.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Config {
    pub sim: SimParams,
    pub weights: CostWeights,
    pub train: TrainParams,
    pub predict: PredictParams,
}

trait ConfigValue: Sized {
    fn parse_value(s: &str) -> std::result::Result<Self, String>;
    fn format_value(&self) -> String;
}

impl ConfigValue for f64 {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        s.parse::<f64>().map_err(|e| format!("`{s}`: {e}"))
    }
    fn format_value(&self) -> String {
        format!("{self:?}")
    }
}

macro_rules! int_value {
    ($($t:ty),*) => {$(
        impl ConfigValue for $t {
            fn parse_value(s: &str) -> std::result::Result<Self, String> {
                s.replace('_', "").parse::<$t>().map_err(|e| format!("`{s}`: {e}"))
            }
            fn format_value(&self) -> String {
                self.to_string()
            }
        }
    )*};
}
int_value!(u32, u64, usize);

impl ConfigValue for bool {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        match s {
            "true" | "1" | "yes" => Ok(true),
            "false" | "0" | "no" => Ok(false),
            _ => Err(format!("expected a boolean, got `{s}`")),
        }
    }
    fn format_value(&self) -> String {
        self.to_string()
    }
}

impl ConfigValue for QueueMode {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        s.parse()
    }
    fn format_value(&self) -> String {
        self.to_string()
    }
}

fn bracketed(s: &str) -> std::result::Result<&str, String> {
    s.strip_prefix('[')
        .and_then(|r| r.strip_suffix(']'))
        .ok_or_else(|| format!("expected a bracketed list, got `{s}`"))
}

fn parse_list<T: ConfigValue>(s: &str) -> std::result::Result<Vec<T>, String> {
    let inner = bracketed(s)?.trim();
    if inner.is_empty() {
        return Ok(Vec::new());
    }
    inner.split(',').map(|x| T::parse_value(x.trim())).collect()
}

fn format_list<T: ConfigValue>(v: &[T]) -> String {
    let parts: Vec<String> = v.iter().map(ConfigValue::format_value).collect();
    format!("[{}]", parts.join(", "))
}

impl ConfigValue for Interval {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        let v: Vec<f64> = parse_list(s)?;
        match v.as_slice() {
            [lo, hi] => Ok(Interval { lo: *lo, hi: *hi }),
            _ => Err(format!("interval needs exactly two numbers, got `{s}`")),
        }
    }
    fn format_value(&self) -> String {
        format!("[{:?}, {:?}]", self.lo, self.hi)
    }
}

impl ConfigValue for Vec<f64> {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        parse_list(s)
    }
    fn format_value(&self) -> String {
        format_list(self)
    }
}

impl ConfigValue for Vec<usize> {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        parse_list(s)
    }
    fn format_value(&self) -> String {
        format_list(self)
    }
}

/// Matrices are written row by row, rows separated by `;`: `[0, 1; 1, 0]`.
impl ConfigValue for Vec<Vec<f64>> {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        let inner = bracketed(s)?;
        inner
            .split(';')
            .map(|row| row.split(',').map(|x| f64::parse_value(x.trim())).collect())
            .collect()
    }
    fn format_value(&self) -> String {
        let rows: Vec<String> =
            self.iter().map(|r| r.iter().map(ConfigValue::format_value).collect::<Vec<_>>().join(", ")).collect();
        format!("[{}]", rows.join("; "))
    }
}

macro_rules! config_keys {
    ($($section:ident . $field:ident),* $(,)?) => {
        const KEYS: &[&str] = &[$(stringify!($field)),*];

        fn set_key(cfg: &mut Config, key: &str, value: &str) -> std::result::Result<(), String> {
            match key {
                $(stringify!($field) => {
                    cfg.$section.$field = ConfigValue::parse_value(value)?;
                    Ok(())
                })*
                _ => Err(format!("unknown key `{key}`")),
            }
        }

        fn write_keys(cfg: &Config, out: &mut String) {
            $(
                out.push_str(stringify!($field));
                out.push_str(" = ");
                out.push_str(&ConfigValue::format_value(&cfg.$section.$field));
                out.push('\n');
            )*
        }
    };
}

config_keys!(
    sim.slot_duration_s,
    sim.rsu_spacing_m,
    sim.vehicle_speed_mps,
    sim.queue_capacity_mb,
    sim.deadline_slots,
    sim.task_size_range_mb,
    sim.task_cycles_range_gc,
    sim.tx_power_w,
    sim.carrier_hz,
    sim.mec_bandwidth_hz,
    sim.cloud_bandwidth_hz,
    sim.noise_power_dbm,
    sim.noise_is_density,
    sim.local_capacity_gc_per_slot,
    sim.cloud_capacity_gc_per_slot,
    sim.mec_capacity_range_gc_per_slot,
    sim.rent_compute_coeff,
    sim.rent_price_exponent,
    sim.rent_transfer_coeff,
    sim.switched_capacitance,
    sim.power_exponent,
    sim.gain_history_len,
    sim.capacity_history_len,
    sim.rate_history_len,
    sim.prediction_horizon_slots,
    sim.initial_battery,
    sim.handover_penalty,
    sim.path_loss_exponent,
    sim.cloud_distance_m,
    sim.rsu_offset_m,
    sim.cloud_uses_drain,
    sim.queue_mode,
    sim.static_fill_fraction,
    sim.episode_decisions,
    sim.rate_states,
    sim.rate_transitions,
    sim.rate_dwell_slots,
    weights.xi_time,
    weights.xi_energy,
    weights.xi_rent,
    weights.eta,
    weights.psi,
    weights.upsilon,
    train.lr_actor,
    train.lr_critic,
    train.entropy_weight,
    train.gamma,
    train.workers,
    train.rollout_len,
    train.total_decisions,
    train.actor_hidden,
    train.critic_hidden,
    train.rmsprop_decay,
    train.rmsprop_eps,
    train.curve_interval,
    train.greedy_eval,
    train.dqn_lr,
    train.dqn_hidden,
    train.dqn_buffer,
    train.dqn_batch,
    train.dqn_target_sync,
    train.dqn_train_start,
    train.dqn_eps_start,
    train.dqn_eps_end,
    train.dqn_eps_decay_fraction,
    train.dqn_train_every,
    predict.throughput_rnn,
    predict.throughput_dense,
    predict.rate_rnn,
    predict.rate_dense,
    predict.pretrain_trace_slots,
    predict.pretrain_epochs,
    predict.pretrain_lr,
    predict.pretrain_batch,
    predict.holdout_fraction,
    predict.use_trained,
);

impl Config {
    pub fn validate(&self) -> Result<()> {
        self.sim.validate()?;
        self.weights.validate()?;
        self.train.validate()?;
        self.predict.validate()
    }

    /// Every recognised config key, in file order.
    pub fn keys() -> &'static [&'static str] {
        KEYS
    }

    /// Sets one key from its textual value, without validating the whole config.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        set_key(self, key.trim(), value.trim()).map_err(Error::validation)
    }

    /// Applies `key = value` lines on top of the current values.
    pub fn apply_str(&mut self, text: &str) -> Result<()> {
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Parse { line: idx + 1, msg: format!("expected `key = value`, got `{line}`") });
            };
            set_key(self, key.trim(), value.trim()).map_err(|msg| Error::Parse { line: idx + 1, msg })?;
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Config> {
        let mut cfg = Config::default();
        cfg.apply_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Full key-value dump; `Config::parse(&c.to_config_string())` reproduces `c`.
    pub fn to_config_string(&self) -> String {
        let mut out = String::new();
        write_keys(self, &mut out);
        out
    }
}

pub fn load_config(path: &Path) -> Result<Config> {
    let text = std::fs::read_to_string(path)?;
    Config::parse(&text)
}

/// One computing task. Sizes in MB, cycles in Gigacycles.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskSpec {
    pub id: u64,
    pub data_mb: f64,
    pub cycles_gc: f64,
    pub deadline_slots: u32,
    pub arrival_slot: u64,
}
