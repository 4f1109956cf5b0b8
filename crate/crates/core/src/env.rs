//! The offloading MDP for a single vehicle.
//!
//! Slot timeline: at the start of each slot the world advances (fading,
//! MEC capacity, position, task rate), that slot's arrivals join the queue
//! tail, and then, if the vehicle is idle, the head task is scheduled. A task
//! occupies whole slots until it finishes; the next decision happens at the
//! first slot after it. One MDP transition per scheduled task.
//!
//! The executing task stays in the queue (and counts toward occupancy) until
//! it completes, so a handover simply leaves it at the head.

use std::collections::VecDeque;
use std::io::Write;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use crate::channel::{kappa_from_mobility, large_scale_loss, FadingLink};
use crate::compute::{
    cloud_execute, cloud_execute_drained, local_execute, mec_execute, reward, scalarize, Action, CostBreakdown,
};
use crate::error::{Error, Result};
use crate::predict::Predictors;
use crate::scenario::{check_chain, rng_stream, sample_uniform, streams, CostWeights, QueueMode, SimParams, TaskSpec};

/// Slots run before the first decision so every history is full.
pub const WARMUP_SLOTS: u64 = 50;

/// Longest lookahead requested for one execution before giving up.
const MAX_LOOKAHEAD: usize = 1 << 16;

/// Idle slots allowed while waiting for an arrival before the episode is cut.
const MAX_IDLE_SLOTS: u64 = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObsMode {
    /// Histories and predictions (the digital-twin agent).
    Full,
    /// Current-slot values only (A3CL).
    Reduced,
}

pub const REDUCED_OBS_DIM: usize = 7;

pub fn observation_dim(sim: &SimParams, mode: ObsMode) -> usize {
    match mode {
        ObsMode::Full => 4 + 2 * sim.gain_history_len + sim.capacity_history_len + 3,
        ObsMode::Reduced => REDUCED_OBS_DIM,
    }
}

/// MDP state at a decision slot. Histories run oldest to newest.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub queue_mb: f64,
    pub battery: f64,
    pub task_data_mb: f64,
    pub task_cycles_gc: f64,
    pub mec_gains: Vec<f64>,
    pub cloud_gains: Vec<f64>,
    pub mec_capacities: Vec<f64>,
    /// MB per slot.
    pub predicted_mec_throughput: f64,
    /// MB per slot.
    pub predicted_cloud_throughput: f64,
    /// Tasks per slot.
    pub predicted_task_rate: f64,
}

impl Observation {
    /// Flat vector in the fixed order `q, rp, d, cr, G_m, G_c, F_m, T_m, T_c, U`
    /// (full) or `q, rp, d, cr, g_m, g_c, f_m` (reduced).
    pub fn to_vec(&self, mode: ObsMode) -> Vec<f64> {
        let head = [self.queue_mb, self.battery, self.task_data_mb, self.task_cycles_gc];
        match mode {
            ObsMode::Full => {
                let mut v = Vec::with_capacity(7 + self.mec_gains.len() * 2 + self.mec_capacities.len());
                v.extend_from_slice(&head);
                v.extend_from_slice(&self.mec_gains);
                v.extend_from_slice(&self.cloud_gains);
                v.extend_from_slice(&self.mec_capacities);
                v.extend_from_slice(&[
                    self.predicted_mec_throughput,
                    self.predicted_cloud_throughput,
                    self.predicted_task_rate,
                ]);
                v
            }
            ObsMode::Reduced => {
                let last = |h: &[f64]| h.last().copied().unwrap_or(0.0);
                let mut v = head.to_vec();
                v.extend_from_slice(&[last(&self.mec_gains), last(&self.cloud_gains), last(&self.mec_capacities)]);
                v
            }
        }
    }
}

/// FIFO task queue with a byte budget.
#[derive(Debug, Clone, PartialEq)]
pub struct QueueState {
    tasks: VecDeque<TaskSpec>,
    occupied_mb: f64,
    capacity_mb: f64,
}

impl QueueState {
    pub fn new(capacity_mb: f64) -> Self {
        QueueState { tasks: VecDeque::new(), occupied_mb: 0.0, capacity_mb }
    }

    /// Appends at the tail if it fits; returns whether the task was admitted.
    pub fn push_back(&mut self, task: TaskSpec) -> bool {
        if self.occupied_mb + task.data_mb > self.capacity_mb {
            return false;
        }
        self.occupied_mb += task.data_mb;
        self.tasks.push_back(task);
        true
    }

    pub fn pop_front(&mut self) -> Option<TaskSpec> {
        let t = self.tasks.pop_front()?;
        self.occupied_mb = if self.tasks.is_empty() { 0.0 } else { (self.occupied_mb - t.data_mb).max(0.0) };
        Some(t)
    }

    pub fn front(&self) -> Option<&TaskSpec> {
        self.tasks.front()
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn occupied_mb(&self) -> f64 {
        self.occupied_mb
    }

    pub fn capacity_mb(&self) -> f64 {
        self.capacity_mb
    }

    pub fn iter(&self) -> impl Iterator<Item = &TaskSpec> {
        self.tasks.iter()
    }
}

/// Markov-modulated task rate: `lambda` jumps along a row of the transition
/// matrix every `dwell_slots` slots and is held in between.
#[derive(Debug, Clone, PartialEq)]
pub struct RateChain {
    states: Vec<f64>,
    matrix: Vec<Vec<f64>>,
    dwell_slots: u64,
    index: usize,
    elapsed: u64,
}

impl RateChain {
    pub fn new(states: Vec<f64>, matrix: Vec<Vec<f64>>, dwell_slots: u64, initial: usize) -> Result<Self> {
        check_chain(&states, &matrix)?;
        if dwell_slots == 0 {
            return Err(Error::validation("rate chain dwell must be >= 1 slot"));
        }
        if initial >= states.len() {
            return Err(Error::validation(format!("initial state {initial} out of range")));
        }
        Ok(RateChain { states, matrix, dwell_slots, index: initial, elapsed: 0 })
    }

    pub fn lambda(&self) -> f64 {
        self.states[self.index]
    }

    pub fn state_index(&self) -> usize {
        self.index
    }

    pub fn states(&self) -> &[f64] {
        &self.states
    }

    /// Moves one slot forward and returns the rate in force for the new slot.
    pub fn advance<R: Rng + ?Sized>(&mut self, rng: &mut R) -> f64 {
        self.elapsed += 1;
        if self.elapsed >= self.dwell_slots {
            self.elapsed = 0;
            let u: f64 = rng.random();
            let row = &self.matrix[self.index];
            let mut acc = 0.0;
            let mut next = row.len() - 1;
            for (j, p) in row.iter().enumerate() {
                acc += p;
                if u < acc {
                    next = j;
                    break;
                }
            }
            // never land on a zero-probability state through rounding
            while row[next] == 0.0 && next > 0 {
                next -= 1;
            }
            self.index = next;
        }
        self.lambda()
    }
}

/// Poisson(lambda) arrivals for one slot, sizes drawn from the configured ranges.
pub fn generate_arrivals<R: Rng + ?Sized>(
    lambda: f64,
    sim: &SimParams,
    slot: u64,
    next_id: &mut u64,
    rng: &mut R,
) -> Result<Vec<TaskSpec>> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::usage(format!("arrival rate must be >= 0, got {lambda}")));
    }
    if lambda == 0.0 {
        return Ok(Vec::new());
    }
    let count = Poisson::new(lambda).map_err(|e| Error::usage(e.to_string()))?.sample(rng) as usize;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        out.push(draw_task(sim, slot, next_id, rng)?);
    }
    Ok(out)
}

fn draw_task<R: Rng + ?Sized>(sim: &SimParams, slot: u64, next_id: &mut u64, rng: &mut R) -> Result<TaskSpec> {
    let data_mb = sample_uniform(sim.task_size_range_mb, rng)?;
    let cycles_gc = sample_uniform(sim.task_cycles_range_gc, rng)?;
    let id = *next_id;
    *next_id += 1;
    Ok(TaskSpec { id, data_mb, cycles_gc, deadline_slots: sim.deadline_slots, arrival_slot: slot })
}

/// Distance from a road position to the RSU serving it. RSUs sit at segment
/// midpoints, `rsu_offset_m` off the road.
pub fn rsu_distance(position_m: f64, sim: &SimParams) -> f64 {
    let seg = (position_m / sim.rsu_spacing_m).floor();
    let along = position_m - (seg + 0.5) * sim.rsu_spacing_m;
    along.hypot(sim.rsu_offset_m)
}

/// Time in slots from `position_m` until the next coverage boundary.
pub fn slots_to_boundary(position_m: f64, sim: &SimParams) -> f64 {
    let step = sim.step_m();
    if step <= 0.0 {
        return f64::INFINITY;
    }
    let next = ((position_m / sim.rsu_spacing_m).floor() + 1.0) * sim.rsu_spacing_m;
    (next - position_m) / step
}

/// Everything exogenous about one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotState {
    pub slot: u64,
    pub position_m: f64,
    pub mec_gain: f64,
    pub cloud_gain: f64,
    /// MB per slot.
    pub mec_rate: f64,
    /// MB per slot.
    pub cloud_rate: f64,
    pub mec_capacity: f64,
    pub task_rate: f64,
    pub arrivals: Vec<TaskSpec>,
}

/// The exogenous processes. None of them depend on the agent's actions, so
/// the environment may generate slots ahead of the clock.
#[derive(Debug, Clone)]
pub struct World {
    sim: SimParams,
    arrivals: bool,
    mec: FadingLink,
    cloud: FadingLink,
    chain: RateChain,
    rng_mec: ChaCha8Rng,
    rng_cloud: ChaCha8Rng,
    rng_capacity: ChaCha8Rng,
    rng_arrivals: ChaCha8Rng,
    rng_chain: ChaCha8Rng,
    origin_m: f64,
    next_slot: u64,
    next_task_id: u64,
}

impl World {
    pub fn new(sim: &SimParams, seed: u64, arrivals: bool) -> Result<Self> {
        sim.validate()?;
        let kappa = kappa_from_mobility(sim.vehicle_speed_mps, sim.carrier_hz, sim.slot_duration_s)?;
        let mut rng_mec = rng_stream(seed, streams::MEC_FADING);
        let mut rng_cloud = rng_stream(seed, streams::CLOUD_FADING);
        let mut rng_chain = rng_stream(seed, streams::RATE_CHAIN);
        let mut rng_place = rng_stream(seed, streams::PLACEMENT);
        let origin_m = rng_place.random::<f64>() * sim.rsu_spacing_m;
        let mec = FadingLink::new(
            kappa,
            large_scale_loss(rsu_distance(origin_m, sim), sim.path_loss_exponent),
            sim.mec_bandwidth_hz,
            sim.noise_power_w(sim.mec_bandwidth_hz),
            &mut rng_mec,
        )?;
        let cloud = FadingLink::new(
            kappa,
            large_scale_loss(sim.cloud_distance_m, sim.path_loss_exponent),
            sim.cloud_bandwidth_hz,
            sim.noise_power_w(sim.cloud_bandwidth_hz),
            &mut rng_cloud,
        )?;
        let initial = rng_chain.random_range(0..sim.rate_states.len());
        let chain = RateChain::new(sim.rate_states.clone(), sim.rate_transitions.clone(), sim.rate_dwell_slots, initial)?;
        Ok(World {
            sim: sim.clone(),
            arrivals,
            mec,
            cloud,
            chain,
            rng_mec,
            rng_cloud,
            rng_capacity: rng_stream(seed, streams::MEC_CAPACITY),
            rng_arrivals: rng_stream(seed, streams::ARRIVALS),
            rng_chain,
            origin_m,
            next_slot: 0,
            next_task_id: 0,
        })
    }

    pub fn next_slot(&mut self) -> Result<SlotState> {
        let sim = &self.sim;
        let slot = self.next_slot;
        let position_m = self.origin_m + slot as f64 * sim.step_m();
        if slot > 0 {
            self.mec.step(&mut self.rng_mec);
            self.cloud.step(&mut self.rng_cloud);
            self.chain.advance(&mut self.rng_chain);
        }
        self.mec.large_scale = large_scale_loss(rsu_distance(position_m, sim), sim.path_loss_exponent);
        let mec_capacity = sample_uniform(sim.mec_capacity_range_gc_per_slot, &mut self.rng_capacity)?;
        let task_rate = if self.arrivals { self.chain.lambda() } else { 0.0 };
        let arrivals = generate_arrivals(task_rate, sim, slot, &mut self.next_task_id, &mut self.rng_arrivals)?;
        self.next_slot += 1;
        Ok(SlotState {
            slot,
            position_m,
            mec_gain: self.mec.gain(),
            cloud_gain: self.cloud.gain(),
            mec_rate: self.mec.rate_mb_per_slot(sim.tx_power_w, sim.slot_duration_s),
            cloud_rate: self.cloud.rate_mb_per_slot(sim.tx_power_w, sim.slot_duration_s),
            mec_capacity,
            task_rate,
            arrivals,
        })
    }

    /// Task drawn from the arrival stream outside the Poisson process (static fill).
    fn draw_task<R: Rng + ?Sized>(&mut self, slot: u64, rng: &mut R) -> Result<TaskSpec> {
        draw_task(&self.sim, slot, &mut self.next_task_id, rng)
    }
}

/// Per-episode running totals.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EpisodeStats {
    pub decisions: u64,
    pub completed: u64,
    pub action_counts: [u64; 3],
    pub retransmissions: u64,
    pub discarded_tasks: u64,
    pub discarded_mb: f64,
    /// Sum of scalar costs `C` over completed tasks.
    pub cost_sum: f64,
    /// Sum of `C + eta P_t + psi P_over` over completed tasks.
    pub penalized_sum: f64,
    pub reward_sum: f64,
    pub time_s_sum: f64,
    pub energy_sum: f64,
    pub slots: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepInfo {
    pub decision_slot: u64,
    pub action: Action,
    pub task: TaskSpec,
    pub cost: CostBreakdown,
    pub handover: bool,
    pub slots_elapsed: u64,
    pub dropped_tasks: u64,
    pub dropped_mb: f64,
    pub retransmissions: u64,
    /// Battery drawn by this step (also charged on a handover).
    pub energy_spent: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

struct Episode {
    world: World,
    lookahead: VecDeque<SlotState>,
    current: SlotState,
    mec_gains: VecDeque<f64>,
    cloud_gains: VecDeque<f64>,
    mec_rates: VecDeque<f64>,
    cloud_rates: VecDeque<f64>,
    capacities: VecDeque<f64>,
    task_rates: VecDeque<f64>,
    queue: QueueState,
    battery: f64,
    done: bool,
    pending_overflow_mb: f64,
    stats: EpisodeStats,
}

fn push_bounded(h: &mut VecDeque<f64>, v: f64, len: usize) {
    if h.len() == len {
        h.pop_front();
    }
    h.push_back(v);
}

impl Episode {
    fn peek(&mut self, i: usize) -> Result<&SlotState> {
        while self.lookahead.len() <= i {
            let s = self.world.next_slot()?;
            self.lookahead.push_back(s);
        }
        Ok(&self.lookahead[i])
    }

    /// Per-slot values from the current slot onwards, `len` entries.
    fn series(&mut self, len: usize, f: fn(&SlotState) -> f64) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(len);
        out.push(f(&self.current));
        for i in 0..len.saturating_sub(1) {
            out.push(f(self.peek(i)?));
        }
        Ok(out)
    }

    /// Makes the next slot current. Returns arrivals dropped for lack of space.
    fn advance(&mut self, sim: &SimParams) -> Result<(u64, f64)> {
        self.peek(0)?;
        let mut s = self.lookahead.pop_front().expect("lookahead filled");
        self.record(&s, sim);
        let (mut n, mut mb) = (0, 0.0);
        for task in std::mem::take(&mut s.arrivals) {
            let d = task.data_mb;
            if !self.queue.push_back(task) {
                n += 1;
                mb += d;
            }
        }
        self.current = s;
        self.stats.slots += 1;
        self.stats.discarded_tasks += n;
        self.stats.discarded_mb += mb;
        Ok((n, mb))
    }

    fn record(&mut self, s: &SlotState, sim: &SimParams) {
        push_bounded(&mut self.mec_gains, s.mec_gain, sim.gain_history_len);
        push_bounded(&mut self.cloud_gains, s.cloud_gain, sim.gain_history_len);
        push_bounded(&mut self.mec_rates, s.mec_rate, sim.gain_history_len);
        push_bounded(&mut self.cloud_rates, s.cloud_rate, sim.gain_history_len);
        push_bounded(&mut self.capacities, s.mec_capacity, sim.capacity_history_len);
        push_bounded(&mut self.task_rates, s.task_rate, sim.rate_history_len);
    }
}

/// Single-vehicle offloading environment.
pub struct Env {
    sim: SimParams,
    weights: CostWeights,
    predictors: Predictors,
    mode: ObsMode,
    episode: Option<Episode>,
    trace: Option<csv::Writer<Box<dyn Write + Send>>>,
}

impl Env {
    pub fn new(sim: SimParams, weights: CostWeights, predictors: Predictors, mode: ObsMode) -> Result<Self> {
        sim.validate()?;
        weights.validate()?;
        predictors.check(&sim)?;
        Ok(Env { sim, weights, predictors, mode, episode: None, trace: None })
    }

    pub fn sim(&self) -> &SimParams {
        &self.sim
    }

    pub fn weights(&self) -> &CostWeights {
        &self.weights
    }

    pub fn mode(&self) -> ObsMode {
        self.mode
    }

    pub fn observation_dim(&self) -> usize {
        observation_dim(&self.sim, self.mode)
    }

    /// Writes one CSV row per step to `out`.
    pub fn enable_trace(&mut self, out: Box<dyn Write + Send>) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "slot",
            "action",
            "reward",
            "time_slots",
            "energy",
            "rent",
            "deadline_overrun",
            "overflow_mb",
            "handover",
            "scalar_cost",
            "queue_mb",
            "battery",
        ])?;
        self.trace = Some(w);
        Ok(())
    }

    pub fn flush_trace(&mut self) -> Result<()> {
        if let Some(w) = self.trace.as_mut() {
            w.flush()?;
        }
        Ok(())
    }

    fn ep(&self) -> Result<&Episode> {
        self.episode.as_ref().ok_or_else(|| Error::usage("environment not reset"))
    }

    pub fn is_done(&self) -> bool {
        self.episode.as_ref().is_none_or(|e| e.done)
    }

    pub fn stats(&self) -> Result<&EpisodeStats> {
        Ok(&self.ep()?.stats)
    }

    pub fn queue(&self) -> Result<&QueueState> {
        Ok(&self.ep()?.queue)
    }

    pub fn battery(&self) -> Result<f64> {
        Ok(self.ep()?.battery)
    }

    pub fn current_slot(&self) -> Result<&SlotState> {
        Ok(&self.ep()?.current)
    }

    /// Time in slots until the vehicle leaves its current RSU.
    pub fn slots_to_boundary(&self) -> Result<f64> {
        Ok(slots_to_boundary(self.ep()?.current.position_m, &self.sim))
    }

    pub fn reset(&mut self, seed: u64) -> Result<Observation> {
        let sim = self.sim.clone();
        let dynamic = sim.queue_mode == QueueMode::Dynamic;
        let mut world = World::new(&sim, seed, dynamic)?;
        let first = world.next_slot()?;
        let mut ep = Episode {
            world,
            lookahead: VecDeque::new(),
            current: first.clone(),
            mec_gains: VecDeque::new(),
            cloud_gains: VecDeque::new(),
            mec_rates: VecDeque::new(),
            cloud_rates: VecDeque::new(),
            capacities: VecDeque::new(),
            task_rates: VecDeque::new(),
            queue: QueueState::new(sim.queue_capacity_mb),
            battery: sim.initial_battery,
            done: false,
            pending_overflow_mb: 0.0,
            stats: EpisodeStats::default(),
        };
        ep.record(&first, &sim);
        // warm-up arrivals are not queued
        for _ in 1..WARMUP_SLOTS {
            let s = ep.world.next_slot()?;
            ep.record(&s, &sim);
            ep.current = s;
        }
        if !dynamic {
            let mut rng = rng_stream(seed, streams::INITIAL_QUEUE);
            let target = sim.static_fill_fraction * sim.queue_capacity_mb;
            let slot = ep.current.slot;
            loop {
                let t = ep.world.draw_task(slot, &mut rng)?;
                if ep.queue.occupied_mb() + t.data_mb > target || !ep.queue.push_back(t) {
                    break;
                }
            }
        }
        self.episode = Some(ep);
        self.settle()?;
        self.observe()
    }

    /// After a decision: end the episode or wait for work.
    fn settle(&mut self) -> Result<()> {
        let sim = &self.sim;
        let ep = self.episode.as_mut().expect("episode present");
        if ep.battery <= 0.0 || ep.stats.decisions >= sim.episode_decisions {
            ep.done = true;
            return Ok(());
        }
        if ep.queue.is_empty() {
            if sim.queue_mode == QueueMode::Static {
                ep.done = true;
                return Ok(());
            }
            let mut idle = 0;
            while ep.queue.is_empty() {
                if idle >= MAX_IDLE_SLOTS {
                    ep.done = true;
                    return Ok(());
                }
                ep.advance(sim)?;
                idle += 1;
            }
        }
        Ok(())
    }

    pub fn observe(&self) -> Result<Observation> {
        let ep = self.ep()?;
        let sim = &self.sim;
        if ep.mec_gains.len() < sim.gain_history_len || ep.capacities.len() < sim.capacity_history_len {
            return Err(Error::usage("observation requested with cold histories"));
        }
        let (d, cr) = ep.queue.front().map_or((0.0, 0.0), |t| (t.data_mb, t.cycles_gc));
        let rates_m: Vec<f64> = ep.mec_rates.iter().copied().collect();
        let rates_c: Vec<f64> = ep.cloud_rates.iter().copied().collect();
        let task_rates: Vec<f64> = ep.task_rates.iter().copied().collect();
        let (pm, pc, pu) = match self.mode {
            ObsMode::Full => (
                self.predictors.mec.forecast_tail(&rates_m)?,
                self.predictors.cloud.forecast_tail(&rates_c)?,
                self.predictors.task_rate.forecast_tail(&task_rates)?,
            ),
            ObsMode::Reduced => (0.0, 0.0, 0.0),
        };
        Ok(Observation {
            queue_mb: ep.queue.occupied_mb(),
            battery: ep.battery,
            task_data_mb: d,
            task_cycles_gc: cr,
            mec_gains: ep.mec_gains.iter().copied().collect(),
            cloud_gains: ep.cloud_gains.iter().copied().collect(),
            mec_capacities: ep.capacities.iter().copied().collect(),
            predicted_mec_throughput: pm,
            predicted_cloud_throughput: pc,
            predicted_task_rate: pu,
        })
    }

    pub fn step_index(&mut self, action: usize) -> Result<Step> {
        self.step(Action::from_index(action)?)
    }

    pub fn step(&mut self, action: Action) -> Result<Step> {
        let sim = self.sim.clone();
        let weights = self.weights.clone();
        let ep = self.episode.as_mut().ok_or_else(|| Error::usage("environment not reset"))?;
        if ep.done {
            return Err(Error::usage("step called on a finished episode"));
        }
        let task = ep.queue.front().cloned().ok_or_else(|| Error::usage("no task to schedule"))?;
        let decision_slot = ep.current.slot;
        let whole = |x: f64| ((x - 1e-9).ceil() as u64).max(1);

        let (mut cost, slots, energy_spent) = match action {
            Action::Local => {
                let c = local_execute(&task, &sim, &weights);
                let n = whole(c.time_slots);
                let e = c.energy;
                (c, n, e)
            }
            Action::Mec => {
                let boundary = slots_to_boundary(ep.current.position_m, &sim);
                let mut len = 8;
                let out = loop {
                    let rates = ep.series(len, |s| s.mec_rate)?;
                    let caps = ep.series(len, |s| s.mec_capacity)?;
                    match mec_execute(&task, &rates, &caps, boundary, &sim, &weights) {
                        Err(Error::Unfinished { .. }) if len < MAX_LOOKAHEAD => len *= 2,
                        other => break other?,
                    }
                };
                if out.cost.handover {
                    let e = sim.tx_power_w * out.tx_time * sim.slot_duration_s;
                    (out.cost, whole(out.tx_time), e)
                } else {
                    let n = (out.tx_slots + out.compute_slots).max(1);
                    let e = out.cost.energy;
                    (out.cost, n, e)
                }
            }
            Action::Cloud => {
                let res = if sim.cloud_uses_drain {
                    let mut len = 8;
                    loop {
                        let rates = ep.series(len, |s| s.cloud_rate)?;
                        match cloud_execute_drained(&task, &rates, &sim, &weights) {
                            Err(Error::Unfinished { .. }) if len < MAX_LOOKAHEAD => len *= 2,
                            other => break other,
                        }
                    }
                } else {
                    cloud_execute(&task, ep.current.cloud_rate, decision_slot, &sim, &weights)
                };
                match res {
                    Ok(c) => {
                        let n = whole(c.time_slots);
                        let e = c.energy;
                        (c, n, e)
                    }
                    Err(Error::UnreachableCloud { .. }) => {
                        let dl = f64::from(task.deadline_slots);
                        let c = CostBreakdown {
                            time_slots: dl,
                            deadline_overrun: dl,
                            scalar_cost: scalarize(dl * sim.slot_duration_s, 0.0, 0.0, &weights),
                            ..Default::default()
                        };
                        (c, task.deadline_slots as u64, 0.0)
                    }
                    Err(e) => return Err(e),
                }
            }
        };

        let (mut dropped_tasks, mut dropped_mb) = (0, 0.0);
        for _ in 0..slots {
            let (n, mb) = ep.advance(&sim)?;
            dropped_tasks += n;
            dropped_mb += mb;
        }
        ep.battery = (ep.battery - energy_spent).max(0.0);

        let handover = cost.handover;
        if handover {
            ep.pending_overflow_mb += dropped_mb;
            ep.stats.retransmissions += 1;
        } else {
            cost.overflow_mb = dropped_mb + ep.pending_overflow_mb;
            ep.pending_overflow_mb = 0.0;
            ep.queue.pop_front();
            ep.stats.completed += 1;
            ep.stats.cost_sum += cost.scalar_cost;
            ep.stats.penalized_sum += cost.penalized(&weights);
            ep.stats.time_s_sum += cost.time_slots * sim.slot_duration_s;
        }
        let reward = reward(&cost, &weights, sim.handover_penalty);
        ep.stats.decisions += 1;
        ep.stats.action_counts[action.index()] += 1;
        ep.stats.reward_sum += reward;
        ep.stats.energy_sum += energy_spent;

        let info = StepInfo {
            decision_slot,
            action,
            task,
            cost,
            handover,
            slots_elapsed: slots,
            dropped_tasks,
            dropped_mb,
            retransmissions: ep.stats.retransmissions,
            energy_spent,
        };
        if let Some(w) = self.trace.as_mut() {
            let ep = self.episode.as_ref().expect("episode present");
            let c = &info.cost;
            w.write_record([
                decision_slot.to_string(),
                action.index().to_string(),
                format!("{reward:?}"),
                format!("{:?}", c.time_slots),
                format!("{:?}", c.energy),
                format!("{:?}", c.rent),
                format!("{:?}", c.deadline_overrun),
                format!("{:?}", c.overflow_mb),
                c.handover.to_string(),
                format!("{:?}", c.scalar_cost),
                format!("{:?}", ep.queue.occupied_mb()),
                format!("{:?}", ep.battery),
            ])?;
        }
        self.settle()?;
        let done = self.is_done();
        Ok(Step { observation: self.observe()?, reward, done, info })
    }
}
