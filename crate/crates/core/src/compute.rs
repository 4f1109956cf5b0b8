//! Per-task execution cost under local, MEC and cloud execution.
//!
//! Times are in slots here. Scalarization converts to seconds so the weighted
//! cost matches the reporting unit.

use crate::error::{Error, Result};
use crate::scenario::{CostWeights, SimParams, TaskSpec};

/// Offloading action. The discriminants are the MDP action indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Action {
    Local = 0,
    Mec = 1,
    Cloud = 2,
}

impl Action {
    pub const ALL: [Action; 3] = [Action::Local, Action::Mec, Action::Cloud];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Result<Action> {
        Action::ALL.get(i).copied().ok_or_else(|| Error::usage(format!("action {i} outside {{0, 1, 2}}")))
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CostBreakdown {
    /// Service time in slots (real-valued for local and cloud).
    pub time_slots: f64,
    pub energy: f64,
    pub rent: f64,
    /// Slots beyond the task deadline.
    pub deadline_overrun: f64,
    /// MB of arrivals dropped while this task was being served.
    pub overflow_mb: f64,
    pub handover: bool,
    pub scalar_cost: f64,
}

impl CostBreakdown {
    fn finish(mut self, task: &TaskSpec, weights: &CostWeights, slot_s: f64) -> Self {
        self.deadline_overrun = (self.time_slots - f64::from(task.deadline_slots)).max(0.0);
        self.scalar_cost = scalarize(self.time_slots * slot_s, self.energy, self.rent, weights);
        self
    }

    /// `C + eta * P_t + psi * P_over`, the bracket of the non-handover reward.
    pub fn penalized(&self, weights: &CostWeights) -> f64 {
        self.scalar_cost + weights.eta * self.deadline_overrun + weights.psi * self.overflow_mb
    }

    fn handover() -> Self {
        CostBreakdown { handover: true, ..Default::default() }
    }
}

/// Step reward: `-F` on a handover, else `-upsilon (C + eta P_t + psi P_over)`.
pub fn reward(cost: &CostBreakdown, weights: &CostWeights, handover_penalty: f64) -> f64 {
    if cost.handover {
        -handover_penalty
    } else {
        -weights.upsilon * cost.penalized(weights)
    }
}

/// `xi1 * t + xi2 * e + xi3 * rc` with `t` in seconds.
pub fn scalarize(time_s: f64, energy: f64, rent: f64, weights: &CostWeights) -> f64 {
    weights.xi_time * time_s + weights.xi_energy * energy + weights.xi_rent * rent
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExecutionTrace {
    pub start_slot: u64,
    pub end_slot: u64,
    /// Remaining amount at each slot boundary, starting with the initial amount.
    pub remaining_series: Vec<f64>,
}

impl ExecutionTrace {
    pub fn duration(&self) -> u64 {
        self.end_slot - self.start_slot
    }
}

/// The supply series ran out before the amount was drained.
#[derive(Debug, Clone, PartialEq)]
pub struct Unfinished {
    pub remaining: f64,
    pub slots_used: u64,
    pub trace: ExecutionTrace,
}

/// Iterates `x <- max(x - supply, 0)` slot by slot until nothing remains.
/// `supply` is already expressed per slot (rate times slot length).
pub fn drain(initial: f64, supply: &[f64], start_slot: u64) -> std::result::Result<ExecutionTrace, Unfinished> {
    let mut remaining = initial.max(0.0);
    let mut series = vec![remaining];
    let mut slot = start_slot;
    for &s in supply {
        if remaining <= 0.0 {
            break;
        }
        remaining = (remaining - s.max(0.0)).max(0.0);
        series.push(remaining);
        slot += 1;
    }
    let trace = ExecutionTrace { start_slot, end_slot: slot, remaining_series: series };
    if remaining > 0.0 {
        Err(Unfinished { remaining, slots_used: slot - start_slot, trace })
    } else {
        Ok(trace)
    }
}

pub fn local_execute(task: &TaskSpec, sim: &SimParams, weights: &CostWeights) -> CostBreakdown {
    let time_slots = task.cycles_gc / sim.local_capacity_gc_per_slot;
    CostBreakdown { time_slots, energy: sim.local_power() * time_slots, ..Default::default() }
        .finish(task, weights, sim.slot_duration_s)
}

/// Result of an MEC offload, with the slot counts the scheduler needs.
#[derive(Debug, Clone, PartialEq)]
pub struct MecOutcome {
    pub cost: CostBreakdown,
    pub tx_slots: u64,
    pub compute_slots: u64,
    /// Upload completion time in slots, counted continuously inside the last slot.
    pub tx_time: f64,
}

/// Upload over `rate_series` (MB per slot, indexed from the decision slot),
/// then compute over `capacity_series` (Gc per slot, same indexing).
///
/// `boundary_offset` is the time in slots, measured from the start of the
/// decision slot, at which the vehicle leaves the current RSU. An upload whose
/// continuous completion time lies beyond it is a handover; the outcome then
/// carries no cost and `tx_time` is the time spent before the link dropped.
pub fn mec_execute(
    task: &TaskSpec,
    rate_series: &[f64],
    capacity_series: &[f64],
    boundary_offset: f64,
    sim: &SimParams,
    weights: &CostWeights,
) -> Result<MecOutcome> {
    let up = drain(task.data_mb, rate_series, 0)
        .map_err(|u| Error::Unfinished { remaining: u.remaining, slots: u.slots_used })?;
    let tx = up.duration();
    let tx_time = match tx {
        0 => 0.0,
        n => {
            let last = (n - 1) as usize;
            last as f64 + up.remaining_series[last] / rate_series[last]
        }
    };
    if tx_time > boundary_offset {
        let cut = boundary_offset.max(0.0);
        return Ok(MecOutcome { cost: CostBreakdown::handover(), tx_slots: cut.ceil() as u64, compute_slots: 0, tx_time: cut });
    }
    let supply = capacity_series.get(tx as usize..).unwrap_or(&[]);
    let compute = drain(task.cycles_gc, supply, tx)
        .map_err(|u| Error::Unfinished { remaining: u.remaining, slots: tx + u.slots_used })?;
    let compute_slots = compute.duration();
    let cost = CostBreakdown {
        time_slots: (tx + compute_slots) as f64,
        energy: sim.tx_power_w * tx as f64 * sim.slot_duration_s,
        ..Default::default()
    }
    .finish(task, weights, sim.slot_duration_s);
    Ok(MecOutcome { cost, tx_slots: tx, compute_slots, tx_time })
}

fn cloud_cost(task: &TaskSpec, tx_slots: f64, sim: &SimParams, weights: &CostWeights) -> CostBreakdown {
    let compute_slots = task.cycles_gc / sim.cloud_capacity_gc_per_slot;
    let rent = sim.rent_transfer_coeff * task.data_mb
        + sim.rent_compute_coeff * task.cycles_gc.powf(sim.rent_price_exponent);
    CostBreakdown {
        time_slots: tx_slots + compute_slots,
        energy: sim.tx_power_w * tx_slots * sim.slot_duration_s,
        rent,
        ..Default::default()
    }
    .finish(task, weights, sim.slot_duration_s)
}

/// Cloud execution with the upload priced at the decision-slot rate
/// (`d / rate_now`, MB per slot).
pub fn cloud_execute(
    task: &TaskSpec,
    rate_now: f64,
    decision_slot: u64,
    sim: &SimParams,
    weights: &CostWeights,
) -> Result<CostBreakdown> {
    if !(rate_now > 0.0) {
        return Err(Error::UnreachableCloud { slot: decision_slot });
    }
    Ok(cloud_cost(task, task.data_mb / rate_now, sim, weights))
}

/// Cloud execution with the upload drained over per-slot rates.
pub fn cloud_execute_drained(
    task: &TaskSpec,
    rate_series: &[f64],
    sim: &SimParams,
    weights: &CostWeights,
) -> Result<CostBreakdown> {
    let tx = drain(task.data_mb, rate_series, 0)
        .map_err(|u| Error::Unfinished { remaining: u.remaining, slots: u.slots_used })?;
    Ok(cloud_cost(task, tx.duration() as f64, sim, weights))
}
