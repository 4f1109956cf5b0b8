//! Forecasts the digital twin feeds into the observation: mean MEC and cloud
//! throughput over the next few slots, and the next-slot task rate.
//!
//! Trained forecasters are small Elman networks fitted on a simulated trace
//! and then frozen. The window mean is both the test baseline and the
//! default when no trained checkpoint is supplied.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;

use crate::env::World;
use crate::error::{Error, Result};
use crate::nn::{self, Activation, Head, Network, NetworkSpec, RmsProp};
use crate::scenario::{rng_stream, streams, PredictParams, SimParams};

pub trait Forecaster: Send + Sync + fmt::Debug {
    fn window_len(&self) -> usize;

    fn predict(&self, window: &[f64]) -> Result<f64>;

    /// Forecast from the most recent `window_len` entries of `history`.
    fn forecast_tail(&self, history: &[f64]) -> Result<f64> {
        let w = self.window_len();
        if history.len() < w {
            return Err(Error::usage(format!("history has {} entries, forecaster needs {w}", history.len())));
        }
        self.predict(&history[history.len() - w..])
    }
}

/// Persistence baseline: the mean of the window.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowMean {
    pub len: usize,
}

pub fn oracle_predict(window: &[f64]) -> Result<f64> {
    if window.is_empty() {
        return Err(Error::usage("oracle_predict needs a nonempty window"));
    }
    Ok(window.iter().sum::<f64>() / window.len() as f64)
}

impl Forecaster for WindowMean {
    fn window_len(&self) -> usize {
        self.len
    }

    fn predict(&self, window: &[f64]) -> Result<f64> {
        if window.len() != self.len {
            return Err(Error::usage(format!("window has {} entries, expected {}", window.len(), self.len)));
        }
        oracle_predict(window)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredictorKind {
    MecThroughput,
    CloudThroughput,
    TaskRate,
}

impl PredictorKind {
    pub const ALL: [PredictorKind; 3] =
        [PredictorKind::MecThroughput, PredictorKind::CloudThroughput, PredictorKind::TaskRate];

    pub fn name(self) -> &'static str {
        match self {
            PredictorKind::MecThroughput => "mec",
            PredictorKind::CloudThroughput => "cloud",
            PredictorKind::TaskRate => "task_rate",
        }
    }

    pub fn window(self, sim: &SimParams) -> usize {
        match self {
            PredictorKind::TaskRate => sim.rate_history_len,
            _ => sim.gain_history_len,
        }
    }

    pub fn horizon(self, sim: &SimParams) -> usize {
        match self {
            PredictorKind::TaskRate => 1,
            _ => sim.prediction_horizon_slots,
        }
    }

    pub fn spec(self, pp: &PredictParams, sim: &SimParams) -> NetworkSpec {
        let (rnn, dense) = match self {
            PredictorKind::TaskRate => (pp.rate_rnn, pp.rate_dense.clone()),
            _ => (pp.throughput_rnn, pp.throughput_dense.clone()),
        };
        NetworkSpec {
            input_dim: self.window(sim),
            hidden: dense,
            activation: Activation::Sigmoid,
            head: Head::Linear(1),
            recurrent: Some(rnn),
        }
    }

    fn clamps(self) -> bool {
        !matches!(self, PredictorKind::TaskRate)
    }
}

/// Standardisation constants for inputs and targets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scaling {
    pub in_mean: f64,
    pub in_std: f64,
    pub out_mean: f64,
    pub out_std: f64,
}

/// A frozen recurrent forecaster.
#[derive(Debug, Clone)]
pub struct RnnForecaster {
    pub kind: PredictorKind,
    net: Network,
    params: Vec<f64>,
    scaling: Scaling,
}

impl RnnForecaster {
    pub fn new(kind: PredictorKind, net: Network, mut params: Vec<f64>, scaling: Scaling) -> Result<Self> {
        if params.len() != net.param_count() {
            return Err(Error::usage("forecaster parameters do not match the network"));
        }
        nn::quantize(&mut params);
        Ok(RnnForecaster { kind, net, params, scaling })
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn scaling(&self) -> Scaling {
        self.scaling
    }

    fn meta(&self) -> String {
        let s = self.scaling;
        format!(
            "kind={} in_mean={:?} in_std={:?} out_mean={:?} out_std={:?} | {}",
            self.kind.name(),
            s.in_mean,
            s.in_std,
            s.out_mean,
            s.out_std,
            self.net.spec().describe()
        )
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        nn::save_checkpoint(path, &self.meta(), self.net.shapes(), &self.params)
    }

    pub fn load(path: &Path, kind: PredictorKind, pp: &PredictParams, sim: &SimParams) -> Result<Self> {
        let net = Network::new(kind.spec(pp, sim))?;
        let ck = nn::load_checkpoint(path)?;
        if ck.shapes != net.shapes() {
            return Err(Error::Checkpoint {
                path: path.to_path_buf(),
                msg: format!("shape table does not match {}", net.spec().describe()),
            });
        }
        let field = |key: &str| -> Result<f64> {
            ck.meta
                .split_whitespace()
                .find_map(|kv| kv.strip_prefix(key).and_then(|v| v.strip_prefix('=')))
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::Checkpoint { path: path.to_path_buf(), msg: format!("metadata lacks {key}") })
        };
        let scaling =
            Scaling { in_mean: field("in_mean")?, in_std: field("in_std")?, out_mean: field("out_mean")?, out_std: field("out_std")? };
        RnnForecaster::new(kind, net, ck.params, scaling)
    }

    fn normalised(&self, window: &[f64]) -> Vec<f64> {
        window.iter().map(|&x| (x - self.scaling.in_mean) / self.scaling.in_std).collect()
    }
}

impl Forecaster for RnnForecaster {
    fn window_len(&self) -> usize {
        self.net.spec().input_dim
    }

    fn predict(&self, window: &[f64]) -> Result<f64> {
        if window.len() != self.window_len() {
            return Err(Error::usage(format!("window has {} entries, expected {}", window.len(), self.window_len())));
        }
        let f = self.net.forward(&self.params, &self.normalised(window))?;
        let y = f.output[0] * self.scaling.out_std + self.scaling.out_mean;
        Ok(if self.kind.clamps() { y.max(0.0) } else { y })
    }
}

/// The three forecasters an environment uses.
#[derive(Debug, Clone)]
pub struct Predictors {
    pub mec: Arc<dyn Forecaster>,
    pub cloud: Arc<dyn Forecaster>,
    pub task_rate: Arc<dyn Forecaster>,
}

impl Predictors {
    /// Window means over the full histories.
    pub fn oracle(sim: &SimParams) -> Self {
        Predictors {
            mec: Arc::new(WindowMean { len: sim.gain_history_len }),
            cloud: Arc::new(WindowMean { len: sim.gain_history_len }),
            task_rate: Arc::new(WindowMean { len: sim.rate_history_len }),
        }
    }

    /// Loads `mec.ckpt`, `cloud.ckpt` and `task_rate.ckpt` from `dir`.
    pub fn load_dir(dir: &Path, pp: &PredictParams, sim: &SimParams) -> Result<Self> {
        let load = |kind: PredictorKind| -> Result<Arc<dyn Forecaster>> {
            let path = dir.join(format!("{}.ckpt", kind.name()));
            if !path.exists() {
                return Err(Error::MissingCheckpoint { policy: format!("predictor {}", kind.name()), path });
            }
            Ok(Arc::new(RnnForecaster::load(&path, kind, pp, sim)?))
        };
        Ok(Predictors {
            mec: load(PredictorKind::MecThroughput)?,
            cloud: load(PredictorKind::CloudThroughput)?,
            task_rate: load(PredictorKind::TaskRate)?,
        })
    }

    pub fn check(&self, sim: &SimParams) -> Result<()> {
        if self.mec.window_len() > sim.gain_history_len
            || self.cloud.window_len() > sim.gain_history_len
            || self.task_rate.window_len() > sim.rate_history_len
        {
            return Err(Error::validation("forecaster window longer than the kept history"));
        }
        Ok(())
    }
}

/// Per-slot series a predictor is trained on.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    pub mec_rate: Vec<f64>,
    pub cloud_rate: Vec<f64>,
    pub task_rate: Vec<f64>,
}

impl Trace {
    pub fn series(&self, kind: PredictorKind) -> &[f64] {
        match kind {
            PredictorKind::MecThroughput => &self.mec_rate,
            PredictorKind::CloudThroughput => &self.cloud_rate,
            PredictorKind::TaskRate => &self.task_rate,
        }
    }
}

/// Runs the exogenous world for `slots` slots (arrivals on, so the task
/// rate chain is active).
pub fn simulate_trace(sim: &SimParams, seed: u64, slots: usize) -> Result<Trace> {
    let mut world = World::new(sim, seed, true)?;
    let mut t = Trace {
        mec_rate: Vec::with_capacity(slots),
        cloud_rate: Vec::with_capacity(slots),
        task_rate: Vec::with_capacity(slots),
    };
    for _ in 0..slots {
        let s = world.next_slot()?;
        t.mec_rate.push(s.mec_rate);
        t.cloud_rate.push(s.cloud_rate);
        t.task_rate.push(s.task_rate);
    }
    Ok(t)
}

/// Sliding windows ending at slot `t` paired with the mean of the next
/// `horizon` values.
pub fn make_dataset(series: &[f64], window: usize, horizon: usize) -> Result<Vec<(Vec<f64>, f64)>> {
    if window == 0 || horizon == 0 {
        return Err(Error::validation("window and horizon must be >= 1"));
    }
    if series.len() < window + horizon {
        return Err(Error::validation(format!(
            "trace of {} slots is shorter than window {window} + horizon {horizon}",
            series.len()
        )));
    }
    Ok((window..=series.len() - horizon)
        .map(|end| {
            let target = series[end..end + horizon].iter().sum::<f64>() / horizon as f64;
            (series[end - window..end].to_vec(), target)
        })
        .collect())
}

/// `1 - mean(|pred - true| / true)`, skipping zero targets.
pub fn mean_relative_accuracy(pairs: impl IntoIterator<Item = (f64, f64)>) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for (p, t) in pairs {
        if t != 0.0 {
            sum += (p - t).abs() / t.abs();
            n += 1;
        }
    }
    if n == 0 {
        1.0
    } else {
        1.0 - sum / n as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyReport {
    pub kind: PredictorKind,
    pub train_samples: usize,
    pub holdout_samples: usize,
    pub accuracy: f64,
    pub oracle_accuracy: f64,
    pub final_train_mse: f64,
}

fn mean_std(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = xs.clone().count().max(1) as f64;
    let mean = xs.clone().sum::<f64>() / n;
    let var = xs.map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt().max(1e-9))
}

/// Fits a forecaster on `series` and evaluates it on the chronologically
/// last `holdout_fraction` of the windows.
pub fn pretrain(
    kind: PredictorKind,
    series: &[f64],
    sim: &SimParams,
    pp: &PredictParams,
    seed: u64,
) -> Result<(RnnForecaster, AccuracyReport)> {
    pp.validate()?;
    let window = kind.window(sim);
    let horizon = kind.horizon(sim);
    let data = make_dataset(series, window, horizon)?;
    let split = ((1.0 - pp.holdout_fraction) * data.len() as f64).floor() as usize;
    // skip `window + horizon` samples so no holdout target sits inside a training window
    let gap = (window + horizon).min(data.len() - split);
    let (train, holdout) = (&data[..split], &data[split + gap..]);
    if train.is_empty() || holdout.is_empty() {
        return Err(Error::validation("trace too short for a train/holdout split"));
    }
    let (in_mean, in_std) = mean_std(train.iter().flat_map(|(w, _)| w.iter().copied()));
    let (out_mean, out_std) = mean_std(train.iter().map(|(_, t)| *t));
    let scaling = Scaling { in_mean, in_std, out_mean, out_std };

    let net = Network::new(kind.spec(pp, sim))?;
    let mut init_rng = rng_stream(seed, streams::INIT_WEIGHTS);
    let mut params = net.init_params(&mut init_rng);
    let mut accum = vec![0.0; params.len()];
    let mut grad = vec![0.0; params.len()];
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut shuffle_rng = rng_stream(seed, streams::REPLAY);
    let norm = |w: &[f64]| -> Vec<f64> { w.iter().map(|&x| (x - in_mean) / in_std).collect() };
    let mut last_mse = f64::NAN;
    for _ in 0..pp.pretrain_epochs {
        order.shuffle(&mut shuffle_rng);
        let (mut sse, mut n) = (0.0, 0usize);
        for batch in order.chunks(pp.pretrain_batch) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            for &i in batch {
                let (w, t) = &train[i];
                let f = net.forward(&params, &norm(w))?;
                let err = f.output[0] - (t - out_mean) / out_std;
                sse += err * err;
                n += 1;
                net.backward(&params, &f, &[2.0 * err / batch.len() as f64], &mut grad)?;
            }
            nn::optimizer_step(&mut params, &mut accum, &grad, pp.pretrain_lr, RmsProp::default())?;
        }
        last_mse = sse / n.max(1) as f64;
    }
    let model = RnnForecaster::new(kind, net, params, scaling)?;
    let mut preds = Vec::with_capacity(holdout.len());
    for (w, t) in holdout {
        preds.push((model.predict(w)?, *t));
    }
    let accuracy = mean_relative_accuracy(preds);
    let oracle_accuracy = mean_relative_accuracy(holdout.iter().map(|(w, t)| (oracle_predict(w).unwrap_or(0.0), *t)));
    let report = AccuracyReport {
        kind,
        train_samples: train.len(),
        holdout_samples: holdout.len(),
        accuracy,
        oracle_accuracy,
        final_train_mse: last_mse,
    };
    Ok((model, report))
}
