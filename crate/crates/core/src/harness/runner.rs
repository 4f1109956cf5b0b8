use std::collections::BTreeSet;
use std::fs::OpenOptions;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::mpsc;

use crate::agents::{train_a3c, train_dqn, write_curve, Baseline, LearnedPolicy, Policy, PolicyKind, Trained};
use crate::env::Env;
use crate::error::{Error, Result};
use crate::harness::metrics::{aggregate, read_metrics, write_metrics, write_summary, MetricRow, METRIC_COLUMNS};
use crate::harness::{ExperimentSpec, GridCell, Sweep};
use crate::predict::Predictors;
use crate::scenario::{derive_seed, Config};

/// Mixed into evaluation seeds so evaluation episodes never coincide with
/// training episodes.
pub const EVAL_SEED_TAG: u64 = 0xE7A1;

/// Totals over a batch of evaluation episodes.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalSummary {
    pub episodes: u64,
    pub decisions: u64,
    pub completed: u64,
    pub action_counts: [u64; 3],
    pub retransmissions: u64,
    pub discarded_tasks: u64,
    pub reward_sum: f64,
    pub penalized_sum: f64,
    pub time_s_sum: f64,
    pub energy_sum: f64,
}

impl EvalSummary {
    /// Average cost per completed task, consistent with the reward: the
    /// penalised cost of every completed task plus `F / upsilon` for every
    /// handover.
    pub fn avg_cost(&self, upsilon: f64) -> f64 {
        if self.completed == 0 {
            return 0.0;
        }
        -self.reward_sum / (upsilon * self.completed as f64)
    }

    pub fn offload_fractions(&self) -> [f64; 3] {
        if self.decisions == 0 {
            return [0.0; 3];
        }
        let n = self.decisions as f64;
        let [l, m, _] = self.action_counts.map(|c| c as f64 / n);
        // the last share absorbs rounding so the three sum to one
        [l, m, 1.0 - l - m]
    }

    pub fn to_row(&self, cfg: &Config, policy: PolicyKind, sweep: &str, value: &str, seed: u64) -> MetricRow {
        let per_task = |x: f64| if self.completed == 0 { 0.0 } else { x / self.completed as f64 };
        let per_ep = |x: u64| if self.episodes == 0 { 0.0 } else { x as f64 / self.episodes as f64 };
        MetricRow {
            policy: policy.name().to_string(),
            sweep: sweep.to_string(),
            sweep_value: value.to_string(),
            seed,
            avg_cost: self.avg_cost(cfg.weights.upsilon),
            avg_time_s: per_task(self.time_s_sum),
            avg_energy: per_task(self.energy_sum),
            offload_fractions: self.offload_fractions(),
            retransmitted_per_episode: per_ep(self.retransmissions),
            discarded_per_episode: per_ep(self.discarded_tasks),
            episodes: self.episodes,
            decisions: self.decisions,
        }
    }
}

/// Runs `episodes` evaluation episodes of `policy`.
pub fn evaluate(cfg: &Config, predictors: &Predictors, policy: &mut dyn Policy, seed: u64, episodes: u64) -> Result<EvalSummary> {
    let mut env = Env::new(cfg.sim.clone(), cfg.weights.clone(), predictors.clone(), policy.obs_mode())?;
    let base = derive_seed(seed, EVAL_SEED_TAG);
    let mut out = EvalSummary::default();
    for e in 0..episodes {
        let mut obs = env.reset(derive_seed(base, e))?;
        while !env.is_done() {
            let a = policy.act(&obs)?;
            obs = env.step(a)?.observation;
        }
        let s = env.stats()?;
        out.episodes += 1;
        out.decisions += s.decisions;
        out.completed += s.completed;
        for i in 0..3 {
            out.action_counts[i] += s.action_counts[i];
        }
        out.retransmissions += s.retransmissions;
        out.discarded_tasks += s.discarded_tasks;
        out.reward_sum += s.reward_sum;
        out.penalized_sum += s.penalized_sum;
        out.time_s_sum += s.time_s_sum;
        out.energy_sum += s.energy_sum;
    }
    Ok(out)
}

/// Oracle forecasters, or the pretrained ones from `dir` when the config asks
/// for them.
pub fn load_predictors(cfg: &Config, dir: Option<&Path>) -> Result<Predictors> {
    if !cfg.predict.use_trained {
        return Ok(Predictors::oracle(&cfg.sim));
    }
    let dir = dir.ok_or_else(|| Error::usage("use_trained is set but no predictor directory was given"))?;
    let p = Predictors::load_dir(dir, &cfg.predict, &cfg.sim)?;
    p.check(&cfg.sim)?;
    Ok(p)
}

pub fn train_policy(cfg: &Config, kind: PolicyKind, predictors: &Predictors, seed: u64, deterministic: bool) -> Result<Trained> {
    match kind {
        PolicyKind::A3c | PolicyKind::A3cl => train_a3c(cfg, kind, predictors, seed, deterministic),
        PolicyKind::Dqn => train_dqn(cfg, predictors, seed),
        other => Err(Error::usage(format!("{other} is not trainable"))),
    }
}

/// `<dir>/<policy>/ckpt/<sweep>_<cell>-seed<k>.ckpt`
pub fn checkpoint_path(dir: &Path, kind: PolicyKind, sweep: Sweep, cell: &GridCell, seed: u64) -> PathBuf {
    dir.join(kind.name()).join("ckpt").join(format!("{}_{}-seed{seed}.ckpt", sweep.name(), cell.slug()))
}

/// Output files of one experiment under `<out>/<name>/`.
#[derive(Debug, Clone)]
pub struct ExperimentLayout {
    pub root: PathBuf,
    pub checkpoints: PathBuf,
}

impl ExperimentLayout {
    pub fn new(spec: &ExperimentSpec, out_dir: &Path) -> Self {
        let root = out_dir.join(&spec.name);
        let checkpoints = spec.checkpoints.clone().unwrap_or_else(|| root.clone());
        ExperimentLayout { root, checkpoints }
    }

    pub fn seed_csv(&self, kind: PolicyKind, seed: u64) -> PathBuf {
        self.root.join(kind.name()).join(format!("seed{seed}.csv"))
    }

    pub fn metrics(&self) -> PathBuf {
        self.root.join("metrics.csv")
    }

    pub fn summary(&self) -> PathBuf {
        self.root.join("summary.csv")
    }

    pub fn checkpoint(&self, kind: PolicyKind, sweep: Sweep, cell: &GridCell, seed: u64) -> PathBuf {
        checkpoint_path(&self.checkpoints, kind, sweep, cell, seed)
    }
}

struct Job {
    kind: PolicyKind,
    cell: usize,
    seed: u64,
}

fn run_cell(
    spec: &ExperimentSpec,
    layout: &ExperimentLayout,
    base: &Config,
    job: &Job,
    deterministic: bool,
) -> Result<MetricRow> {
    let (sweep, cell) = spec.cells()[job.cell];
    let cfg = spec.cell_config(base, sweep, cell)?;
    let predictors = load_predictors(&cfg, spec.predictors.as_deref())?;
    let eval_seed = derive_seed(job.seed, EVAL_SEED_TAG);
    let mut policy: Box<dyn Policy> = if job.kind.is_learned() {
        let path = layout.checkpoint(job.kind, sweep, cell, job.seed);
        if !path.exists() && spec.train_missing {
            log::info!("{}: training {} on {} seed {}", spec.name, job.kind, cell.label, job.seed);
            let t = train_policy(&cfg, job.kind, &predictors, job.seed, deterministic)?;
            t.save(&path)?;
            write_curve(&path.with_extension("curve.csv"), &t.curve)?;
        }
        Box::new(LearnedPolicy::load(job.kind, &cfg.sim, &cfg.train, &path, eval_seed)?)
    } else {
        Box::new(Baseline::new(job.kind, eval_seed)?)
    };
    let s = evaluate(&cfg, &predictors, policy.as_mut(), job.seed, spec.eval_episodes)?;
    Ok(s.to_row(&cfg, job.kind, sweep.name(), &cell.label, job.seed))
}

fn append_row(path: &Path, row: &MetricRow) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let fresh = !path.exists() || std::fs::metadata(path)?.len() == 0;
    let file = OpenOptions::new().create(true).append(true).open(path)?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    if fresh {
        w.write_record(METRIC_COLUMNS)?;
    }
    w.write_record(row.record())?;
    w.flush()?;
    Ok(())
}

/// Runs every (policy, grid cell, seed) of `spec` not already present in
/// its per-seed CSV, then rewrites the per-seed files in canonical order and
/// emits `metrics.csv` and `summary.csv`.
///
/// Cells run on `jobs` threads; rows reach disk through a single writer as
/// they complete, so an aborted run keeps every finished cell.
pub fn run_experiment(
    spec: &ExperimentSpec,
    base: &Config,
    out_dir: &Path,
    jobs: usize,
    deterministic: bool,
) -> Result<Vec<MetricRow>> {
    spec.validate()?;
    let layout = ExperimentLayout::new(spec, out_dir);
    std::fs::create_dir_all(&layout.root)?;

    for &kind in &spec.policies {
        if kind.is_learned() && !spec.train_missing {
            for (sweep, cell) in spec.cells() {
                for &seed in &spec.seeds {
                    let path = layout.checkpoint(kind, sweep, cell, seed);
                    if !path.exists() {
                        return Err(Error::MissingCheckpoint { policy: kind.name().to_string(), path });
                    }
                }
            }
        }
    }

    let mut todo = Vec::new();
    for &kind in &spec.policies {
        for &seed in &spec.seeds {
            let path = layout.seed_csv(kind, seed);
            let done: BTreeSet<(String, String)> = if path.exists() {
                read_metrics(&path)?.into_iter().map(|r| (r.sweep, r.sweep_value)).collect()
            } else {
                BTreeSet::new()
            };
            for (i, (sweep, cell)) in spec.cells().into_iter().enumerate() {
                if !done.contains(&(sweep.name().to_string(), cell.label.clone())) {
                    todo.push(Job { kind, cell: i, seed });
                }
            }
        }
    }
    let total = todo.len();
    log::info!("{}: {} cells to run", spec.name, total);

    let next = AtomicUsize::new(0);
    let abort = AtomicBool::new(false);
    let (tx, rx) = mpsc::channel::<(usize, Result<MetricRow>)>();
    let mut first_err: Option<Error> = None;
    std::thread::scope(|scope| {
        for _ in 0..jobs.max(1).min(total.max(1)) {
            let tx = tx.clone();
            let (next, abort, todo, layout) = (&next, &abort, &todo, &layout);
            scope.spawn(move || loop {
                if abort.load(Ordering::SeqCst) {
                    return;
                }
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= todo.len() {
                    return;
                }
                let res = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| {
                    run_cell(spec, layout, base, &todo[i], deterministic)
                }))
                .unwrap_or_else(|_| Err(Error::Worker("cell panicked".into())));
                if tx.send((i, res)).is_err() {
                    return;
                }
            });
        }
        drop(tx);
        let mut finished = 0;
        for (i, res) in rx {
            let job = &todo[i];
            match res.and_then(|row| append_row(&layout.seed_csv(job.kind, job.seed), &row)) {
                Ok(()) => {
                    finished += 1;
                    log::info!("{}: {}/{} {} {} seed {}", spec.name, finished, total, job.kind, spec.cells()[job.cell].1.label, job.seed);
                }
                Err(e) => {
                    abort.store(true, Ordering::SeqCst);
                    if first_err.is_none() {
                        first_err = Some(e);
                    }
                }
            }
        }
    });
    if let Some(e) = first_err {
        return Err(e);
    }

    let cells = spec.cells();
    let position = |r: &MetricRow| cells.iter().position(|(w, c)| w.name() == r.sweep && c.label == r.sweep_value);
    let mut rows = Vec::new();
    for &kind in &spec.policies {
        for &seed in &spec.seeds {
            let path = layout.seed_csv(kind, seed);
            let mut mine: Vec<MetricRow> = read_metrics(&path)?
                .into_iter()
                .filter(|r| position(r).is_some())
                .collect();
            mine.sort_by_key(|r| position(r));
            mine.dedup_by(|a, b| a.sweep == b.sweep && a.sweep_value == b.sweep_value);
            write_metrics(&path, &mine)?;
            rows.extend(mine);
        }
    }
    write_metrics(&layout.metrics(), &rows)?;
    write_summary(&layout.summary(), &aggregate(&rows))?;
    Ok(rows)
}
