//! `twin-offload` command line.

use std::ffi::OsString;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::agents::{write_curve, Baseline, LearnedPolicy, Policy, PolicyKind};
use crate::env::Env;
use crate::error::{Error, Result};
use crate::harness::{aggregate_file, evaluate, load_predictors, run_experiment, train_policy, write_metrics, ExperimentSpec};
use crate::predict::{pretrain, simulate_trace, PredictorKind};
use crate::scenario::{derive_seed, load_config, Config, QueueMode};

#[derive(Debug, Parser)]
#[command(name = "twin-offload", version, about = "Digital-twin assisted task offloading simulator and trainers")]
struct Cli {
    /// Config file of `key = value` lines; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// Overrides the training worker count.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Run training workers round-robin on one thread (bit-reproducible).
    #[arg(long, global = true)]
    deterministic: bool,
    /// Directory of pretrained predictor checkpoints (used with `use_trained = true`).
    #[arg(long, global = true)]
    predictors: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Trainable {
    A3c,
    A3cl,
    Dqn,
}

impl From<Trainable> for PolicyKind {
    fn from(t: Trainable) -> Self {
        match t {
            Trainable::A3c => PolicyKind::A3c,
            Trainable::A3cl => PolicyKind::A3cl,
            Trainable::Dqn => PolicyKind::Dqn,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Pretrain the three forecasters on a simulated trace.
    Pretrain,
    /// Train a learned policy; writes a checkpoint and a training curve.
    Train {
        #[arg(value_enum)]
        algorithm: Trainable,
    },
    /// Evaluate one policy and print its metric row.
    Eval {
        #[arg(long)]
        policy: PolicyKind,
        #[arg(long, default_value_t = 10)]
        episodes: u64,
        /// Checkpoint for learned policies (default: the `train` output path).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        mode: Option<String>,
    },
    /// Run an experiment spec: every policy x grid cell x seed.
    Sweep {
        spec: PathBuf,
        /// Cells evaluated concurrently.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Summarise a metrics CSV (median and IQR over seeds).
    Aggregate { input: PathBuf, output: PathBuf },
    /// Run one episode and write the per-step trace CSV.
    Trace {
        #[arg(long)]
        policy: PolicyKind,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code: 0 success, 1 usage, 2 runtime failure.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Usage(_) | Error::Parse { .. } | Error::Validation(_) => 1,
                _ => 2,
            }
        }
    }
}

fn base_config(cli: &Cli) -> Result<Config> {
    let mut cfg = match &cli.config {
        Some(p) => load_config(p)?,
        None => Config::default(),
    };
    if let Some(w) = cli.workers {
        cfg.train.workers = w;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn train_paths(out: &Path, kind: PolicyKind, seed: u64) -> (PathBuf, PathBuf) {
    let dir = out.join("train").join(kind.name());
    (dir.join(format!("seed{seed}.ckpt")), dir.join(format!("seed{seed}.curve.csv")))
}

fn make_policy(cli: &Cli, cfg: &Config, kind: PolicyKind, checkpoint: Option<&Path>) -> Result<Box<dyn Policy>> {
    let seed = derive_seed(cli.seed, crate::harness::EVAL_SEED_TAG);
    Ok(if kind.is_learned() {
        let default = train_paths(&cli.out_dir, kind, cli.seed).0;
        let path = checkpoint.map(Path::to_path_buf).unwrap_or(default);
        Box::new(LearnedPolicy::load(kind, &cfg.sim, &cfg.train, &path, seed)?)
    } else {
        Box::new(Baseline::new(kind, seed)?)
    })
}

fn execute(cli: Cli) -> Result<()> {
    let mut cfg = base_config(&cli)?;
    match &cli.command {
        Command::Pretrain => {
            let dir = cli.out_dir.join("predictors");
            std::fs::create_dir_all(&dir)?;
            let trace = simulate_trace(&cfg.sim, cli.seed, cfg.predict.pretrain_trace_slots)?;
            let mut w = csv::Writer::from_path(dir.join("accuracy.csv"))?;
            w.write_record(["predictor", "train_samples", "holdout_samples", "accuracy", "oracle_accuracy", "final_train_mse"])?;
            for kind in PredictorKind::ALL {
                let (f, r) = pretrain(kind, trace.series(kind), &cfg.sim, &cfg.predict, cli.seed)?;
                f.save(&dir.join(format!("{}.ckpt", kind.name())))?;
                println!("{}: accuracy {:.4} (window mean {:.4})", kind.name(), r.accuracy, r.oracle_accuracy);
                w.write_record([
                    kind.name().to_string(),
                    r.train_samples.to_string(),
                    r.holdout_samples.to_string(),
                    format!("{:?}", r.accuracy),
                    format!("{:?}", r.oracle_accuracy),
                    format!("{:?}", r.final_train_mse),
                ])?;
            }
            w.flush()?;
        }
        Command::Train { algorithm } => {
            let kind = PolicyKind::from(*algorithm);
            let predictors = load_predictors(&cfg, cli.predictors.as_deref())?;
            let t = train_policy(&cfg, kind, &predictors, cli.seed, cli.deterministic)?;
            let (ckpt, curve) = train_paths(&cli.out_dir, kind, cli.seed);
            write_curve(&curve, &t.curve)?;
            t.save(&ckpt)?;
            println!("{kind}: {} decisions, {} episodes, {} updates -> {}", t.decisions, t.episodes, t.updates, ckpt.display());
        }
        Command::Eval { policy, episodes, checkpoint, mode } => {
            if let Some(m) = mode {
                cfg.sim.queue_mode = m.parse::<QueueMode>().map_err(Error::Usage)?;
            }
            let predictors = load_predictors(&cfg, cli.predictors.as_deref())?;
            let mut p = make_policy(&cli, &cfg, *policy, checkpoint.as_deref())?;
            let s = evaluate(&cfg, &predictors, p.as_mut(), cli.seed, *episodes)?;
            let row = s.to_row(&cfg, *policy, "none", "default", cli.seed);
            let path = cli.out_dir.join("eval").join(policy.name()).join(format!("seed{}.csv", cli.seed));
            write_metrics(&path, std::slice::from_ref(&row))?;
            println!(
                "{}: avg_cost {:.6} avg_time_s {:.6} avg_energy {:.6} local/mec/cloud {:.3}/{:.3}/{:.3} retx/ep {:.3} discarded/ep {:.3}",
                row.policy,
                row.avg_cost,
                row.avg_time_s,
                row.avg_energy,
                row.offload_fractions[0],
                row.offload_fractions[1],
                row.offload_fractions[2],
                row.retransmitted_per_episode,
                row.discarded_per_episode
            );
        }
        Command::Sweep { spec, jobs } => {
            let spec = ExperimentSpec::load(spec)?;
            let mut base = spec.base_config(&cfg)?;
            if let Some(w) = cli.workers {
                base.train.workers = w;
            }
            let rows = run_experiment(&spec, &base, &cli.out_dir, *jobs, cli.deterministic)?;
            println!("{}: {} rows -> {}", spec.name, rows.len(), cli.out_dir.join(&spec.name).display());
        }
        Command::Aggregate { input, output } => {
            let rows = aggregate_file(input, output)?;
            println!("{} groups -> {}", rows.len(), output.display());
        }
        Command::Trace { policy, checkpoint, out } => {
            let predictors = load_predictors(&cfg, cli.predictors.as_deref())?;
            let mut p = make_policy(&cli, &cfg, *policy, checkpoint.as_deref())?;
            let path = out.clone().unwrap_or_else(|| cli.out_dir.join("trace").join(format!("{}-seed{}.csv", policy.name(), cli.seed)));
            if let Some(dir) = path.parent() {
                std::fs::create_dir_all(dir)?;
            }
            let mut env = Env::new(cfg.sim.clone(), cfg.weights.clone(), predictors, p.obs_mode())?;
            env.enable_trace(Box::new(BufWriter::new(File::create(&path)?)))?;
            let mut obs = env.reset(cli.seed)?;
            while !env.is_done() {
                obs = env.step(p.act(&obs)?)?.observation;
            }
            env.flush_trace()?;
            println!("{} decisions -> {}", env.stats()?.decisions, path.display());
        }
    }
    Ok(())
}
