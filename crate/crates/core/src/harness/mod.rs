//! Experiment matrix runner, evaluation, metric CSVs and aggregation.

pub mod cli;
mod metrics;
mod runner;

pub use metrics::{aggregate, aggregate_file, quantile_lower, read_metrics, write_metrics, write_summary, MetricRow, SummaryRow, METRIC_COLUMNS, SCHEMA_VERSION};
pub use runner::{
    checkpoint_path, evaluate, load_predictors, run_experiment, train_policy, EvalSummary, ExperimentLayout, EVAL_SEED_TAG,
};

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::agents::PolicyKind;
use crate::error::{Error, Result};
use crate::scenario::{Config, Interval, QueueMode};

/// Parameter varied across the cells of an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sweep {
    MecCapacity,
    TaskCycles,
    TaskSize,
    TaskRate,
    Speed,
    None,
}

impl Sweep {
    pub fn name(self) -> &'static str {
        match self {
            Sweep::MecCapacity => "mec_capacity",
            Sweep::TaskCycles => "task_cycles",
            Sweep::TaskSize => "task_size",
            Sweep::TaskRate => "task_rate",
            Sweep::Speed => "speed",
            Sweep::None => "none",
        }
    }

    /// Writes a grid cell into `cfg`.
    ///
    /// Interval sweeps replace the sampled range. A task-rate cell `[lo,hi]`
    /// spreads the chain states evenly over the interval and keeps the
    /// transition matrix.
    pub fn apply(self, cfg: &mut Config, cell: &GridCell) -> Result<()> {
        let range = || Interval::new(cell.lo, cell.hi);
        match self {
            Sweep::MecCapacity => cfg.sim.mec_capacity_range_gc_per_slot = range()?,
            Sweep::TaskCycles => cfg.sim.task_cycles_range_gc = range()?,
            Sweep::TaskSize => cfg.sim.task_size_range_mb = range()?,
            Sweep::TaskRate => {
                let n = cfg.sim.rate_states.len().max(1);
                cfg.sim.rate_states = (0..n)
                    .map(|i| if n == 1 { 0.5 * (cell.lo + cell.hi) } else { cell.lo + (cell.hi - cell.lo) * i as f64 / (n - 1) as f64 })
                    .collect();
            }
            Sweep::Speed => {
                if cell.lo != cell.hi {
                    return Err(Error::validation(format!("speed cells are scalars, got {}", cell.label)));
                }
                cfg.sim.vehicle_speed_mps = cell.lo;
            }
            Sweep::None => {}
        }
        cfg.validate()
    }
}

impl fmt::Display for Sweep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Sweep {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        [Sweep::MecCapacity, Sweep::TaskCycles, Sweep::TaskSize, Sweep::TaskRate, Sweep::Speed, Sweep::None]
            .into_iter()
            .find(|w| w.name() == s.trim())
            .ok_or_else(|| {
                Error::validation(format!(
                    "unknown sweep `{s}` (expected mec_capacity, task_cycles, task_size, task_rate, speed or none)"
                ))
            })
    }
}

/// One point of a sweep grid: an interval `[lo,hi]` or a scalar.
#[derive(Debug, Clone, PartialEq)]
pub struct GridCell {
    pub label: String,
    pub lo: f64,
    pub hi: f64,
}

impl GridCell {
    pub fn scalar(v: f64) -> Self {
        GridCell { label: fmt_num(v), lo: v, hi: v }
    }

    pub fn interval(lo: f64, hi: f64) -> Self {
        GridCell { label: format!("[{},{}]", fmt_num(lo), fmt_num(hi)), lo, hi }
    }

    /// File-name friendly form of the label.
    pub fn slug(&self) -> String {
        self.label.chars().filter_map(|c| match c {
            '[' | ']' => None,
            ',' => Some('-'),
            c if c.is_ascii_alphanumeric() || c == '.' || c == '-' => Some(c),
            _ => Some('_'),
        }).collect()
    }

    /// Sort key for labels read back from a CSV.
    pub fn parse_label(label: &str) -> Option<GridCell> {
        parse_cell(label).ok()
    }
}

fn fmt_num(v: f64) -> String {
    format!("{v}")
}

fn parse_cell(s: &str) -> Result<GridCell> {
    let s = s.trim();
    let num = |t: &str| t.trim().parse::<f64>().map_err(|_| Error::validation(format!("bad grid value `{t}`")));
    if let Some(inner) = s.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
        let (a, b) = inner.split_once(',').ok_or_else(|| Error::validation(format!("bad interval `{s}`")))?;
        let (lo, hi) = (num(a)?, num(b)?);
        if lo > hi {
            return Err(Error::validation(format!("interval `{s}` has lo > hi")));
        }
        Ok(GridCell::interval(lo, hi))
    } else {
        Ok(GridCell::scalar(num(s)?))
    }
}

/// Parses `[2,4]; [4,6]` or `5, 10, 15`.
pub fn parse_grid(s: &str) -> Result<Vec<GridCell>> {
    let parts: Vec<&str> = if s.contains('[') { s.split(';').collect() } else { s.split(',').collect() };
    let cells = parts.into_iter().filter(|p| !p.trim().is_empty()).map(parse_cell).collect::<Result<Vec<_>>>()?;
    if cells.is_empty() {
        return Err(Error::validation("grid must be nonempty"));
    }
    Ok(cells)
}

/// Parses `1, 2, 3` or the inclusive range `1..5`.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let bad = || Error::validation(format!("bad seed list `{s}`"));
    if let Some((a, b)) = s.split_once("..") {
        let (a, b): (u64, u64) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
        if a > b {
            return Err(bad());
        }
        return Ok((a..=b).collect());
    }
    let seeds = s.split(',').map(|t| t.trim().parse::<u64>().map_err(|_| bad())).collect::<Result<Vec<_>>>()?;
    if seeds.is_empty() {
        return Err(bad());
    }
    Ok(seeds)
}

/// One swept parameter and its grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    pub sweep: Sweep,
    pub grid: Vec<GridCell>,
}

impl Panel {
    /// The unswept default config as a single cell.
    pub fn default_cell() -> Self {
        Panel { sweep: Sweep::None, grid: vec![GridCell { label: "default".into(), lo: 0.0, hi: 0.0 }] }
    }
}

/// An experiment: policies x grid cells x seeds, each evaluated on
/// `eval_episodes` fresh episodes. A spec may hold several panels, each
/// sweeping its own parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub name: String,
    pub mode: QueueMode,
    pub panels: Vec<Panel>,
    pub policies: Vec<PolicyKind>,
    pub seeds: Vec<u64>,
    pub eval_episodes: u64,
    /// Config keys applied on top of the base config for every cell.
    pub overrides: Vec<(String, String)>,
    /// Train learned policies whose checkpoints are missing instead of failing.
    pub train_missing: bool,
    /// Where learned-policy checkpoints live; defaults to the experiment directory.
    pub checkpoints: Option<PathBuf>,
    /// Predictor checkpoint directory, used when `use_trained` is set.
    pub predictors: Option<PathBuf>,
    /// Base config file; replaces the caller's base config when set.
    pub config: Option<PathBuf>,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            name: "experiment".into(),
            mode: QueueMode::Dynamic,
            panels: vec![Panel::default_cell()],
            policies: vec![PolicyKind::Al, PolicyKind::Am, PolicyKind::Ac, PolicyKind::Rc],
            seeds: vec![1, 2, 3],
            eval_episodes: 10,
            overrides: Vec::new(),
            train_missing: false,
            checkpoints: None,
            predictors: None,
            config: None,
        }
    }
}

impl ExperimentSpec {
    /// Parses `key = value` lines; `set.<config key> = value` adds a config
    /// override. Each `sweep` line opens a panel and the next `grid` line
    /// fills it. Relative paths resolve against `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut spec = ExperimentSpec::default();
        let mut panels: Vec<(Sweep, Option<Vec<GridCell>>)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let perr = |msg: String| Error::Parse { line: i + 1, msg };
            let (k, v) = line.split_once('=').ok_or_else(|| perr(format!("expected `key = value`, got `{line}`")))?;
            let (k, v) = (k.trim(), v.trim());
            let wrap = |e: Error| perr(e.to_string());
            match k {
                "name" => spec.name = v.to_string(),
                "mode" => spec.mode = v.parse().map_err(perr)?,
                "sweep" => panels.push((v.parse().map_err(wrap)?, None)),
                "grid" => match panels.last_mut() {
                    Some((_, g @ None)) => *g = Some(parse_grid(v).map_err(wrap)?),
                    Some(_) => return Err(perr("second grid for one sweep".into())),
                    None => return Err(perr("grid before any sweep".into())),
                },
                "policies" => {
                    spec.policies = v.split(',').map(|p| p.parse::<PolicyKind>()).collect::<Result<Vec<_>>>().map_err(wrap)?
                }
                "seeds" => spec.seeds = parse_seeds(v).map_err(wrap)?,
                "eval_episodes" => spec.eval_episodes = v.parse().map_err(|_| perr(format!("bad eval_episodes `{v}`")))?,
                "train_missing" => spec.train_missing = v.parse().map_err(|_| perr(format!("bad bool `{v}`")))?,
                "checkpoints" => spec.checkpoints = Some(base_dir.join(v)),
                "predictors" => spec.predictors = Some(base_dir.join(v)),
                "config" => spec.config = Some(base_dir.join(v)),
                _ => match k.strip_prefix("set.") {
                    Some(key) => {
                        if !Config::keys().contains(&key) {
                            return Err(perr(format!("unknown config key `{key}`")));
                        }
                        spec.overrides.push((key.to_string(), v.to_string()));
                    }
                    None => return Err(perr(format!("unknown experiment key `{k}`"))),
                },
            }
        }
        if !panels.is_empty() {
            spec.panels = panels
                .into_iter()
                .map(|(sweep, grid)| match (sweep, grid) {
                    (Sweep::None, None) => Ok(Panel::default_cell()),
                    (sweep, Some(grid)) => Ok(Panel { sweep, grid }),
                    (sweep, None) => Err(Error::validation(format!("sweep `{sweep}` needs a grid"))),
                })
                .collect::<Result<_>>()?;
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn validate(&self) -> Result<()> {
        if self.panels.is_empty() || self.panels.iter().any(|p| p.grid.is_empty()) {
            return Err(Error::validation("grid must be nonempty"));
        }
        for (i, p) in self.panels.iter().enumerate() {
            if self.panels[..i].iter().any(|q| q.sweep == p.sweep) {
                return Err(Error::validation(format!("sweep `{}` appears twice", p.sweep)));
            }
        }
        if self.policies.is_empty() || self.seeds.is_empty() {
            return Err(Error::validation("policies and seeds must be nonempty"));
        }
        if self.eval_episodes == 0 {
            return Err(Error::validation("eval_episodes must be >= 1"));
        }
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(Error::validation(format!("bad experiment name `{}`", self.name)));
        }
        if self.seeds.len() < 3 {
            log::warn!("{}: fewer than 3 seeds per cell; medians are not comparable", self.name);
        }
        Ok(())
    }

    /// The spec's own base config if it names one, else `fallback`.
    pub fn base_config(&self, fallback: &Config) -> Result<Config> {
        match &self.config {
            Some(p) => crate::scenario::load_config(p),
            None => Ok(fallback.clone()),
        }
    }

    /// Every (sweep, cell) pair in panel order.
    pub fn cells(&self) -> Vec<(Sweep, &GridCell)> {
        self.panels.iter().flat_map(|p| p.grid.iter().map(move |c| (p.sweep, c))).collect()
    }

    /// Base config with overrides, queue mode and the grid cell applied.
    pub fn cell_config(&self, base: &Config, sweep: Sweep, cell: &GridCell) -> Result<Config> {
        let mut cfg = base.clone();
        for (k, v) in &self.overrides {
            cfg.set(k, v)?;
        }
        cfg.sim.queue_mode = self.mode;
        sweep.apply(&mut cfg, cell)?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_forms() {
        let g = parse_grid("[2,4]; [4,6] ;[7,9]").unwrap();
        assert_eq!(g.iter().map(|c| c.label.as_str()).collect::<Vec<_>>(), ["[2,4]", "[4,6]", "[7,9]"]);
        assert_eq!(g[0].slug(), "2-4");
        let s = parse_grid("5, 10,15").unwrap();
        assert_eq!(s[2], GridCell::scalar(15.0));
        assert!(parse_grid("").is_err());
        assert!(parse_grid("[4,2]").is_err());
        assert_eq!(parse_grid("[0.7,0.9]").unwrap()[0].label, "[0.7,0.9]");
    }

    #[test]
    fn seed_forms() {
        assert_eq!(parse_seeds("1..3").unwrap(), vec![1, 2, 3]);
        assert_eq!(parse_seeds("4, 9").unwrap(), vec![4, 9]);
        assert!(parse_seeds("x").is_err());
    }

    #[test]
    fn spec_parse_and_errors() {
        let text = "name = t\nmode = static\nsweep = speed\ngrid = 5, 10\npolicies = AL, AM\nseeds = 1..3\nset.deadline_slots = 7\n";
        let s = ExperimentSpec::parse(text, Path::new(".")).unwrap();
        assert_eq!(s.mode, QueueMode::Static);
        assert_eq!(s.cells().len(), 2);
        let cfg = s.cell_config(&Config::default(), Sweep::Speed, s.cells()[1].1).unwrap();
        assert_eq!(cfg.sim.vehicle_speed_mps, 10.0);
        assert_eq!(cfg.sim.deadline_slots, 7);
        assert_eq!(cfg.sim.queue_mode, QueueMode::Static);
        assert!(matches!(ExperimentSpec::parse("bogus = 1", Path::new(".")), Err(Error::Parse { line: 1, .. })));
        assert!(ExperimentSpec::parse("set.nope = 1", Path::new(".")).is_err());
        assert!(ExperimentSpec::parse("sweep = speed", Path::new(".")).is_err());
        assert!(ExperimentSpec::parse("grid = 5", Path::new(".")).is_err());
    }

    #[test]
    fn panels() {
        let text = "sweep = task_cycles\ngrid = [1,4]; [4,7]\nsweep = task_size\ngrid = [1,2]\nsweep = none\n";
        let s = ExperimentSpec::parse(text, Path::new(".")).unwrap();
        let cells: Vec<_> = s.cells().into_iter().map(|(w, c)| (w, c.label.clone())).collect();
        assert_eq!(cells[0], (Sweep::TaskCycles, "[1,4]".to_string()));
        assert_eq!(cells[2], (Sweep::TaskSize, "[1,2]".to_string()));
        assert_eq!(cells[3], (Sweep::None, "default".to_string()));
        assert!(ExperimentSpec::parse("sweep = speed\ngrid = 5\nsweep = speed\ngrid = 10", Path::new(".")).is_err());
    }

    #[test]
    fn task_rate_cell_spreads_states() {
        let mut cfg = Config::default();
        let n = cfg.sim.rate_states.len();
        Sweep::TaskRate.apply(&mut cfg, &GridCell::interval(0.7, 0.9)).unwrap();
        assert_eq!(cfg.sim.rate_states.len(), n);
        assert!((cfg.sim.rate_states[0] - 0.7).abs() < 1e-12);
        assert!((cfg.sim.rate_states[n - 1] - 0.9).abs() < 1e-12);
    }
}
