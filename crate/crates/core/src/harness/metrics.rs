use std::collections::BTreeMap;
use std::path::Path;

use crate::agents::PolicyKind;
use crate::error::{Error, Result};
use crate::harness::GridCell;

/// Bumped whenever a column is added, removed or renamed.
pub const SCHEMA_VERSION: u32 = 1;

pub const METRIC_COLUMNS: [&str; 15] = [
    "schema_version",
    "policy",
    "sweep",
    "sweep_value",
    "seed",
    "avg_cost",
    "avg_time_s",
    "avg_energy",
    "frac_local",
    "frac_mec",
    "frac_cloud",
    "retransmitted_per_episode",
    "discarded_per_episode",
    "episodes",
    "decisions",
];

/// Metrics summarised across seeds, in column order.
const STAT_NAMES: [&str; 8] = [
    "avg_cost",
    "avg_time_s",
    "avg_energy",
    "frac_local",
    "frac_mec",
    "frac_cloud",
    "retransmitted_per_episode",
    "discarded_per_episode",
];

/// One evaluated (policy, grid cell, seed).
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub policy: String,
    pub sweep: String,
    pub sweep_value: String,
    pub seed: u64,
    pub avg_cost: f64,
    pub avg_time_s: f64,
    pub avg_energy: f64,
    /// Local, MEC, cloud.
    pub offload_fractions: [f64; 3],
    pub retransmitted_per_episode: f64,
    pub discarded_per_episode: f64,
    pub episodes: u64,
    pub decisions: u64,
}

impl MetricRow {
    fn stats(&self) -> [f64; 8] {
        let [l, m, c] = self.offload_fractions;
        [self.avg_cost, self.avg_time_s, self.avg_energy, l, m, c, self.retransmitted_per_episode, self.discarded_per_episode]
    }

    pub(crate) fn record(&self) -> Vec<String> {
        let f = |x: f64| format!("{x:?}");
        vec![
            SCHEMA_VERSION.to_string(),
            self.policy.clone(),
            self.sweep.clone(),
            self.sweep_value.clone(),
            self.seed.to_string(),
            f(self.avg_cost),
            f(self.avg_time_s),
            f(self.avg_energy),
            f(self.offload_fractions[0]),
            f(self.offload_fractions[1]),
            f(self.offload_fractions[2]),
            f(self.retransmitted_per_episode),
            f(self.discarded_per_episode),
            self.episodes.to_string(),
            self.decisions.to_string(),
        ]
    }

    fn from_record(rec: &csv::StringRecord, line: u64) -> Result<Self> {
        let field = |i: usize| rec.get(i).unwrap_or("");
        let bad = |i: usize, what: &str| Error::Schema {
            column: METRIC_COLUMNS[i].to_string(),
            msg: format!("line {line}: expected {what}, got `{}`", field(i)),
        };
        let num = |i: usize| field(i).trim().parse::<f64>().map_err(|_| bad(i, "a number"));
        let int = |i: usize| field(i).trim().parse::<u64>().map_err(|_| bad(i, "an unsigned integer"));
        if rec.len() != METRIC_COLUMNS.len() {
            let column = METRIC_COLUMNS.get(rec.len()).copied().unwrap_or("<extra>").to_string();
            return Err(Error::Schema { column, msg: format!("line {line}: {} fields, expected {}", rec.len(), METRIC_COLUMNS.len()) });
        }
        if int(0)? != u64::from(SCHEMA_VERSION) {
            return Err(bad(0, &format!("version {SCHEMA_VERSION}")));
        }
        Ok(MetricRow {
            policy: field(1).to_string(),
            sweep: field(2).to_string(),
            sweep_value: field(3).to_string(),
            seed: int(4)?,
            avg_cost: num(5)?,
            avg_time_s: num(6)?,
            avg_energy: num(7)?,
            offload_fractions: [num(8)?, num(9)?, num(10)?],
            retransmitted_per_episode: num(11)?,
            discarded_per_episode: num(12)?,
            episodes: int(13)?,
            decisions: int(14)?,
        })
    }
}

pub fn write_metrics(path: &Path, rows: &[MetricRow]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(METRIC_COLUMNS)?;
    for r in rows {
        w.write_record(r.record())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricRow>> {
    let mut r = csv::ReaderBuilder::new().flexible(true).from_path(path)?;
    let header = r.headers()?.clone();
    for (i, want) in METRIC_COLUMNS.iter().enumerate() {
        match header.get(i) {
            Some(got) if got == *want => {}
            Some(got) => {
                return Err(Error::Schema { column: (*want).to_string(), msg: format!("header has `{got}` in its place") })
            }
            None => return Err(Error::Schema { column: (*want).to_string(), msg: "missing from header".into() }),
        }
    }
    if let Some(extra) = header.get(METRIC_COLUMNS.len()) {
        return Err(Error::Schema { column: extra.to_string(), msg: "unexpected column".into() });
    }
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        rows.push(MetricRow::from_record(&rec?, i as u64 + 2)?);
    }
    Ok(rows)
}

/// Order statistic `sorted[floor(q (n - 1))]`; with `q = 0.5` and an even
/// count this picks the lower of the two middle values.
pub fn quantile_lower(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    sorted[((q * (sorted.len() - 1) as f64).floor() as usize).min(sorted.len() - 1)]
}

/// Median and interquartile range of each metric over seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub policy: String,
    pub sweep: String,
    pub sweep_value: String,
    pub seeds: usize,
    /// `(median, iqr)` per metric, in the order of the metric columns.
    pub stats: Vec<(f64, f64)>,
}

impl SummaryRow {
    pub fn median(&self, metric: &str) -> Option<f64> {
        STAT_NAMES.iter().position(|m| *m == metric).map(|i| self.stats[i].0)
    }

    pub fn iqr(&self, metric: &str) -> Option<f64> {
        STAT_NAMES.iter().position(|m| *m == metric).map(|i| self.stats[i].1)
    }
}

fn policy_order(p: &str) -> (usize, String) {
    match p.parse::<PolicyKind>() {
        Ok(k) => (PolicyKind::ALL.iter().position(|x| *x == k).unwrap_or(usize::MAX), p.to_string()),
        Err(_) => (usize::MAX, p.to_string()),
    }
}

fn value_order(v: &str) -> (u64, u64, String) {
    // total order on f64 bit patterns for non-negative values, labels last
    match GridCell::parse_label(v) {
        Some(c) => (c.lo.to_bits(), c.hi.to_bits(), v.to_string()),
        None => (u64::MAX, u64::MAX, v.to_string()),
    }
}

/// Groups rows by (policy, sweep, sweep value) and summarises each metric.
/// The result does not depend on row order.
pub fn aggregate(rows: &[MetricRow]) -> Vec<SummaryRow> {
    type Key = ((usize, String), String, (u64, u64, String));
    let mut groups: BTreeMap<Key, Vec<&MetricRow>> = BTreeMap::new();
    for r in rows {
        groups.entry((policy_order(&r.policy), r.sweep.clone(), value_order(&r.sweep_value))).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((p, sweep, v), rs)| {
            let stats = (0..STAT_NAMES.len())
                .map(|i| {
                    let mut xs: Vec<f64> = rs.iter().map(|r| r.stats()[i]).collect();
                    xs.sort_by(f64::total_cmp);
                    (quantile_lower(&xs, 0.5), quantile_lower(&xs, 0.75) - quantile_lower(&xs, 0.25))
                })
                .collect();
            SummaryRow { policy: p.1, sweep, sweep_value: v.2, seeds: rs.len(), stats }
        })
        .collect()
}

pub fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> =
        ["schema_version", "policy", "sweep", "sweep_value", "seeds"].iter().map(|s| s.to_string()).collect();
    for m in STAT_NAMES {
        header.push(format!("{m}_median"));
        header.push(format!("{m}_iqr"));
    }
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![SCHEMA_VERSION.to_string(), r.policy.clone(), r.sweep.clone(), r.sweep_value.clone(), r.seeds.to_string()];
        for (m, q) in &r.stats {
            rec.push(format!("{m:?}"));
            rec.push(format!("{q:?}"));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a metrics CSV and writes its summary.
pub fn aggregate_file(input: &Path, output: &Path) -> Result<Vec<SummaryRow>> {
    let rows = aggregate(&read_metrics(input)?);
    write_summary(output, &rows)?;
    Ok(rows)
}
