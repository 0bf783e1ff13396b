//! Aggregation of run reports into comparison tables and plot data.
//!
//! Tables are written as CSV or as JSON of the form
//! `{"columns": [...], "rows": [[...], ...]}`. Column order is fixed per
//! table and floats are printed at a fixed precision, so emitting the same
//! rows twice yields identical bytes.
//!
//! ```
//! use qobench::report::{render, Format, Table};
//! use qobench::measurement::DiffRow;
//!
//! let rows = vec![DiffRow { lag: 1, query_id: "1a".parse().unwrap(), diff: -0.2 }];
//! assert_eq!(render(&rows, Format::Csv), "lag,query_id,diff\n1,1a,-0.200000\n");
//! assert_eq!(render::<DiffRow>(&[], Format::Csv), "lag,query_id,diff\n");
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::measurement::{DiffRow, SuccessiveDiffs};
use crate::runner::{AblationRow, RunRecord, RunReport, SetTag};
use crate::stats::{self, bootstrap_ci, Factor, Statistic, StatsError, Summary};
use crate::workload::QueryId;

pub const DEFAULT_CI_LEVEL: f64 = 0.95;
pub const DEFAULT_CI_RESAMPLES: usize = 2000;
pub const DEFAULT_CI_SEED: u64 = 0x5EED_C1;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("no records in the {0} subset")]
    EmptySubset(Subset),
    #[error("baseline `{0}` is not among the rows")]
    MissingBaseline(String),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Which records of a run to aggregate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subset {
    Train,
    Test,
    All,
}

impl Subset {
    pub fn name(self) -> &'static str {
        match self {
            Subset::Train => "train",
            Subset::Test => "test",
            Subset::All => "all",
        }
    }

    pub fn includes(self, tag: SetTag) -> bool {
        match self {
            Subset::Train => tag == SetTag::Train,
            Subset::Test => tag == SetTag::Test,
            Subset::All => true,
        }
    }
}

impl std::fmt::Display for Subset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Subset {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "train" => Ok(Subset::Train),
            "test" => Ok(Subset::Test),
            "all" => Ok(Subset::All),
            other => Err(format!("unknown subset `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CiOptions {
    pub level: f64,
    pub resamples: usize,
    pub seed: u64,
}

impl Default for CiOptions {
    fn default() -> Self {
        Self {
            level: DEFAULT_CI_LEVEL,
            resamples: DEFAULT_CI_RESAMPLES,
            seed: DEFAULT_CI_SEED,
        }
    }
}

/// Totals over one subset of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub adapter: String,
    pub split: String,
    pub subset: Subset,
    pub query_count: usize,
    pub total_inference_ms: f64,
    pub total_planning_ms: f64,
    pub total_execution_ms: f64,
    pub total_end_to_end_ms: f64,
    pub timeout_count: usize,
    /// Records that carry an error and no timeout.
    pub failed_count: usize,
    /// Bootstrap interval on the end-to-end total.
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Sums the selected records. Timed-out records contribute their budget.
pub fn aggregate(report: &RunReport, subset: Subset, ci: &CiOptions) -> Result<AggregateRow, ReportError> {
    let records: Vec<&RunRecord> = report.records.iter().filter(|r| subset.includes(r.set)).collect();
    if records.is_empty() {
        return Err(ReportError::EmptySubset(subset));
    }
    let sum = |f: fn(&RunRecord) -> f64| records.iter().map(|r| f(r)).sum::<f64>();
    let end_to_end: Vec<f64> = records.iter().map(|r| r.timing.end_to_end_ms).collect();
    let total_end_to_end_ms = end_to_end.iter().sum::<f64>();
    let (ci_low, ci_high) = if end_to_end.len() < 2 {
        (total_end_to_end_ms, total_end_to_end_ms)
    } else {
        bootstrap_ci(&end_to_end, Statistic::Sum, ci.level, ci.seed, ci.resamples)?
    };
    Ok(AggregateRow {
        adapter: report.adapter.clone(),
        split: report.split.label.clone(),
        subset,
        query_count: records.len(),
        total_inference_ms: sum(|r| r.timing.inference_ms),
        total_planning_ms: sum(|r| r.timing.planning_ms),
        total_execution_ms: sum(|r| r.timing.execution_ms),
        total_end_to_end_ms,
        timeout_count: records.iter().filter(|r| r.timing.timed_out).count(),
        failed_count: records
            .iter()
            .filter(|r| r.timing.error.is_some() && !r.timing.timed_out)
            .count(),
        ci_low,
        ci_high,
    })
}

/// One adapter measured against the baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub adapter: String,
    pub total_end_to_end_ms: f64,
    /// The adapter's total relative to the baseline's.
    pub factor: Factor,
    /// 1 for the fastest total; ties ordered by adapter name.
    pub rank: usize,
    pub ci_overlaps_baseline: bool,
    /// Records that produced no measurement and add nothing to the total.
    pub failed_count: usize,
}

/// Ranks rows by end-to-end total and relates each to `baseline`.
pub fn compare(rows: &[AggregateRow], baseline: &str) -> Result<Vec<ComparisonRow>, ReportError> {
    let base = rows
        .iter()
        .find(|r| r.adapter == baseline)
        .ok_or_else(|| ReportError::MissingBaseline(baseline.to_string()))?;
    let mut order: Vec<&AggregateRow> = rows.iter().collect();
    order.sort_by(|a, b| {
        a.total_end_to_end_ms
            .total_cmp(&b.total_end_to_end_ms)
            .then_with(|| a.adapter.cmp(&b.adapter))
    });
    order
        .into_iter()
        .enumerate()
        .map(|(i, row)| {
            Ok(ComparisonRow {
                adapter: row.adapter.clone(),
                total_end_to_end_ms: row.total_end_to_end_ms,
                factor: stats::speedup_factor(base.total_end_to_end_ms, row.total_end_to_end_ms)?,
                rank: i + 1,
                ci_overlaps_baseline: row.ci_low <= base.ci_high && base.ci_low <= row.ci_high,
                failed_count: row.failed_count,
            })
        })
        .collect()
}

/// Per-query execution times of every completed repetition, for
/// successive-execution analysis. Timed-out and failed records are skipped.
pub fn execution_series(report: &RunReport) -> BTreeMap<QueryId, Vec<f64>> {
    report
        .records
        .iter()
        .filter(|r| r.timing.is_ok() && !r.timing.timed_out && !r.timing.repetitions.is_empty())
        .map(|r| {
            let times = r.timing.repetitions.iter().map(|rep| rep.execution_ms).collect();
            (r.timing.query_id.clone(), times)
        })
        .collect()
}

/// A single table cell.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Text(String),
    Int(u64),
    Bool(bool),
    /// Fixed-point with the given number of decimals.
    Fixed(f64, usize),
    Empty,
}

impl Cell {
    fn text(&self) -> String {
        match self {
            Cell::Text(s) => s.clone(),
            Cell::Int(i) => i.to_string(),
            Cell::Bool(b) => b.to_string(),
            Cell::Fixed(v, d) => format!("{v:.d$}"),
            Cell::Empty => String::new(),
        }
    }

    fn json(&self) -> serde_json::Value {
        use serde_json::Value;
        match self {
            Cell::Text(s) => Value::String(s.clone()),
            Cell::Int(i) => Value::from(*i),
            Cell::Bool(b) => Value::Bool(*b),
            Cell::Fixed(..) => {
                let parsed: f64 = self.text().parse().expect("formatted float parses");
                serde_json::Number::from_f64(parsed).map_or(Value::Null, Value::Number)
            }
            Cell::Empty => Value::Null,
        }
    }
}

const MS: usize = 3;
const FACTOR: usize = 1;
const P_VALUE: usize = 3;

fn ms(v: f64) -> Cell {
    Cell::Fixed(v, MS)
}

fn opt(v: Option<f64>, f: fn(f64) -> Cell) -> Cell {
    v.map_or(Cell::Empty, f)
}

/// A row type with a fixed column layout.
pub trait Table {
    const COLUMNS: &'static [&'static str];
    fn cells(&self) -> Vec<Cell>;
}

impl Table for AggregateRow {
    const COLUMNS: &'static [&'static str] = &[
        "adapter",
        "split",
        "subset",
        "query_count",
        "total_inference_ms",
        "total_planning_ms",
        "total_execution_ms",
        "total_end_to_end_ms",
        "timeout_count",
        "failed_count",
        "ci_low",
        "ci_high",
    ];
    fn cells(&self) -> Vec<Cell> {
        vec![
            Cell::Text(self.adapter.clone()),
            Cell::Text(self.split.clone()),
            Cell::Text(self.subset.name().into()),
            Cell::Int(self.query_count as u64),
            ms(self.total_inference_ms),
            ms(self.total_planning_ms),
            ms(self.total_execution_ms),
            ms(self.total_end_to_end_ms),
            Cell::Int(self.timeout_count as u64),
            Cell::Int(self.failed_count as u64),
            ms(self.ci_low),
            ms(self.ci_high),
        ]
    }
}

impl Table for ComparisonRow {
    const COLUMNS: &'static [&'static str] = &[
        "rank",
        "adapter",
        "total_end_to_end_ms",
        "factor",
        "direction",
        "ci_overlaps_baseline",
        "failed_count",
    ];
    fn cells(&self) -> Vec<Cell> {
        vec![
            Cell::Int(self.rank as u64),
            Cell::Text(self.adapter.clone()),
            ms(self.total_end_to_end_ms),
            Cell::Fixed(self.factor.factor, FACTOR),
            Cell::Text(self.factor.direction.name().into()),
            Cell::Bool(self.ci_overlaps_baseline),
            Cell::Int(self.failed_count as u64),
        ]
    }
}

impl Table for DiffRow {
    const COLUMNS: &'static [&'static str] = &["lag", "query_id", "diff"];
    fn cells(&self) -> Vec<Cell> {
        vec![
            Cell::Int(self.lag as u64),
            Cell::Text(self.query_id.to_string()),
            Cell::Fixed(self.diff, 6),
        ]
    }
}

/// Distribution of normalised differences at one lag.
#[derive(Debug, Clone, PartialEq)]
pub struct LagSummaryRow {
    pub lag: usize,
    pub summary: Summary,
}

impl LagSummaryRow {
    pub fn from_diffs(diffs: &SuccessiveDiffs) -> Vec<Self> {
        diffs
            .per_lag
            .iter()
            .enumerate()
            .map(|(i, s)| LagSummaryRow { lag: i + 1, summary: *s })
            .collect()
    }
}

impl Table for LagSummaryRow {
    const COLUMNS: &'static [&'static str] = &["lag", "count", "mean", "min", "p10", "median", "p90", "max"];
    fn cells(&self) -> Vec<Cell> {
        let s = &self.summary;
        let mut cells = vec![Cell::Int(self.lag as u64), Cell::Int(s.count as u64)];
        cells.extend([s.mean, s.min, s.p10, s.median, s.p90, s.max].map(|v| Cell::Fixed(v, 6)));
        cells
    }
}

impl Table for RunRecord {
    const COLUMNS: &'static [&'static str] = &[
        "adapter",
        "set",
        "query_id",
        "inference_ms",
        "planning_ms",
        "execution_ms",
        "end_to_end_ms",
        "timed_out",
        "repetitions",
        "error",
    ];
    fn cells(&self) -> Vec<Cell> {
        let t = &self.timing;
        vec![
            Cell::Text(t.adapter.clone()),
            Cell::Text(match self.set {
                SetTag::Train => "train".into(),
                SetTag::Test => "test".into(),
            }),
            Cell::Text(t.query_id.to_string()),
            ms(t.inference_ms),
            ms(t.planning_ms),
            ms(t.execution_ms),
            ms(t.end_to_end_ms),
            Cell::Bool(t.timed_out),
            Cell::Int(t.repetitions.len() as u64),
            t.error.clone().map_or(Cell::Empty, Cell::Text),
        ]
    }
}

impl Table for AblationRow {
    const COLUMNS: &'static [&'static str] = &[
        "query_id",
        "baseline_mean_ms",
        "toggled_mean_ms",
        "mean_delta_ms",
        "p_value",
        "factor",
        "direction",
        "exceeds_threshold",
        "significant",
        "error",
    ];
    fn cells(&self) -> Vec<Cell> {
        let mean = |s: &[f64]| (!s.is_empty()).then(|| stats::mean(s));
        let error = self.baseline.error.as_ref().or(self.toggled.error.as_ref());
        vec![
            Cell::Text(self.query_id.to_string()),
            opt(mean(&self.baseline_samples), ms),
            opt(mean(&self.toggled_samples), ms),
            opt(self.mean_delta_ms, ms),
            opt(self.p_value, |p| Cell::Fixed(p, P_VALUE)),
            opt(self.factor.map(|f| f.factor), |v| Cell::Fixed(v, FACTOR)),
            self.factor.map_or(Cell::Empty, |f| Cell::Text(f.direction.name().into())),
            Cell::Bool(self.exceeds_threshold),
            Cell::Bool(self.significant),
            error.map_or(Cell::Empty, |e| Cell::Text(e.clone())),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

impl FromStr for Format {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(format!("unknown format `{other}`")),
        }
    }
}

pub fn render<T: Table>(rows: &[T], format: Format) -> String {
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(T::COLUMNS).expect("in-memory write");
            for row in rows {
                w.write_record(row.cells().iter().map(Cell::text)).expect("in-memory write");
            }
            String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 cells")
        }
        Format::Json => {
            let body = serde_json::json!({
                "columns": T::COLUMNS,
                "rows": rows
                    .iter()
                    .map(|r| r.cells().iter().map(Cell::json).collect::<Vec<_>>())
                    .collect::<Vec<_>>(),
            });
            let mut s = serde_json::to_string_pretty(&body).expect("table serializes");
            s.push('\n');
            s
        }
    }
}

pub fn emit<T: Table>(rows: &[T], format: Format, path: &Path) -> Result<(), ReportError> {
    fs::write(path, render(rows, format))?;
    Ok(())
}
