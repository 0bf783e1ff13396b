//! Hot-cache timing under the instrumented explain statement.
//!
//! A query is run `k` times back to back on one session as
//! `<hint> EXPLAIN (ANALYZE, FORMAT JSON) <sql>`. Planning and execution
//! times come from the server's own report, so network latency never enters
//! a measurement.
//!
//! ```
//! use qobench::adapters::PlanDirective;
//! use qobench::dbms::{ConnectOptions, ConfigProfile, ExplainOutcome, ScriptedClient, Session};
//! use qobench::measurement::{measure_query, TimingPolicy};
//!
//! let client = ScriptedClient::new().with_queue(
//!     [ExplainOutcome::times(2.0, 100.0), ExplainOutcome::times(2.0, 80.0), ExplainOutcome::times(2.0, 79.0)],
//!     ExplainOutcome::times(2.0, 1.0),
//! );
//! let mut session = Session::open(client, &ConfigProfile::empty(), &ConnectOptions::default()).unwrap();
//! let record = measure_query(
//!     &mut session, &"1a".parse().unwrap(), "SELECT 1", &PlanDirective::native(),
//!     &TimingPolicy::default(), "native", 5.0,
//! ).unwrap();
//! assert_eq!((record.planning_ms, record.execution_ms, record.end_to_end_ms), (2.0, 79.0, 86.0));
//! ```

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adapters::PlanDirective;
use crate::dbms::client::{DbError, SqlClient};
use crate::dbms::{check_identifier, quote_literal, DbmsError, Session};
use crate::stats::{self, Summary};
use crate::workload::QueryId;

/// Options passed to the instrumented explain statement.
pub const EXPLAIN_PREFIX: &str = "EXPLAIN (ANALYZE, FORMAT JSON)";

#[derive(Debug, Error)]
pub enum MeasureError {
    #[error("invalid timing policy: {0}")]
    InvalidPolicy(String),
    #[error("hint rejected by the server: {0}")]
    HintRejected(DbError),
    #[error("query failed: {0}")]
    QueryFailed(DbError),
    #[error("unreadable explain output: {0}")]
    BadExplain(String),
    #[error(transparent)]
    Dbms(#[from] DbmsError),
}

#[derive(Debug, Error, PartialEq)]
pub enum DiffError {
    #[error("query {query} has {got} runs, lag {lag} needs {needed}")]
    InsufficientRuns {
        query: QueryId,
        got: usize,
        needed: usize,
        lag: usize,
    },
    #[error("query {0} has a non-positive first execution time")]
    NonPositiveBase(QueryId),
    #[error("maximum lag must be at least 1")]
    ZeroLag,
}

/// How repetitions collapse into one planning and one execution time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pick {
    /// The k-th (last) repetition.
    Kth,
    Mean,
    Geomean,
}

impl std::str::FromStr for Pick {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "kth" => Ok(Pick::Kth),
            "mean" => Ok(Pick::Mean),
            "geomean" => Ok(Pick::Geomean),
            other => Err(format!("unknown pick `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimingPolicy {
    pub k: usize,
    pub pick: Pick,
    pub timeout_ms: u64,
}

impl Default for TimingPolicy {
    /// Three runs, keep the third, five-minute budget.
    fn default() -> Self {
        Self {
            k: 3,
            pick: Pick::Kth,
            timeout_ms: crate::dbms::DEFAULT_STATEMENT_TIMEOUT_MS,
        }
    }
}

impl TimingPolicy {
    pub fn validate(&self) -> Result<(), MeasureError> {
        if self.k == 0 {
            return Err(MeasureError::InvalidPolicy("k must be at least 1".into()));
        }
        if self.timeout_ms == 0 {
            return Err(MeasureError::InvalidPolicy("timeout_ms must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Repetition {
    pub planning_ms: f64,
    pub execution_ms: f64,
}

/// Decomposed time for one query under one adapter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRecord {
    pub query_id: QueryId,
    pub adapter: String,
    pub inference_ms: f64,
    pub planning_ms: f64,
    pub execution_ms: f64,
    pub end_to_end_ms: f64,
    pub timed_out: bool,
    /// Every completed run, in order.
    pub repetitions: Vec<Repetition>,
    /// Explain output of the last completed run.
    pub explain: Option<serde_json::Value>,
    /// Set when the query could not be measured.
    pub error: Option<String>,
}

impl TimingRecord {
    /// A record for a query that produced no measurement.
    pub fn failed(query_id: QueryId, adapter: &str, inference_ms: f64, error: impl ToString) -> Self {
        Self {
            query_id,
            adapter: adapter.to_string(),
            inference_ms,
            planning_ms: 0.0,
            execution_ms: 0.0,
            end_to_end_ms: inference_ms,
            timed_out: false,
            repetitions: Vec::new(),
            explain: None,
            error: Some(error.to_string()),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.error.is_none()
    }
}

/// Planning and execution milliseconds from one explain result.
pub fn parse_explain_json(text: &str) -> Result<(Repetition, serde_json::Value), MeasureError> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| MeasureError::BadExplain(e.to_string()))?;
    let top = value
        .as_array()
        .and_then(|a| a.first())
        .or_else(|| value.as_object().map(|_| &value))
        .ok_or_else(|| MeasureError::BadExplain("expected an array holding one object".into()))?;
    let field = |name: &str| {
        top.get(name)
            .and_then(serde_json::Value::as_f64)
            .ok_or_else(|| MeasureError::BadExplain(format!("missing \"{name}\"")))
    };
    let rep = Repetition {
        planning_ms: field("Planning Time")?,
        execution_ms: field("Execution Time")?,
    };
    Ok((rep, value))
}

/// The statement sent to the server: hint first, then the explain wrapper.
pub fn instrumented_statement(sql: &str, hint: &str) -> String {
    let hint = hint.trim();
    if hint.is_empty() {
        format!("{EXPLAIN_PREFIX} {sql}")
    } else {
        format!("{hint} {EXPLAIN_PREFIX} {sql}")
    }
}

/// Measures one query with `policy`, applying the directive's settings and
/// the policy's timeout for the duration and restoring both afterwards.
pub fn measure_query<C: SqlClient>(
    session: &mut Session<C>,
    query_id: &QueryId,
    sql: &str,
    directive: &PlanDirective,
    policy: &TimingPolicy,
    adapter: &str,
    inference_ms: f64,
) -> Result<TimingRecord, MeasureError> {
    policy.validate()?;
    let mut overrides: Vec<(String, String)> = directive.session_settings.clone();
    overrides.push(("statement_timeout".into(), policy.timeout_ms.to_string()));
    let mut saved = Vec::with_capacity(overrides.len());
    for (name, _) in &overrides {
        check_identifier(name)?;
        if !saved.iter().any(|(n, _): &(String, String)| n == name) {
            saved.push((name.clone(), session.show(name)?));
        }
    }
    let result = apply(session, &overrides).and_then(|_| run_repetitions(session, sql, directive, policy));
    let restored = apply(session, &saved);
    let (reps, explain, timed_out) = result?;
    restored?;

    let budget = policy.timeout_ms as f64;
    let (planning_ms, execution_ms) = if timed_out {
        (0.0, budget)
    } else {
        pick(&reps, policy.pick)
    };
    Ok(TimingRecord {
        query_id: query_id.clone(),
        adapter: adapter.to_string(),
        inference_ms,
        planning_ms,
        execution_ms,
        end_to_end_ms: inference_ms + planning_ms + execution_ms,
        timed_out,
        repetitions: reps,
        explain,
        error: None,
    })
}

fn apply<C: SqlClient>(session: &mut Session<C>, settings: &[(String, String)]) -> Result<(), MeasureError> {
    for (name, value) in settings {
        session
            .client_mut()
            .execute(&format!("SET {name} = {}", quote_literal(value)))
            .map_err(MeasureError::QueryFailed)?;
    }
    Ok(())
}

type Runs = (Vec<Repetition>, Option<serde_json::Value>, bool);

fn run_repetitions<C: SqlClient>(
    session: &mut Session<C>,
    sql: &str,
    directive: &PlanDirective,
    policy: &TimingPolicy,
) -> Result<Runs, MeasureError> {
    let statement = instrumented_statement(crate::workload::strip_terminator(sql), &directive.hint_text);
    let mut reps = Vec::with_capacity(policy.k);
    let mut explain = None;
    for _ in 0..policy.k {
        let rows = match session.client_mut().query(&statement) {
            Ok(rows) => rows,
            Err(e) if e.is_timeout() => return Ok((reps, explain, true)),
            Err(e) if !directive.hint_text.trim().is_empty() && e.message.to_ascii_lowercase().contains("hint") => {
                return Err(MeasureError::HintRejected(e))
            }
            Err(e) => return Err(MeasureError::QueryFailed(e)),
        };
        let text = rows
            .into_iter()
            .next()
            .and_then(|r| r.into_iter().next().flatten())
            .ok_or_else(|| MeasureError::BadExplain("explain returned no rows".into()))?;
        let (rep, value) = parse_explain_json(&text)?;
        reps.push(rep);
        explain = Some(value);
    }
    Ok((reps, explain, false))
}

fn pick(reps: &[Repetition], how: Pick) -> (f64, f64) {
    let planning: Vec<f64> = reps.iter().map(|r| r.planning_ms).collect();
    let execution: Vec<f64> = reps.iter().map(|r| r.execution_ms).collect();
    match how {
        Pick::Kth => {
            let last = reps[reps.len() - 1];
            (last.planning_ms, last.execution_ms)
        }
        Pick::Mean => (stats::mean(&planning), stats::mean(&execution)),
        Pick::Geomean => (stats::geomean(&planning), stats::geomean(&execution)),
    }
}

/// Normalised differences between successive executions of each query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuccessiveDiffs {
    /// `per_lag[i]` summarises lag `i + 1` across queries.
    pub per_lag: Vec<Summary>,
    /// One row per query and lag.
    pub rows: Vec<DiffRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffRow {
    pub lag: usize,
    pub query_id: QueryId,
    pub diff: f64,
}

/// For each lag `k` in `1..=max_lag` and each query, `(t[k] − t[k−1]) / t[0]`.
pub fn successive_diffs(runs: &BTreeMap<QueryId, Vec<f64>>, max_lag: usize) -> Result<SuccessiveDiffs, DiffError> {
    if max_lag == 0 {
        return Err(DiffError::ZeroLag);
    }
    for (id, times) in runs {
        if times.len() < max_lag + 1 {
            return Err(DiffError::InsufficientRuns {
                query: id.clone(),
                got: times.len(),
                needed: max_lag + 1,
                lag: max_lag,
            });
        }
        if !(times[0] > 0.0) {
            return Err(DiffError::NonPositiveBase(id.clone()));
        }
    }
    let mut rows = Vec::new();
    let mut per_lag = Vec::new();
    for lag in 1..=max_lag {
        let diffs: Vec<f64> = runs
            .values()
            .map(|t| (t[lag] - t[lag - 1]) / t[0])
            .collect();
        for (id, &diff) in runs.keys().zip(&diffs) {
            rows.push(DiffRow {
                lag,
                query_id: id.clone(),
                diff,
            });
        }
        if let Some(summary) = Summary::of(&diffs) {
            per_lag.push(summary);
        }
    }
    Ok(SuccessiveDiffs { per_lag, rows })
}
