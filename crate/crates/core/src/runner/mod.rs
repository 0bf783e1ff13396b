//! Experiment orchestration: benchmark runs over a split and a set of
//! adapters, planner-toggle ablations, and covariate-shift scripts.

pub mod ablation;
pub mod covariate;

use std::collections::BTreeSet;
use std::time::Duration;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adapters::{validate_directive, Adapter, AdapterDescriptor, AdapterError, AdapterKind, PlanDirective};
use crate::dbms::client::SqlClient;
use crate::dbms::{set_geqo, ConfigProfile, DbmsError, Mismatch, Session};
use crate::measurement::{measure_query, TimingPolicy, TimingRecord};
use crate::splitter::{validate_split, SplitMethod, SplitSpec};
use crate::workload::{Query, Workload};

pub use ablation::{run_ablation, AblationConfig, AblationReport, AblationRow, Toggle};
pub use covariate::{gen_covariate_script, CovariateError, ForeignKey};

/// Version string embedded in every report.
pub const HARNESS_VERSION: &str = concat!("qobench ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Error)]
pub enum RunError {
    #[error("split does not fit the workload: {0}")]
    InvalidSplit(String),
    #[error("adapter name `{0}` used twice")]
    DuplicateAdapter(String),
    #[error(transparent)]
    Dbms(#[from] DbmsError),
}

/// Which side of the split a query belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SetTag {
    Train,
    Test,
}

/// Enough of a split to identify it and check a report against it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitIdentity {
    pub workload: String,
    pub method: SplitMethod,
    pub seed: u64,
    pub label: String,
    pub train_count: usize,
    pub test_count: usize,
}

impl SplitIdentity {
    pub fn of(split: &SplitSpec) -> Self {
        Self {
            workload: split.workload_name.clone(),
            method: split.method,
            seed: split.seed,
            label: split.label(),
            train_count: split.train.len(),
            test_count: split.test.len(),
        }
    }
}

/// One query's outcome under one adapter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub set: SetTag,
    pub hint: String,
    pub settings: Vec<(String, String)>,
    pub meta: String,
    #[serde(flatten)]
    pub timing: TimingRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub harness_version: String,
    pub split: SplitIdentity,
    pub adapter: String,
    pub adapter_kind: AdapterKind,
    pub dbms: String,
    pub profile: ConfigProfile,
    /// Profile parameters whose live value differed when the run started.
    pub mismatches: Vec<Mismatch>,
    pub geqo: bool,
    pub policy: TimingPolicy,
    pub started: DateTime<Utc>,
    pub finished: DateTime<Utc>,
    /// In workload order.
    pub records: Vec<RunRecord>,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub policy: TimingPolicy,
    /// Per-query budget for an adapter's answer.
    pub adapter_timeout: Duration,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            policy: TimingPolicy::default(),
            adapter_timeout: crate::adapters::DEFAULT_ADAPTER_TIMEOUT,
        }
    }
}

/// Measures every query of the workload under each adapter in turn.
///
/// Per-query failures, from the adapter or from the server, are embedded in
/// that query's record; the remaining queries are still measured. An external
/// adapter that crashes or times out is restarted for the next query.
pub fn run_benchmark<C: SqlClient>(
    session: &mut Session<C>,
    workload: &Workload,
    split: &SplitSpec,
    adapters: &[AdapterDescriptor],
    profile: &ConfigProfile,
    options: &RunOptions,
) -> Result<Vec<RunReport>, RunError> {
    let violations = validate_split(workload, split);
    if !violations.is_empty() {
        let text: Vec<String> = violations.iter().map(ToString::to_string).collect();
        return Err(RunError::InvalidSplit(text.join("; ")));
    }
    let mut names = BTreeSet::new();
    for a in adapters {
        if !names.insert(a.name.as_str()) {
            return Err(RunError::DuplicateAdapter(a.name.clone()));
        }
    }
    let mut reports = Vec::with_capacity(adapters.len());
    for descriptor in adapters {
        let started = Utc::now();
        let geqo = set_geqo(session, descriptor.kind == AdapterKind::Native, profile)?;
        let mut adapter: Option<Adapter> = None;
        let mut records = Vec::with_capacity(workload.len());
        for query in workload.queries() {
            let set = if split.contains_test(&query.id) {
                SetTag::Test
            } else {
                SetTag::Train
            };
            records.push(run_one(session, descriptor, &mut adapter, query, set, options));
        }
        reports.push(RunReport {
            harness_version: HARNESS_VERSION.to_string(),
            split: SplitIdentity::of(split),
            adapter: descriptor.name.clone(),
            adapter_kind: descriptor.kind,
            dbms: session.identity().to_string(),
            profile: profile.clone(),
            mismatches: session.last_verification().to_vec(),
            geqo,
            policy: options.policy,
            started,
            finished: Utc::now(),
            records,
        });
    }
    Ok(reports)
}

fn run_one<C: SqlClient>(
    session: &mut Session<C>,
    descriptor: &AdapterDescriptor,
    adapter: &mut Option<Adapter>,
    query: &Query,
    set: SetTag,
    options: &RunOptions,
) -> RunRecord {
    let record = |directive: &PlanDirective, timing: TimingRecord| RunRecord {
        set,
        hint: directive.hint_text.clone(),
        settings: directive.session_settings.clone(),
        meta: directive.meta.clone(),
        timing,
    };
    let empty = PlanDirective::default();
    let name = descriptor.name.as_str();

    if adapter.is_none() {
        match Adapter::start(descriptor, options.adapter_timeout) {
            Ok(a) => *adapter = Some(a),
            Err(e) => return record(&empty, TimingRecord::failed(query.id.clone(), name, 0.0, format!("adapter failed to start: {e}"))),
        }
    }
    let planned = adapter.as_mut().expect("adapter started").plan(query);
    let (directive, inference_ms) = match planned {
        Ok(p) => p,
        Err(e) => {
            let restart = matches!(
                e,
                AdapterError::AdapterTimeout(_) | AdapterError::AdapterCrashed(_) | AdapterError::ProtocolViolation(_)
            );
            if restart {
                *adapter = None;
            }
            let mut timing = TimingRecord::failed(query.id.clone(), name, 0.0, &e);
            if let AdapterError::AdapterTimeout(budget) = e {
                timing.timed_out = true;
                timing.inference_ms = budget.as_secs_f64() * 1000.0;
                timing.end_to_end_ms = timing.inference_ms;
            }
            return record(&empty, timing);
        }
    };
    let violations = validate_directive(&directive);
    if !violations.is_empty() {
        let text: Vec<String> = violations.iter().map(ToString::to_string).collect();
        let timing = TimingRecord::failed(query.id.clone(), name, inference_ms, format!("invalid directive: {}", text.join("; ")));
        return record(&directive, timing);
    }
    let timing = measure_query(session, &query.id, &query.sql_text, &directive, &options.policy, name, inference_ms)
        .unwrap_or_else(|e| TimingRecord::failed(query.id.clone(), name, inference_ms, e));
    record(&directive, timing)
}
