//! Planner-toggle ablations: every query measured with and without a toggle,
//! with a rank test across repeated runs per arm.

use std::collections::BTreeMap;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{RunError, HARNESS_VERSION};
use crate::adapters::PlanDirective;
use crate::dbms::client::SqlClient;
use crate::dbms::profile::REGISTRY;
use crate::dbms::{quote_literal, set_geqo, ConfigProfile, DbmsError, Session};
use crate::measurement::{measure_query, Pick, TimingPolicy, TimingRecord};
use crate::stats::{self, mann_whitney_u, speedup_factor, Alternative, Factor};
use crate::workload::{QueryId, Workload};

pub const DEFAULT_DELTA_THRESHOLD_MS: f64 = 250.0;
pub const DEFAULT_REPEATS_PER_ARM: usize = 10;
pub const SIGNIFICANCE_LEVEL: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Toggle {
    /// Bitmap and TID scans disabled.
    ScansOff,
    /// Genetic optimizer disabled.
    GeqoOff,
}

impl Toggle {
    pub fn name(self) -> &'static str {
        match self {
            Toggle::ScansOff => "scans_off",
            Toggle::GeqoOff => "geqo_off",
        }
    }

    pub fn settings(self) -> Vec<(String, String)> {
        let pairs: &[(&str, &str)] = match self {
            Toggle::ScansOff => &[("enable_bitmapscan", "off"), ("enable_tidscan", "off")],
            Toggle::GeqoOff => &[("geqo", "off")],
        };
        pairs.iter().map(|(n, v)| (n.to_string(), v.to_string())).collect()
    }
}

impl FromStr for Toggle {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.replace('-', "_").as_str() {
            "scans_off" => Ok(Toggle::ScansOff),
            "geqo_off" => Ok(Toggle::GeqoOff),
            other => Err(format!("unknown toggle `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AblationConfig {
    pub delta_threshold_ms: f64,
    pub repeats_per_arm: usize,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            delta_threshold_ms: DEFAULT_DELTA_THRESHOLD_MS,
            repeats_per_arm: DEFAULT_REPEATS_PER_ARM,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub query_id: QueryId,
    pub baseline: TimingRecord,
    pub toggled: TimingRecord,
    /// Execution times of the sampled runs, per arm.
    pub baseline_samples: Vec<f64>,
    pub toggled_samples: Vec<f64>,
    /// Toggled mean minus baseline mean.
    pub mean_delta_ms: Option<f64>,
    pub p_value: Option<f64>,
    /// The toggled arm relative to the baseline.
    pub factor: Option<Factor>,
    pub exceeds_threshold: bool,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub harness_version: String,
    pub toggle: Toggle,
    pub dbms: String,
    pub profile: ConfigProfile,
    pub policy: TimingPolicy,
    pub config: AblationConfig,
    /// Live settings that differ between the arms, as (name, baseline, toggled).
    pub settings_diff: Vec<(String, String, String)>,
    pub started: DateTime<Utc>,
    pub finished: DateTime<Utc>,
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    pub fn exceeding(&self) -> usize {
        self.rows.iter().filter(|r| r.exceeds_threshold).count()
    }

    pub fn exceeding_and_significant(&self) -> usize {
        self.rows.iter().filter(|r| r.exceeds_threshold && r.significant).count()
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// Flags for one query from its two arm samples.
pub fn judge(baseline: &[f64], toggled: &[f64], threshold_ms: f64) -> (Option<f64>, Option<f64>, bool, bool) {
    if baseline.is_empty() || toggled.is_empty() {
        return (None, None, false, false);
    }
    let delta = stats::mean(toggled) - stats::mean(baseline);
    let p = mann_whitney_u(baseline, toggled, Alternative::TwoSided).ok().map(|t| t.p_value);
    let exceeds = delta.abs() > threshold_ms;
    let significant = p.is_some_and(|p| p < SIGNIFICANCE_LEVEL);
    (Some(delta), p, exceeds, significant)
}

/// Live value of every registry parameter plus `geqo`.
fn snapshot<C: SqlClient>(session: &mut Session<C>) -> Result<BTreeMap<String, String>, RunError> {
    let mut out = BTreeMap::new();
    for entry in REGISTRY {
        out.insert(entry.name.to_string(), session.show(entry.name)?);
    }
    Ok(out)
}

/// Measures each query in a baseline arm and a toggled arm.
///
/// Each arm runs the query `policy.k − 1 + repeats_per_arm` times back to
/// back; the first `k − 1` runs warm the cache and the remaining runs form
/// the arm's sample.
pub fn run_ablation<C: SqlClient>(
    session: &mut Session<C>,
    workload: &Workload,
    toggle: Toggle,
    profile: &ConfigProfile,
    policy: &TimingPolicy,
    config: &AblationConfig,
) -> Result<AblationReport, RunError> {
    let started = Utc::now();
    set_geqo(session, true, profile)?;
    let toggled_directive = PlanDirective {
        session_settings: toggle.settings(),
        ..PlanDirective::default()
    };

    let before = snapshot(session)?;
    for (name, value) in &toggle.settings() {
        session.client_mut().execute(&format!("SET {name} = {}", quote_literal(value))).map_err(DbmsError::from)?;
    }
    let during = snapshot(session)?;
    for (name, _) in &toggle.settings() {
        session
            .client_mut()
            .execute(&format!("SET {name} = {}", quote_literal(&before[name])))
            .map_err(DbmsError::from)?;
    }
    let settings_diff = before
        .iter()
        .filter(|(n, v)| during.get(*n) != Some(*v))
        .map(|(n, v)| (n.clone(), v.clone(), during[n].clone()))
        .collect();

    let warmup = policy.k.saturating_sub(1);
    let arm_policy = TimingPolicy {
        k: warmup + config.repeats_per_arm.max(1),
        pick: Pick::Kth,
        timeout_ms: policy.timeout_ms,
    };
    let arm = |session: &mut Session<C>, id: &QueryId, sql: &str, directive: &PlanDirective| {
        match measure_query(session, id, sql, directive, &arm_policy, toggle.name(), 0.0) {
            Ok(record) => {
                let samples: Vec<f64> = if record.timed_out {
                    Vec::new()
                } else {
                    record.repetitions.iter().skip(warmup).map(|r| r.execution_ms).collect()
                };
                (record, samples)
            }
            Err(e) => (TimingRecord::failed(id.clone(), toggle.name(), 0.0, e), Vec::new()),
        }
    };

    let mut rows = Vec::with_capacity(workload.len());
    for query in workload.queries() {
        let (baseline, baseline_samples) = arm(session, &query.id, &query.sql_text, &PlanDirective::native());
        let (toggled, toggled_samples) = arm(session, &query.id, &query.sql_text, &toggled_directive);
        let (mean_delta_ms, p_value, exceeds_threshold, significant) =
            judge(&baseline_samples, &toggled_samples, config.delta_threshold_ms);
        let factor = if baseline_samples.is_empty() || toggled_samples.is_empty() {
            None
        } else {
            speedup_factor(stats::mean(&baseline_samples), stats::mean(&toggled_samples)).ok()
        };
        rows.push(AblationRow {
            query_id: query.id.clone(),
            baseline,
            toggled,
            baseline_samples,
            toggled_samples,
            mean_delta_ms,
            p_value,
            factor,
            exceeds_threshold,
            significant,
        });
    }
    Ok(AblationReport {
        harness_version: HARNESS_VERSION.to_string(),
        toggle,
        dbms: session.identity().to_string(),
        profile: profile.clone(),
        policy: *policy,
        config: *config,
        settings_diff,
        started,
        finished: Utc::now(),
        rows,
    })
}
