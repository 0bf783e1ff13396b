//! Configuration profiles and the built-in parameter registry.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::DbmsError;

/// Whether a parameter can be set per connection or only inspected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    Session,
    Server,
}

pub struct RegistryEntry {
    pub name: &'static str,
    pub scope: Scope,
    /// The server default, used when a profile asks for `"default"`.
    pub default: &'static str,
}

const fn entry(name: &'static str, scope: Scope, default: &'static str) -> RegistryEntry {
    RegistryEntry { name, scope, default }
}

/// Known parameters with their scope and PostgreSQL default.
pub const REGISTRY: &[RegistryEntry] = &[
    entry("autovacuum", Scope::Server, "on"),
    entry("default_statistics_target", Scope::Session, "100"),
    entry("effective_cache_size", Scope::Session, "4GB"),
    entry("effective_io_concurrency", Scope::Session, "1"),
    entry("enable_async_append", Scope::Session, "on"),
    entry("enable_bitmapscan", Scope::Session, "on"),
    entry("enable_gathermerge", Scope::Session, "on"),
    entry("enable_hashagg", Scope::Session, "on"),
    entry("enable_hashjoin", Scope::Session, "on"),
    entry("enable_incremental_sort", Scope::Session, "on"),
    entry("enable_indexonlyscan", Scope::Session, "on"),
    entry("enable_indexscan", Scope::Session, "on"),
    entry("enable_material", Scope::Session, "on"),
    entry("enable_memoize", Scope::Session, "on"),
    entry("enable_mergejoin", Scope::Session, "on"),
    entry("enable_nestloop", Scope::Session, "on"),
    entry("enable_parallel_append", Scope::Session, "on"),
    entry("enable_parallel_hash", Scope::Session, "on"),
    entry("enable_partition_pruning", Scope::Session, "on"),
    entry("enable_partitionwise_aggregate", Scope::Session, "off"),
    entry("enable_partitionwise_join", Scope::Session, "off"),
    entry("enable_seqscan", Scope::Session, "on"),
    entry("enable_sort", Scope::Session, "on"),
    entry("enable_tidscan", Scope::Session, "on"),
    entry("from_collapse_limit", Scope::Session, "8"),
    entry("geqo", Scope::Session, "on"),
    entry("geqo_threshold", Scope::Session, "12"),
    entry("jit", Scope::Session, "on"),
    entry("join_collapse_limit", Scope::Session, "8"),
    entry("maintenance_work_mem", Scope::Session, "64MB"),
    entry("max_connections", Scope::Server, "100"),
    entry("max_parallel_workers", Scope::Session, "8"),
    entry("max_parallel_workers_per_gather", Scope::Session, "2"),
    entry("max_worker_processes", Scope::Server, "8"),
    entry("random_page_cost", Scope::Session, "4"),
    entry("seq_page_cost", Scope::Session, "1"),
    entry("shared_buffers", Scope::Server, "128MB"),
    entry("statement_timeout", Scope::Session, "0"),
    entry("temp_buffers", Scope::Session, "8MB"),
    entry("work_mem", Scope::Session, "4MB"),
];

pub fn lookup(name: &str) -> Option<&'static RegistryEntry> {
    REGISTRY.iter().find(|e| e.name == name)
}

/// Parameter names a plan directive may set for a single query: the planner
/// enable-toggles, `geqo` and `join_collapse_limit`.
pub fn directive_allowed(name: &str) -> bool {
    (name.starts_with("enable_") && lookup(name).is_some()) || name == "geqo" || name == "join_collapse_limit"
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfigParam {
    pub name: String,
    pub expected: String,
    pub scope: Scope,
}

impl ConfigParam {
    /// Builds a parameter whose scope comes from the registry. `"default"`
    /// resolves to the registry default.
    pub fn new(name: &str, expected: &str) -> Result<Self, DbmsError> {
        let entry = lookup(name).ok_or_else(|| DbmsError::UnknownParameter(name.to_string()))?;
        let expected = if expected.eq_ignore_ascii_case("default") {
            entry.default
        } else {
            expected
        };
        Ok(Self {
            name: entry.name.to_string(),
            expected: expected.to_string(),
            scope: entry.scope,
        })
    }
}

/// When the genetic optimizer is enabled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeqoPolicy {
    /// On only when the DBMS plans the query itself.
    OnForNativeOnly,
    AlwaysOn,
    AlwaysOff,
}

impl GeqoPolicy {
    pub fn geqo_on(self, native_execution: bool) -> bool {
        match self {
            GeqoPolicy::OnForNativeOnly => native_execution,
            GeqoPolicy::AlwaysOn => true,
            GeqoPolicy::AlwaysOff => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfigProfile {
    pub name: String,
    pub params: Vec<ConfigParam>,
    pub geqo_policy: GeqoPolicy,
}

impl ConfigProfile {
    pub fn new(name: impl Into<String>, params: Vec<ConfigParam>, geqo_policy: GeqoPolicy) -> Result<Self, DbmsError> {
        let mut seen = BTreeSet::new();
        for p in &params {
            if !seen.insert(p.name.as_str()) {
                return Err(DbmsError::DuplicateParameter(p.name.clone()));
            }
        }
        Ok(Self {
            name: name.into(),
            params,
            geqo_policy,
        })
    }

    /// No parameters and the DBMS's own GEQO behaviour.
    pub fn empty() -> Self {
        Self {
            name: "empty".into(),
            params: Vec::new(),
            geqo_policy: GeqoPolicy::AlwaysOn,
        }
    }

    /// The benchmark's reference configuration: enlarged memory settings,
    /// eight worker processes, autovacuum off, and GEQO only for natively
    /// planned queries.
    pub fn framework() -> Self {
        let params = [
            ("work_mem", "4GB"),
            ("shared_buffers", "32GB"),
            ("temp_buffers", "32GB"),
            ("effective_cache_size", "32GB"),
            ("max_worker_processes", "8"),
            ("autovacuum", "off"),
        ]
        .into_iter()
        .map(|(n, v)| ConfigParam::new(n, v).expect("registry entry"))
        .collect();
        Self::new("framework", params, GeqoPolicy::OnForNativeOnly).expect("no duplicates")
    }

    pub fn session_params(&self) -> impl Iterator<Item = &ConfigParam> {
        self.params.iter().filter(|p| p.scope == Scope::Session)
    }

    pub fn get(&self, name: &str) -> Option<&ConfigParam> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn to_json(&self) -> String {
        let file = ProfileFile {
            name: self.name.clone(),
            geqo_policy: self.geqo_policy,
            params: self
                .params
                .iter()
                .map(|p| ParamEntry {
                    name: p.name.clone(),
                    expected: p.expected.clone(),
                })
                .collect(),
        };
        let mut s = serde_json::to_string_pretty(&file).expect("profile serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, DbmsError> {
        let file: ProfileFile = serde_json::from_str(text).map_err(|e| DbmsError::ProfileFormat(e.to_string()))?;
        let params = file
            .params
            .iter()
            .map(|p| ConfigParam::new(&p.name, &p.expected))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(file.name, params, file.geqo_policy)
    }

    pub fn load(path: &Path) -> Result<Self, DbmsError> {
        let text = fs::read_to_string(path).map_err(|e| DbmsError::ProfileFormat(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

#[derive(Serialize, Deserialize)]
struct ProfileFile {
    name: String,
    geqo_policy: GeqoPolicy,
    params: Vec<ParamEntry>,
}

#[derive(Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    expected: String,
}

/// A setting value reduced to a comparable form.
#[derive(Debug, Clone, PartialEq)]
pub enum Normalized {
    Bytes(u128),
    Millis(f64),
    Bool(bool),
    Number(f64),
    Text(String),
}

/// Reduces a setting to canonical units. Memory sizes (`B`, `kB`, `MB`,
/// `GB`, `TB`, powers of 1024) become bytes, durations (`us`, `ms`, `s`,
/// `min`, `h`, `d`) become milliseconds, and boolean spellings become booleans.
pub fn normalize_setting(raw: &str) -> Normalized {
    let s = raw.trim().trim_matches('\'');
    let lower = s.to_ascii_lowercase();
    match lower.as_str() {
        "on" | "true" | "yes" => return Normalized::Bool(true),
        "off" | "false" | "no" => return Normalized::Bool(false),
        _ => {}
    }
    let split = s
        .find(|c: char| !(c.is_ascii_digit() || c == '.' || c == '-' || c == '+'))
        .unwrap_or(s.len());
    let (number, unit) = (s[..split].trim(), s[split..].trim());
    let Ok(value) = number.parse::<f64>() else {
        return Normalized::Text(lower);
    };
    let memory = match unit {
        "B" => Some(1u128),
        "kB" | "KB" | "kb" => Some(1 << 10),
        "MB" | "mb" => Some(1 << 20),
        "GB" | "gb" => Some(1 << 30),
        "TB" | "tb" => Some(1 << 40),
        _ => None,
    };
    if let Some(scale) = memory {
        if value >= 0.0 {
            return Normalized::Bytes((value * scale as f64).round() as u128);
        }
    }
    let time = match unit {
        "us" => Some(0.001),
        "ms" => Some(1.0),
        "s" => Some(1000.0),
        "min" => Some(60_000.0),
        "h" => Some(3_600_000.0),
        "d" => Some(86_400_000.0),
        _ => None,
    };
    if let Some(scale) = time {
        return Normalized::Millis(value * scale);
    }
    if unit.is_empty() {
        Normalized::Number(value)
    } else {
        Normalized::Text(lower)
    }
}

pub fn settings_equal(a: &str, b: &str) -> bool {
    normalize_setting(a) == normalize_setting(b)
}
