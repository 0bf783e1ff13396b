//! An in-memory stand-in for a PostgreSQL connection.
//!
//! [`ScriptedClient`] understands the handful of statements the harness
//! issues (`SET`, `RESET`, `SHOW`, `ANALYZE`, `LOAD`, and instrumented
//! `EXPLAIN`) and answers `EXPLAIN` calls from a user-supplied script. It
//! honours `statement_timeout` the way the server does, by cancelling any
//! execution that would run past the budget. Every statement is logged so
//! tests can check ordering and settings.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use super::client::{DbError, Rows, SqlClient, SQLSTATE_QUERY_CANCELED, SQLSTATE_UNDEFINED_TABLE};
use super::profile::{self, normalize_setting, Normalized, Scope};

/// What a scripted `EXPLAIN ANALYZE` call returns.
#[derive(Debug, Clone, PartialEq)]
pub enum ExplainOutcome {
    Times { planning_ms: f64, execution_ms: f64 },
    Error(DbError),
}

impl ExplainOutcome {
    pub fn times(planning_ms: f64, execution_ms: f64) -> Self {
        ExplainOutcome::Times {
            planning_ms,
            execution_ms,
        }
    }
}

/// The request seen by a responder.
#[derive(Debug, Clone)]
pub struct ExplainCall<'a> {
    pub hint: Option<&'a str>,
    pub sql: &'a str,
    pub settings: &'a BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoggedStatement {
    pub hint: Option<String>,
    pub sql: String,
}

type Responder = Box<dyn FnMut(&ExplainCall<'_>) -> ExplainOutcome + Send>;

pub struct ScriptedClient {
    settings: BTreeMap<String, String>,
    tables: BTreeSet<String>,
    responder: Responder,
    log: Vec<LoggedStatement>,
    name: String,
}

impl Default for ScriptedClient {
    fn default() -> Self {
        Self::new()
    }
}

impl ScriptedClient {
    /// Registry defaults for every setting; every `EXPLAIN` reports 0.5 ms
    /// planning and 10 ms execution.
    pub fn new() -> Self {
        let settings = profile::REGISTRY
            .iter()
            .map(|e| (e.name.to_string(), e.default.to_string()))
            .collect();
        Self {
            settings,
            tables: BTreeSet::new(),
            responder: Box::new(|_| ExplainOutcome::times(0.5, 10.0)),
            log: Vec::new(),
            name: "scripted".into(),
        }
    }

    pub fn with_responder(mut self, f: impl FnMut(&ExplainCall<'_>) -> ExplainOutcome + Send + 'static) -> Self {
        self.responder = Box::new(f);
        self
    }

    /// Answers `EXPLAIN` calls from a queue, then falls back to `fallback`.
    pub fn with_queue(self, outcomes: impl IntoIterator<Item = ExplainOutcome>, fallback: ExplainOutcome) -> Self {
        let mut queue: VecDeque<ExplainOutcome> = outcomes.into_iter().collect();
        self.with_responder(move |_| queue.pop_front().unwrap_or_else(|| fallback.clone()))
    }

    pub fn with_tables<S: Into<String>>(mut self, tables: impl IntoIterator<Item = S>) -> Self {
        self.tables.extend(tables.into_iter().map(Into::into));
        self
    }

    /// Sets a live value directly, bypassing scope checks (for server-scope
    /// parameters that a session cannot change).
    pub fn with_setting(mut self, name: &str, value: &str) -> Self {
        self.settings.insert(name.to_string(), value.to_string());
        self
    }

    pub fn with_name(mut self, name: &str) -> Self {
        self.name = name.to_string();
        self
    }

    pub fn log(&self) -> &[LoggedStatement] {
        &self.log
    }

    pub fn clear_log(&mut self) {
        self.log.clear();
    }

    pub fn setting(&self, name: &str) -> Option<&str> {
        self.settings.get(name).map(String::as_str)
    }

    fn run_one(&mut self, statement: &str) -> Result<Rows, DbError> {
        let (hint, body) = split_hint(statement);
        self.log.push(LoggedStatement {
            hint: hint.map(str::to_string),
            sql: body.to_string(),
        });
        let words: Vec<&str> = body.split_whitespace().collect();
        let keyword = words.first().map(|w| w.to_ascii_uppercase()).unwrap_or_default();
        match keyword.as_str() {
            "SET" => {
                let (name, value) = parse_set(body).ok_or_else(|| DbError::new(Some("42601"), "syntax error in SET"))?;
                let entry = profile::lookup(&name).ok_or_else(|| {
                    DbError::new(Some("42704"), format!("unrecognized configuration parameter \"{name}\""))
                })?;
                if entry.scope == Scope::Server {
                    return Err(DbError::new(
                        Some("55P02"),
                        format!("parameter \"{name}\" cannot be changed without restarting the server"),
                    ));
                }
                self.settings.insert(name, value);
                Ok(Vec::new())
            }
            "RESET" => {
                let name = words.get(1).map(|w| w.to_ascii_lowercase()).unwrap_or_default();
                let entry = profile::lookup(&name)
                    .ok_or_else(|| DbError::new(Some("42704"), format!("unrecognized configuration parameter \"{name}\"")))?;
                self.settings.insert(name, entry.default.to_string());
                Ok(Vec::new())
            }
            "SHOW" => {
                let name = words.get(1).map(|w| w.to_ascii_lowercase()).unwrap_or_default();
                match self.settings.get(&name) {
                    Some(v) => Ok(vec![vec![Some(v.clone())]]),
                    None => Err(DbError::new(
                        Some("42704"),
                        format!("unrecognized configuration parameter \"{name}\""),
                    )),
                }
            }
            "ANALYZE" => {
                for table in words[1..].iter().map(|t| t.trim_matches(|c| c == ',' || c == '"')) {
                    if !table.is_empty() && !self.tables.contains(table) {
                        return Err(DbError::new(
                            Some(SQLSTATE_UNDEFINED_TABLE),
                            format!("relation \"{table}\" does not exist"),
                        ));
                    }
                }
                Ok(Vec::new())
            }
            "EXPLAIN" => {
                let sql = body
                    .find(')')
                    .map(|i| body[i + 1..].trim())
                    .unwrap_or(body);
                let call = ExplainCall {
                    hint,
                    sql,
                    settings: &self.settings,
                };
                match (self.responder)(&call) {
                    ExplainOutcome::Error(e) => Err(e),
                    ExplainOutcome::Times {
                        planning_ms,
                        execution_ms,
                    } => {
                        let budget = match normalize_setting(self.settings.get("statement_timeout").map_or("0", |s| s)) {
                            Normalized::Millis(ms) => ms,
                            Normalized::Number(ms) => ms,
                            _ => 0.0,
                        };
                        if budget > 0.0 && planning_ms + execution_ms > budget {
                            return Err(DbError::new(
                                Some(SQLSTATE_QUERY_CANCELED),
                                "canceling statement due to statement timeout",
                            ));
                        }
                        let json = serde_json::json!([{
                            "Plan": {"Node Type": "Result", "Actual Total Time": execution_ms},
                            "Planning Time": planning_ms,
                            "Triggers": [],
                            "Execution Time": execution_ms,
                        }]);
                        Ok(vec![vec![Some(json.to_string())]])
                    }
                }
            }
            _ => Ok(Vec::new()),
        }
    }
}

fn split_hint(statement: &str) -> (Option<&str>, &str) {
    let trimmed = statement.trim();
    if trimmed.starts_with("/*+") {
        if let Some(end) = trimmed.find("*/") {
            return (Some(&trimmed[..end + 2]), trimmed[end + 2..].trim());
        }
    }
    (None, trimmed)
}

fn parse_set(body: &str) -> Option<(String, String)> {
    let rest = body.trim()[3..].trim();
    let rest = rest.strip_prefix("SESSION ").unwrap_or(rest).trim();
    let (name, value) = match rest.split_once('=') {
        Some((n, v)) => (n, v),
        None => {
            let idx = rest.to_ascii_uppercase().find(" TO ")?;
            (&rest[..idx], &rest[idx + 4..])
        }
    };
    let value = value.trim().trim_end_matches(';').trim();
    let value = value
        .strip_prefix('\'')
        .and_then(|v| v.strip_suffix('\''))
        .map(|v| v.replace("''", "'"))
        .unwrap_or_else(|| value.to_string());
    Some((name.trim().to_ascii_lowercase(), value))
}

impl SqlClient for ScriptedClient {
    fn execute(&mut self, sql: &str) -> Result<(), DbError> {
        for statement in sql.split(';').map(str::trim).filter(|s| !s.is_empty()) {
            self.run_one(statement)?;
        }
        Ok(())
    }

    fn query(&mut self, sql: &str) -> Result<Rows, DbError> {
        self.run_one(sql.trim().trim_end_matches(';'))
    }

    fn identity(&self) -> String {
        self.name.clone()
    }
}
