//! DBMS sessions: configuration profiles, verification, statistics refresh
//! and GEQO control.
//!
//! A [`Session`] owns exactly one [`SqlClient`], the single command channel
//! used for measurement. Session-scope parameters of a profile are applied with
//! `SET` when the session opens; server-scope parameters are only read back
//! and compared, never written.

pub mod client;
pub mod profile;
pub mod scripted;

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use client::{DbError, PgClient, SqlClient};
pub use profile::{ConfigParam, ConfigProfile, GeqoPolicy, Scope};
pub use scripted::{ExplainOutcome, ScriptedClient};

/// Environment variable holding the connection descriptor.
pub const DSN_ENV: &str = "QOBENCH_DSN";

/// Per-statement budget applied when the caller does not choose one.
pub const DEFAULT_STATEMENT_TIMEOUT_MS: u64 = 5 * 60 * 1000;

#[derive(Debug, Error)]
pub enum DbmsError {
    #[error("connection failed: {0}")]
    ConnectionFailed(String),
    #[error("configuration mismatch: {}", format_mismatches(.0))]
    ConfigMismatch(Vec<Mismatch>),
    #[error("query failed: {0}")]
    QueryFailed(#[from] DbError),
    #[error("unknown configuration parameter `{0}`")]
    UnknownParameter(String),
    #[error("parameter `{0}` listed twice in profile")]
    DuplicateParameter(String),
    #[error("profile file: {0}")]
    ProfileFormat(String),
    #[error("invalid identifier `{0}`")]
    BadIdentifier(String),
}

fn format_mismatches(m: &[Mismatch]) -> String {
    m.iter()
        .map(|m| format!("{} expected {} got {}", m.name, m.expected, m.actual))
        .collect::<Vec<_>>()
        .join("; ")
}

/// A parameter whose live value differs from the profile.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mismatch {
    pub name: String,
    pub expected: String,
    pub actual: String,
    pub scope: Scope,
}

#[derive(Debug, Clone)]
pub struct ConnectOptions {
    /// Keep the session even when verification reports mismatches.
    pub allow_mismatch: bool,
    pub statement_timeout_ms: u64,
    /// Libraries loaded with `LOAD` after connecting, e.g. the hint extension.
    pub load: Vec<String>,
}

impl Default for ConnectOptions {
    fn default() -> Self {
        Self {
            allow_mismatch: false,
            statement_timeout_ms: DEFAULT_STATEMENT_TIMEOUT_MS,
            load: Vec::new(),
        }
    }
}

/// An open connection with the settings the harness applied to it.
pub struct Session<C = PgClient> {
    client: C,
    identity: String,
    applied: Vec<(String, String)>,
    statement_timeout_ms: u64,
    last_verification: Vec<Mismatch>,
}

/// Connects to PostgreSQL and applies `profile`.
pub fn connect(dsn: &str, profile: &ConfigProfile, options: &ConnectOptions) -> Result<Session<PgClient>, DbmsError> {
    let client = PgClient::connect(dsn).map_err(|e| DbmsError::ConnectionFailed(e.to_string()))?;
    Session::open(client, profile, options)
}

impl<C: SqlClient> Session<C> {
    /// Wraps an established client: loads libraries, applies session-scope
    /// parameters and the statement timeout, then verifies the whole profile.
    pub fn open(client: C, profile: &ConfigProfile, options: &ConnectOptions) -> Result<Self, DbmsError> {
        let identity = client.identity();
        let mut session = Session {
            client,
            identity,
            applied: Vec::new(),
            statement_timeout_ms: options.statement_timeout_ms,
            last_verification: Vec::new(),
        };
        for lib in &options.load {
            session.client.execute(&format!("LOAD {}", quote_literal(lib)))?;
        }
        session.apply_profile(profile)?;
        session.set("statement_timeout", &options.statement_timeout_ms.to_string())?;
        let mismatches = verify_config(&mut session, profile)?;
        if !mismatches.is_empty() && !options.allow_mismatch {
            return Err(DbmsError::ConfigMismatch(mismatches));
        }
        session.last_verification = mismatches;
        Ok(session)
    }

    /// Applies every session-scope parameter of `profile`. Idempotent.
    pub fn apply_profile(&mut self, profile: &ConfigProfile) -> Result<(), DbmsError> {
        for param in profile.session_params() {
            self.set(&param.name, &param.expected)?;
        }
        Ok(())
    }

    pub fn set(&mut self, name: &str, value: &str) -> Result<(), DbmsError> {
        check_identifier(name)?;
        self.client
            .execute(&format!("SET {name} = {}", quote_literal(value)))?;
        match self.applied.iter_mut().find(|(n, _)| n == name) {
            Some(slot) => slot.1 = value.to_string(),
            None => self.applied.push((name.to_string(), value.to_string())),
        }
        Ok(())
    }

    /// Live value through `SHOW`.
    pub fn show(&mut self, name: &str) -> Result<String, DbmsError> {
        check_identifier(name)?;
        let rows = self.client.query(&format!("SHOW {name}"))?;
        rows.into_iter()
            .next()
            .and_then(|r| r.into_iter().next().flatten())
            .ok_or_else(|| DbmsError::QueryFailed(DbError::new(None, format!("SHOW {name} returned no value"))))
    }

    pub fn client(&self) -> &C {
        &self.client
    }

    pub fn client_mut(&mut self) -> &mut C {
        &mut self.client
    }

    pub fn into_client(self) -> C {
        self.client
    }

    pub fn identity(&self) -> &str {
        &self.identity
    }

    /// Settings the harness has written on this session, in first-set order.
    pub fn applied(&self) -> &[(String, String)] {
        &self.applied
    }

    pub fn statement_timeout_ms(&self) -> u64 {
        self.statement_timeout_ms
    }

    /// Mismatches found when the session opened (empty unless
    /// [`ConnectOptions::allow_mismatch`] was set).
    pub fn last_verification(&self) -> &[Mismatch] {
        &self.last_verification
    }
}

/// Compares every parameter of `profile` against the live value, unit-aware.
pub fn verify_config<C: SqlClient>(session: &mut Session<C>, profile: &ConfigProfile) -> Result<Vec<Mismatch>, DbmsError> {
    let mut mismatches = Vec::new();
    for param in &profile.params {
        let actual = session.show(&param.name)?;
        if !profile::settings_equal(&actual, &param.expected) {
            mismatches.push(Mismatch {
                name: param.name.clone(),
                expected: param.expected.clone(),
                actual,
                scope: param.scope,
            });
        }
    }
    Ok(mismatches)
}

/// Runs `ANALYZE` on the listed tables (all tables when `None`) and returns
/// the elapsed wall-clock milliseconds.
pub fn refresh_statistics<C: SqlClient>(session: &mut Session<C>, tables: Option<&[String]>) -> Result<f64, DbmsError> {
    let statement = match tables {
        None | Some([]) => "ANALYZE".to_string(),
        Some(list) => {
            let quoted = list.iter().map(|t| quote_ident(t)).collect::<Result<Vec<_>, _>>()?;
            format!("ANALYZE {}", quoted.join(", "))
        }
    };
    let start = Instant::now();
    session.client.execute(&statement)?;
    Ok(start.elapsed().as_secs_f64() * 1000.0)
}

/// Sets `geqo` according to the profile's policy and returns the applied state.
pub fn set_geqo<C: SqlClient>(session: &mut Session<C>, native_execution: bool, profile: &ConfigProfile) -> Result<bool, DbmsError> {
    let on = profile.geqo_policy.geqo_on(native_execution);
    session.set("geqo", if on { "on" } else { "off" })?;
    Ok(on)
}

pub(crate) fn check_identifier(name: &str) -> Result<(), DbmsError> {
    let ok = !name.is_empty()
        && name
            .chars()
            .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_' || c == '.');
    if ok {
        Ok(())
    } else {
        Err(DbmsError::BadIdentifier(name.to_string()))
    }
}

pub(crate) fn quote_literal(value: &str) -> String {
    format!("'{}'", value.replace('\'', "''"))
}

/// Plain lower-case identifiers pass through; anything else is double-quoted.
/// Schema-qualified names are quoted part by part.
pub(crate) fn quote_ident(name: &str) -> Result<String, DbmsError> {
    if name.is_empty() || name.contains('\0') {
        return Err(DbmsError::BadIdentifier(name.to_string()));
    }
    let parts: Vec<String> = name
        .split('.')
        .map(|part| {
            let plain = !part.is_empty()
                && part.chars().all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
                && !part.starts_with(|c: char| c.is_ascii_digit());
            if plain {
                part.to_string()
            } else {
                format!("\"{}\"", part.replace('"', "\"\""))
            }
        })
        .collect();
    Ok(parts.join("."))
}
