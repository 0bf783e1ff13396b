use std::fmt;

use postgres::{NoTls, SimpleQueryMessage};

/// SQLSTATE raised when a statement is cancelled by `statement_timeout`.
pub const SQLSTATE_QUERY_CANCELED: &str = "57014";
/// SQLSTATE for a reference to a missing table.
pub const SQLSTATE_UNDEFINED_TABLE: &str = "42P01";

/// An error reported by the database for one statement.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DbError {
    pub code: Option<String>,
    pub message: String,
}

impl DbError {
    pub fn new(code: Option<&str>, message: impl Into<String>) -> Self {
        Self {
            code: code.map(str::to_string),
            message: message.into(),
        }
    }

    pub fn is_timeout(&self) -> bool {
        self.code.as_deref() == Some(SQLSTATE_QUERY_CANCELED)
    }
}

impl fmt::Display for DbError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.code {
            Some(code) => write!(f, "[{code}] {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for DbError {}

pub type Rows = Vec<Vec<Option<String>>>;

/// The single command channel to a database. Values come back as text, the
/// way the simple query protocol delivers them.
pub trait SqlClient {
    /// Runs one or more statements, discarding any rows.
    fn execute(&mut self, sql: &str) -> Result<(), DbError>;

    /// Runs one statement and returns its rows.
    fn query(&mut self, sql: &str) -> Result<Rows, DbError>;

    /// Human-readable identity of the connection (host, database).
    fn identity(&self) -> String;
}

/// PostgreSQL over the synchronous `postgres` driver.
pub struct PgClient {
    client: postgres::Client,
    identity: String,
}

impl PgClient {
    pub fn connect(dsn: &str) -> Result<Self, DbError> {
        let config: postgres::Config = dsn.parse().map_err(|e: postgres::Error| DbError::new(None, e.to_string()))?;
        let identity = describe(&config);
        let client = config.connect(NoTls).map_err(convert)?;
        Ok(Self { client, identity })
    }
}

fn describe(config: &postgres::Config) -> String {
    let hosts: Vec<String> = config
        .get_hosts()
        .iter()
        .map(|h| match h {
            postgres::config::Host::Tcp(name) => name.clone(),
            postgres::config::Host::Unix(path) => path.display().to_string(),
        })
        .collect();
    format!(
        "postgres://{}/{}",
        hosts.join(","),
        config.get_dbname().unwrap_or_default()
    )
}

fn convert(err: postgres::Error) -> DbError {
    match err.as_db_error() {
        Some(db) => DbError::new(Some(db.code().code()), db.message()),
        None => DbError::new(err.code().map(|c| c.code()), err.to_string()),
    }
}

impl SqlClient for PgClient {
    fn execute(&mut self, sql: &str) -> Result<(), DbError> {
        self.client.batch_execute(sql).map_err(convert)
    }

    fn query(&mut self, sql: &str) -> Result<Rows, DbError> {
        let messages = self.client.simple_query(sql).map_err(convert)?;
        let mut rows = Vec::new();
        for message in messages {
            if let SimpleQueryMessage::Row(row) = message {
                rows.push((0..row.len()).map(|i| row.get(i).map(str::to_string)).collect());
            }
        }
        Ok(rows)
    }

    fn identity(&self) -> String {
        self.identity.clone()
    }
}
