//! Covariate-shift mutation: a seeded Bernoulli sample of a table's rows is
//! deleted, dependents go with them, and statistics are refreshed.

use std::fmt::Write;
use std::str::FromStr;

use thiserror::Error;

use crate::dbms::quote_ident;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CovariateError {
    #[error("keep fraction must lie strictly between 0 and 1, got {0}")]
    BadFraction(String),
    #[error("seed must lie in [-1, 1], got {0}")]
    BadSeed(String),
    #[error("invalid identifier `{0}`")]
    BadIdentifier(String),
}

/// A column in another table that references the sampled table's key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ForeignKey {
    pub table: String,
    pub column: String,
}

impl FromStr for ForeignKey {
    type Err = CovariateError;

    /// Parses `table.column`; the last dot separates the column.
    fn from_str(s: &str) -> Result<Self, CovariateError> {
        match s.rsplit_once('.') {
            Some((table, column)) if !table.is_empty() && !column.is_empty() => Ok(Self {
                table: table.to_string(),
                column: column.to_string(),
            }),
            _ => Err(CovariateError::BadIdentifier(s.to_string())),
        }
    }
}

fn ident(name: &str) -> Result<String, CovariateError> {
    quote_ident(name).map_err(|_| CovariateError::BadIdentifier(name.to_string()))
}

/// Emits a transaction that keeps roughly `keep_fraction` of `table`'s rows.
///
/// Rows whose draw from the seeded generator is at least `keep_fraction` are
/// deleted. Rows of each listed foreign-key table that reference a deleted
/// row are deleted first; with no foreign keys listed the script relies on
/// the schema's `ON DELETE CASCADE` actions. Statistics of every touched
/// table are refreshed at the end.
///
/// ```
/// use qobench::runner::gen_covariate_script;
///
/// let script = gen_covariate_script("title", "id", 0.5, 0.42, &[]).unwrap();
/// assert!(script.contains("SELECT setseed(0.42);"));
/// assert!(script.contains("WHERE random() >= 0.5"));
/// assert!(gen_covariate_script("title", "id", 1.0, 0.42, &[]).is_err());
/// ```
pub fn gen_covariate_script(
    table: &str,
    key_column: &str,
    keep_fraction: f64,
    seed: f64,
    foreign_keys: &[ForeignKey],
) -> Result<String, CovariateError> {
    if !(keep_fraction > 0.0 && keep_fraction < 1.0) {
        return Err(CovariateError::BadFraction(keep_fraction.to_string()));
    }
    if !(-1.0..=1.0).contains(&seed) {
        return Err(CovariateError::BadSeed(seed.to_string()));
    }
    let t = ident(table)?;
    let k = ident(key_column)?;
    let dropped = "qobench_dropped";

    let mut s = String::new();
    writeln!(s, "BEGIN;").unwrap();
    writeln!(s, "SELECT setseed({seed});").unwrap();
    writeln!(
        s,
        "CREATE TEMP TABLE {dropped} ON COMMIT DROP AS SELECT {k} AS dropped_key FROM {t} WHERE random() >= {keep_fraction};"
    )
    .unwrap();
    let mut touched = Vec::new();
    for fk in foreign_keys {
        let ft = ident(&fk.table)?;
        let fc = ident(&fk.column)?;
        writeln!(s, "DELETE FROM {ft} WHERE {fc} IN (SELECT dropped_key FROM {dropped});").unwrap();
        if !touched.contains(&ft) {
            touched.push(ft);
        }
    }
    writeln!(s, "DELETE FROM {t} WHERE {k} IN (SELECT dropped_key FROM {dropped});").unwrap();
    writeln!(s, "COMMIT;").unwrap();
    touched.insert(0, t);
    writeln!(s, "ANALYZE {};", touched.join(", ")).unwrap();
    Ok(s)
}
