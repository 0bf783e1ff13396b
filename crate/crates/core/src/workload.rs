//! Template-derived query workloads.
//!
//! A workload is a directory of `.sql` files. Each file holds one query and
//! its path encodes the query's family (the template it was derived from) and
//! its variant within that family. Two layouts are supported:
//!
//! * [`NamingConvention::Job`]: flat files such as `1a.sql` or `33c.sql`, where
//!   the leading digits name the family and the rest names the variant.
//! * [`NamingConvention::TemplateDir`]: `<family>/<variant>.sql`.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum WorkloadError {
    #[error("malformed query file name `{name}`: {reason}")]
    MalformedName { name: String, reason: String },
    #[error("no .sql files found under {0}")]
    EmptyWorkload(PathBuf),
    #[error("duplicate query id {id} ({first} and {second})")]
    DuplicateQueryId {
        id: QueryId,
        first: PathBuf,
        second: PathBuf,
    },
    #[error("query {path}: {reason}")]
    BadStatement { path: PathBuf, reason: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// How file paths map onto query families and variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NamingConvention {
    Job,
    TemplateDir,
}

impl FromStr for NamingConvention {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "job" => Ok(Self::Job),
            "template_dir" | "template-dir" => Ok(Self::TemplateDir),
            other => Err(format!("unknown naming convention `{other}`")),
        }
    }
}

/// Identity of a query: the family (base query) and the variant within it.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct QueryId {
    family: String,
    variant: String,
}

impl QueryId {
    pub fn new(family: impl Into<String>, variant: impl Into<String>) -> Result<Self, WorkloadError> {
        let family = family.into();
        let variant = variant.into();
        if family.is_empty() || variant.is_empty() {
            return Err(WorkloadError::MalformedName {
                name: format!("{family}{variant}"),
                reason: "family and variant must both be non-empty".into(),
            });
        }
        for part in [&family, &variant] {
            if part.contains(['/', '\\']) || part.chars().any(char::is_whitespace) {
                return Err(WorkloadError::MalformedName {
                    name: format!("{family}/{variant}"),
                    reason: "family and variant may not contain separators or whitespace".into(),
                });
            }
        }
        Ok(Self { family, variant })
    }

    pub fn family(&self) -> &str {
        &self.family
    }

    pub fn variant(&self) -> &str {
        &self.variant
    }

    /// True when the plain concatenation `<family><variant>` parses back to
    /// this id under the job grammar.
    fn is_job_shaped(&self) -> bool {
        self.family.bytes().all(|b| b.is_ascii_digit())
            && !self.variant.as_bytes()[0].is_ascii_digit()
    }
}

/// Renders as `<family><variant>` when that is unambiguous (JOB-style ids such
/// as `1a`) and as `<family>/<variant>` otherwise.
impl fmt::Display for QueryId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_job_shaped() {
            write!(f, "{}{}", self.family, self.variant)
        } else {
            write!(f, "{}/{}", self.family, self.variant)
        }
    }
}

impl FromStr for QueryId {
    type Err = WorkloadError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once('/') {
            Some((family, variant)) => QueryId::new(family, variant),
            None => split_job_stem(s),
        }
    }
}

impl Serialize for QueryId {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for QueryId {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl Ord for QueryId {
    fn cmp(&self, other: &Self) -> Ordering {
        natural_cmp(&self.family, &other.family)
            .then_with(|| self.variant.cmp(&other.variant))
    }
}

impl PartialOrd for QueryId {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Numeric-aware string comparison: runs of ASCII digits compare by value, so
/// `2` sorts before `10` and `q2` before `q10`.
pub fn natural_cmp(a: &str, b: &str) -> Ordering {
    let (mut a, mut b) = (a.as_bytes(), b.as_bytes());
    loop {
        match (a.first(), b.first()) {
            (None, None) => return Ordering::Equal,
            (None, Some(_)) => return Ordering::Less,
            (Some(_), None) => return Ordering::Greater,
            (Some(x), Some(y)) if x.is_ascii_digit() && y.is_ascii_digit() => {
                let na = a.iter().take_while(|c| c.is_ascii_digit()).count();
                let nb = b.iter().take_while(|c| c.is_ascii_digit()).count();
                let da = trim_zeros(&a[..na]);
                let db = trim_zeros(&b[..nb]);
                let ord = da
                    .len()
                    .cmp(&db.len())
                    .then_with(|| da.cmp(db))
                    .then_with(|| na.cmp(&nb));
                if ord != Ordering::Equal {
                    return ord;
                }
                a = &a[na..];
                b = &b[nb..];
            }
            (Some(x), Some(y)) => {
                if x != y {
                    return x.cmp(y);
                }
                a = &a[1..];
                b = &b[1..];
            }
        }
    }
}

fn trim_zeros(digits: &[u8]) -> &[u8] {
    let start = digits.iter().position(|&d| d != b'0').unwrap_or(digits.len());
    &digits[start..]
}

fn split_job_stem(stem: &str) -> Result<QueryId, WorkloadError> {
    let digits = stem.bytes().take_while(u8::is_ascii_digit).count();
    if digits == 0 || digits == stem.len() {
        return Err(WorkloadError::MalformedName {
            name: stem.to_string(),
            reason: "expected digits followed by a variant suffix, e.g. `1a`".into(),
        });
    }
    let (family, variant) = stem.split_at(digits);
    if variant.as_bytes()[0].is_ascii_digit() {
        unreachable!("digit run is maximal");
    }
    QueryId::new(family, variant)
}

/// Decomposes a query file name into its [`QueryId`].
///
/// For [`NamingConvention::TemplateDir`] the name must include the parent
/// directory (`q16/042.sql`).
pub fn parse_query_id(filename: &str, convention: NamingConvention) -> Result<QueryId, WorkloadError> {
    let malformed = |reason: &str| WorkloadError::MalformedName {
        name: filename.to_string(),
        reason: reason.to_string(),
    };
    let normalized = filename.replace('\\', "/");
    let without_ext = normalized
        .strip_suffix(".sql")
        .ok_or_else(|| malformed("expected a `.sql` file"))?;
    match convention {
        NamingConvention::Job => {
            let stem = without_ext.rsplit('/').next().unwrap_or(without_ext);
            split_job_stem(stem).map_err(|_| malformed("expected `<digits><variant>.sql`"))
        }
        NamingConvention::TemplateDir => {
            let mut parts = without_ext.rsplit('/');
            let variant = parts.next().filter(|s| !s.is_empty());
            let family = parts.next().filter(|s| !s.is_empty());
            match (family, variant) {
                (Some(family), Some(variant)) => QueryId::new(family, variant),
                _ => Err(malformed("expected `<family>/<variant>.sql`")),
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub id: QueryId,
    pub sql_text: String,
    pub source_path: PathBuf,
}

impl Query {
    pub fn new(id: QueryId, sql_text: impl Into<String>, source_path: impl Into<PathBuf>) -> Result<Self, WorkloadError> {
        let sql_text = sql_text.into();
        let source_path = source_path.into();
        check_single_statement(&sql_text).map_err(|reason| WorkloadError::BadStatement {
            path: source_path.clone(),
            reason,
        })?;
        Ok(Self {
            id,
            sql_text,
            source_path,
        })
    }

    /// The statement text without trailing whitespace and semicolons, suitable
    /// for embedding after `EXPLAIN`.
    pub fn statement(&self) -> &str {
        strip_terminator(&self.sql_text)
    }
}

pub(crate) fn strip_terminator(sql: &str) -> &str {
    sql.trim_end_matches(|c: char| c == ';' || c.is_whitespace())
}

/// Counts top-level statements, ignoring semicolons inside string literals,
/// quoted identifiers, dollar-quoted bodies and comments.
fn check_single_statement(sql: &str) -> Result<(), String> {
    let bytes = sql.as_bytes();
    let mut statements = 0usize;
    let mut current_has_content = false;
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        match c {
            b'-' if bytes.get(i + 1) == Some(&b'-') => {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
                continue;
            }
            b'/' if bytes.get(i + 1) == Some(&b'*') => {
                let mut depth = 1;
                i += 2;
                while i < bytes.len() && depth > 0 {
                    if bytes[i] == b'/' && bytes.get(i + 1) == Some(&b'*') {
                        depth += 1;
                        i += 2;
                    } else if bytes[i] == b'*' && bytes.get(i + 1) == Some(&b'/') {
                        depth -= 1;
                        i += 2;
                    } else {
                        i += 1;
                    }
                }
                if depth > 0 {
                    return Err("unterminated block comment".into());
                }
                continue;
            }
            b'\'' | b'"' => {
                current_has_content = true;
                i += 1;
                loop {
                    match bytes.get(i) {
                        None => return Err("unterminated quoted text".into()),
                        Some(&q) if q == c => {
                            if bytes.get(i + 1) == Some(&c) {
                                i += 2;
                            } else {
                                i += 1;
                                break;
                            }
                        }
                        Some(_) => i += 1,
                    }
                }
                continue;
            }
            b'$' => {
                current_has_content = true;
                if let Some(tag_len) = dollar_tag_len(&bytes[i..]) {
                    let tag = &bytes[i..i + tag_len];
                    let body_start = i + tag_len;
                    let close = bytes[body_start..]
                        .windows(tag_len)
                        .position(|w| w == tag)
                        .ok_or_else(|| "unterminated dollar-quoted text".to_string())?;
                    i = body_start + close + tag_len;
                    continue;
                }
            }
            b';' => {
                if current_has_content {
                    statements += 1;
                }
                current_has_content = false;
            }
            c if c.is_ascii_whitespace() => {}
            _ => current_has_content = true,
        }
        i += 1;
    }
    if current_has_content {
        statements += 1;
    }
    match statements {
        0 => Err("query file contains no statement".into()),
        1 => Ok(()),
        n => Err(format!("expected exactly one statement, found {n}")),
    }
}

fn dollar_tag_len(s: &[u8]) -> Option<usize> {
    let end = s[1..]
        .iter()
        .position(|&c| !(c.is_ascii_alphanumeric() || c == b'_'))?
        + 1;
    (s.get(end) == Some(&b'$') && !s[1].is_ascii_digit()).then_some(end + 1)
}

/// An ordered, immutable collection of queries.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Workload {
    name: String,
    queries: Vec<Query>,
}

impl Workload {
    /// Builds a workload from queries in any order; they are sorted into the
    /// canonical order and checked for duplicate ids.
    pub fn new(name: impl Into<String>, mut queries: Vec<Query>) -> Result<Self, WorkloadError> {
        queries.sort_by(|a, b| a.id.cmp(&b.id));
        for pair in queries.windows(2) {
            if pair[0].id == pair[1].id {
                return Err(WorkloadError::DuplicateQueryId {
                    id: pair[0].id.clone(),
                    first: pair[0].source_path.clone(),
                    second: pair[1].source_path.clone(),
                });
            }
        }
        Ok(Self {
            name: name.into(),
            queries,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn queries(&self) -> &[Query] {
        &self.queries
    }

    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &QueryId> {
        self.queries.iter().map(|q| &q.id)
    }

    pub fn get(&self, id: &QueryId) -> Option<&Query> {
        self.queries
            .binary_search_by(|q| q.id.cmp(id))
            .ok()
            .map(|i| &self.queries[i])
    }

    /// Queries grouped by family, families in canonical order.
    pub fn families(&self) -> BTreeMap<FamilyKey<'_>, Vec<&Query>> {
        let mut out: BTreeMap<FamilyKey<'_>, Vec<&Query>> = BTreeMap::new();
        for q in &self.queries {
            out.entry(FamilyKey(q.id.family())).or_default().push(q);
        }
        out
    }

    pub fn family_count(&self) -> usize {
        self.families().len()
    }
}

/// Family label ordered with [`natural_cmp`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FamilyKey<'a>(pub &'a str);

impl Ord for FamilyKey<'_> {
    fn cmp(&self, other: &Self) -> Ordering {
        natural_cmp(self.0, other.0)
    }
}

impl PartialOrd for FamilyKey<'_> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Reads every `.sql` file of a workload directory.
pub fn load_workload(directory: &Path, name: &str, convention: NamingConvention) -> Result<Workload, WorkloadError> {
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| WorkloadError::Io { path, source }
    };
    let mut files = Vec::new();
    match convention {
        NamingConvention::Job => {
            for entry in fs::read_dir(directory).map_err(io_err(directory))? {
                let path = entry.map_err(io_err(directory))?.path();
                if path.is_file() && path.extension().is_some_and(|e| e == "sql") {
                    files.push(path);
                }
            }
        }
        NamingConvention::TemplateDir => collect_sql_recursive(directory, &mut files)?,
    }
    if files.is_empty() {
        return Err(WorkloadError::EmptyWorkload(directory.to_path_buf()));
    }
    files.sort();

    let mut queries = Vec::with_capacity(files.len());
    for path in files {
        let relative = path.strip_prefix(directory).unwrap_or(&path);
        let relative = relative.to_string_lossy();
        let id = parse_query_id(&relative, convention)?;
        let sql = fs::read_to_string(&path).map_err(io_err(&path))?;
        queries.push(Query::new(id, sql, path)?);
    }
    Workload::new(name, queries)
}

fn collect_sql_recursive(dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), WorkloadError> {
    let entries = fs::read_dir(dir).map_err(|source| WorkloadError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    for entry in entries {
        let path = entry
            .map_err(|source| WorkloadError::Io {
                path: dir.to_path_buf(),
                source,
            })?
            .path();
        if path.is_dir() {
            collect_sql_recursive(&path, out)?;
        } else if path.extension().is_some_and(|e| e == "sql") {
            out.push(path);
        }
    }
    Ok(())
}
