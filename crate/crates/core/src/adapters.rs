//! Optimizer adapters.
//!
//! Every optimizer under test, including the DBMS's own planner, supplies a
//! [`PlanDirective`] per query through an [`Adapter`]. The harness times the
//! call itself; that wall-clock time is the optimizer's inference time.
//!
//! External optimizers run as child processes and talk line-delimited JSON
//! over stdin/stdout:
//!
//! ```text
//! harness → {"hello": 1}
//! adapter → {"ready": 1, "name": "greedy-leftdeep"}
//! harness → {"id": 7, "query_id": "1a", "sql": "SELECT ..."}
//! adapter → {"id": 7, "hints": "/*+ ... */", "settings": [["enable_nestloop", "off"]], "meta": ""}
//! ```

use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::PathBuf;
use std::os::unix::process::CommandExt;
use std::process::{Child, ChildStdin, Command, Stdio};
use std::str::FromStr;
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dbms::profile::directive_allowed;
use crate::hintlang;
use crate::workload::Query;

/// Per-query budget for an external adapter's answer.
pub const DEFAULT_ADAPTER_TIMEOUT: Duration = Duration::from_secs(15 * 60);

#[derive(Debug, Error)]
pub enum AdapterError {
    #[error("no hint file at {0}")]
    MissingHintFile(PathBuf),
    #[error("adapter process crashed: {0}")]
    AdapterCrashed(String),
    #[error("protocol violation: {0}")]
    ProtocolViolation(String),
    #[error("adapter did not answer within {0:?}")]
    AdapterTimeout(Duration),
    #[error("bad adapter spec `{0}`")]
    BadSpec(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// What an optimizer asks the DBMS to do for one query.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanDirective {
    /// A hint comment, or empty to let the DBMS plan freely.
    pub hint_text: String,
    /// Planner settings applied for this query only.
    pub session_settings: Vec<(String, String)>,
    /// Free-form text from the adapter, recorded but not interpreted.
    pub meta: String,
}

impl PlanDirective {
    pub fn native() -> Self {
        Self::default()
    }

    pub fn hinted(hint_text: impl Into<String>) -> Self {
        Self {
            hint_text: hint_text.into(),
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DirectiveViolation {
    BadHint { position: Option<usize>, message: String },
    DisallowedSetting(String),
}

impl fmt::Display for DirectiveViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DirectiveViolation::BadHint {
                position: Some(p),
                message,
            } => write!(f, "hint rejected at byte {p}: {message}"),
            DirectiveViolation::BadHint { position: None, message } => write!(f, "hint rejected: {message}"),
            DirectiveViolation::DisallowedSetting(name) => write!(f, "setting `{name}` is not allowed in a directive"),
        }
    }
}

/// Checks a directive's hint against the hint grammar and its settings
/// against the planner allow-list. Empty means valid.
pub fn validate_directive(directive: &PlanDirective) -> Vec<DirectiveViolation> {
    let mut out = Vec::new();
    if !directive.hint_text.trim().is_empty() {
        if let Err(e) = hintlang::parse_hints(&directive.hint_text) {
            out.push(DirectiveViolation::BadHint {
                position: e.position(),
                message: e.to_string(),
            });
        }
    }
    for (name, _) in &directive.session_settings {
        if !directive_allowed(name) {
            out.push(DirectiveViolation::DisallowedSetting(name.clone()));
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdapterKind {
    Native,
    FileHints,
    ExternalProcess,
}

/// Names an adapter and where it lives.
///
/// Parsed from `native`, `native:<name>`, `file:<name>=<dir>` or
/// `exec:<name>=<command line>`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdapterDescriptor {
    pub name: String,
    pub kind: AdapterKind,
    pub location: Option<String>,
}

impl AdapterDescriptor {
    pub fn native() -> Self {
        Self {
            name: "native".into(),
            kind: AdapterKind::Native,
            location: None,
        }
    }

    pub fn file_hints(name: &str, dir: impl Into<PathBuf>) -> Self {
        Self {
            name: name.into(),
            kind: AdapterKind::FileHints,
            location: Some(dir.into().display().to_string()),
        }
    }

    pub fn external(name: &str, command: &str) -> Self {
        Self {
            name: name.into(),
            kind: AdapterKind::ExternalProcess,
            location: Some(command.into()),
        }
    }
}

impl FromStr for AdapterDescriptor {
    type Err = AdapterError;

    fn from_str(s: &str) -> Result<Self, AdapterError> {
        let bad = || AdapterError::BadSpec(s.to_string());
        if s == "native" {
            return Ok(Self::native());
        }
        let (kind, rest) = s.split_once(':').ok_or_else(bad)?;
        match kind {
            "native" if !rest.is_empty() => Ok(Self {
                name: rest.to_string(),
                ..Self::native()
            }),
            "file" | "exec" => {
                let (name, location) = rest.split_once('=').ok_or_else(bad)?;
                if name.is_empty() || location.is_empty() {
                    return Err(bad());
                }
                Ok(if kind == "file" {
                    Self::file_hints(name, location)
                } else {
                    Self::external(name, location)
                })
            }
            _ => Err(bad()),
        }
    }
}

/// A started adapter.
pub enum Adapter {
    Native { name: String },
    FileHints { name: String, dir: PathBuf },
    External(ExternalAdapter),
}

impl Adapter {
    pub fn start(descriptor: &AdapterDescriptor, timeout: Duration) -> Result<Self, AdapterError> {
        let location = || {
            descriptor
                .location
                .clone()
                .ok_or_else(|| AdapterError::BadSpec(format!("{} needs a location", descriptor.name)))
        };
        Ok(match descriptor.kind {
            AdapterKind::Native => Adapter::Native {
                name: descriptor.name.clone(),
            },
            AdapterKind::FileHints => Adapter::FileHints {
                name: descriptor.name.clone(),
                dir: PathBuf::from(location()?),
            },
            AdapterKind::ExternalProcess => Adapter::External(ExternalAdapter::spawn(&descriptor.name, &location()?, timeout)?),
        })
    }

    pub fn name(&self) -> &str {
        match self {
            Adapter::Native { name } | Adapter::FileHints { name, .. } => name,
            Adapter::External(e) => &e.name,
        }
    }

    pub fn kind(&self) -> AdapterKind {
        match self {
            Adapter::Native { .. } => AdapterKind::Native,
            Adapter::FileHints { .. } => AdapterKind::FileHints,
            Adapter::External(_) => AdapterKind::ExternalProcess,
        }
    }

    /// The directive for `query` and the inference time in milliseconds.
    pub fn plan(&mut self, query: &Query) -> Result<(PlanDirective, f64), AdapterError> {
        match self {
            Adapter::Native { .. } => Ok((PlanDirective::native(), 0.0)),
            Adapter::FileHints { dir, .. } => {
                let start = Instant::now();
                let path = dir.join(format!("{}.hints", query.id));
                let text = fs::read_to_string(&path).map_err(|_| AdapterError::MissingHintFile(path))?;
                let directive = PlanDirective::hinted(text.trim());
                Ok((directive, start.elapsed().as_secs_f64() * 1000.0))
            }
            Adapter::External(ext) => ext.plan(query),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Hello {
    hello: u32,
}

#[derive(Serialize, Deserialize)]
struct Ready {
    ready: u32,
    name: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PlanRequest {
    pub id: u64,
    pub query_id: String,
    pub sql: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PlanResponse {
    pub id: u64,
    pub hints: String,
    #[serde(default)]
    pub settings: Vec<(String, String)>,
    #[serde(default)]
    pub meta: String,
}

/// An optimizer running as a child process.
pub struct ExternalAdapter {
    name: String,
    announced_name: String,
    child: Child,
    stdin: Option<ChildStdin>,
    lines: Receiver<std::io::Result<String>>,
    timeout: Duration,
    next_id: u64,
    dead: bool,
}

impl ExternalAdapter {
    /// Spawns `command` through `sh -c` in its own process group and
    /// completes the handshake.
    pub fn spawn(name: &str, command: &str, timeout: Duration) -> Result<Self, AdapterError> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .process_group(0)
            .spawn()?;
        let stdin = child.stdin.take();
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        let mut adapter = ExternalAdapter {
            name: name.to_string(),
            announced_name: String::new(),
            child,
            stdin,
            lines: rx,
            timeout,
            next_id: 1,
            dead: false,
        };
        adapter.send(&serde_json::to_string(&Hello { hello: 1 }).expect("hello serializes"))?;
        let line = adapter.receive()?;
        let ready: Ready = serde_json::from_str(&line)
            .map_err(|e| AdapterError::ProtocolViolation(format!("bad handshake `{line}`: {e}")))?;
        if ready.ready != 1 {
            return Err(AdapterError::ProtocolViolation(format!("handshake answered ready={}", ready.ready)));
        }
        adapter.announced_name = ready.name;
        Ok(adapter)
    }

    /// Name the process gave in its handshake.
    pub fn announced_name(&self) -> &str {
        &self.announced_name
    }

    fn send(&mut self, line: &str) -> Result<(), AdapterError> {
        if self.dead {
            return Err(AdapterError::AdapterCrashed("process already terminated".into()));
        }
        let stdin = self.stdin.as_mut().expect("stdin open while alive");
        let result = stdin.write_all(line.as_bytes()).and_then(|_| stdin.write_all(b"\n")).and_then(|_| stdin.flush());
        result.map_err(|e| {
            self.dead = true;
            AdapterError::AdapterCrashed(format!("write failed: {e}"))
        })
    }

    fn receive(&mut self) -> Result<String, AdapterError> {
        match self.lines.recv_timeout(self.timeout) {
            Ok(Ok(line)) => Ok(line),
            Ok(Err(e)) => {
                self.dead = true;
                Err(AdapterError::AdapterCrashed(format!("read failed: {e}")))
            }
            Err(RecvTimeoutError::Timeout) => {
                self.kill();
                Err(AdapterError::AdapterTimeout(self.timeout))
            }
            Err(RecvTimeoutError::Disconnected) => {
                self.dead = true;
                let status = self.child.wait().map(|s| s.to_string()).unwrap_or_else(|e| e.to_string());
                Err(AdapterError::AdapterCrashed(format!("closed its output ({status})")))
            }
        }
    }

    /// Kills the whole process group, so programs started by the shell go too.
    fn kill(&mut self) {
        self.dead = true;
        let _ = Command::new("kill")
            .args(["-s", "KILL", "--"])
            .arg(format!("-{}", self.child.id()))
            .stderr(Stdio::null())
            .status();
        let _ = self.child.kill();
        let _ = self.child.wait();
    }

    pub fn plan(&mut self, query: &Query) -> Result<(PlanDirective, f64), AdapterError> {
        let id = self.next_id;
        self.next_id += 1;
        let request = PlanRequest {
            id,
            query_id: query.id.to_string(),
            sql: query.sql_text.clone(),
        };
        let line = serde_json::to_string(&request).expect("request serializes");
        let start = Instant::now();
        self.send(&line)?;
        let reply = self.receive()?;
        let inference_ms = start.elapsed().as_secs_f64() * 1000.0;
        let response: PlanResponse = serde_json::from_str(&reply)
            .map_err(|e| AdapterError::ProtocolViolation(format!("malformed response `{reply}`: {e}")))?;
        if response.id != id {
            return Err(AdapterError::ProtocolViolation(format!(
                "response id {} does not match request id {id}",
                response.id
            )));
        }
        Ok((
            PlanDirective {
                hint_text: response.hints,
                session_settings: response.settings,
                meta: response.meta,
            },
            inference_ms,
        ))
    }
}

impl Drop for ExternalAdapter {
    fn drop(&mut self) {
        drop(self.stdin.take());
        if !self.dead {
            // give the child a moment to exit on end-of-input
            for _ in 0..20 {
                if let Ok(Some(_)) = self.child.try_wait() {
                    return;
                }
                thread::sleep(Duration::from_millis(10));
            }
        }
        self.kill();
    }
}

/// A minimal protocol peer, served by `qobench adapter-stub`.
pub mod stub {
    use std::io::{BufRead, Write};
    use std::str::FromStr;
    use std::time::Duration;

    use super::{Hello, PlanRequest, PlanResponse, Ready};

    #[derive(Debug, Clone, Copy, PartialEq, Eq)]
    pub enum StubMode {
        /// Answer every request with the configured hints and settings.
        Fixed,
        /// Answer with text that is not a response object.
        Malformed,
        /// Answer with an id one larger than requested.
        WrongId,
        /// Exit after the handshake.
        Crash,
        /// Never answer requests.
        Hang,
    }

    impl FromStr for StubMode {
        type Err = String;
        fn from_str(s: &str) -> Result<Self, String> {
            Ok(match s {
                "fixed" => StubMode::Fixed,
                "malformed" => StubMode::Malformed,
                "wrong-id" => StubMode::WrongId,
                "crash" => StubMode::Crash,
                "hang" => StubMode::Hang,
                other => return Err(format!("unknown stub mode `{other}`")),
            })
        }
    }

    pub struct StubConfig {
        pub name: String,
        pub mode: StubMode,
        pub hints: String,
        pub settings: Vec<(String, String)>,
        /// In `Fixed` mode, never answer the request for this query.
        pub hang_on: Option<String>,
    }

    pub fn serve(config: &StubConfig, input: impl BufRead, mut output: impl Write) -> std::io::Result<()> {
        let mut lines = input.lines();
        match lines.next() {
            Some(line) => {
                let line = line?;
                if serde_json::from_str::<Hello>(&line).is_err() {
                    return Ok(());
                }
            }
            None => return Ok(()),
        }
        let ready = Ready {
            ready: 1,
            name: config.name.clone(),
        };
        writeln!(output, "{}", serde_json::to_string(&ready)?)?;
        output.flush()?;
        if config.mode == StubMode::Crash {
            return Ok(());
        }
        for line in lines {
            let request: PlanRequest = match serde_json::from_str(&line?) {
                Ok(r) => r,
                Err(_) => continue,
            };
            if config.hang_on.as_deref() == Some(request.query_id.as_str()) {
                std::thread::sleep(Duration::from_secs(3600));
            }
            let reply = match config.mode {
                StubMode::Malformed => "{\"oops\": true".to_string(),
                StubMode::Hang => {
                    std::thread::sleep(Duration::from_secs(3600));
                    continue;
                }
                _ => serde_json::to_string(&PlanResponse {
                    id: if config.mode == StubMode::WrongId { request.id + 1 } else { request.id },
                    hints: config.hints.clone(),
                    settings: config.settings.clone(),
                    meta: format!("stub:{}", request.query_id),
                })?,
            };
            writeln!(output, "{reply}")?;
            output.flush()?;
        }
        Ok(())
    }
}
