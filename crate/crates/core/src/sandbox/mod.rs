//! Supervised execution of generated code in worker processes.
//!
//! The sandbox is a fault boundary, not a security boundary: workers run with
//! the privileges of the caller. The bundled interpreter exposes no file,
//! network or process access, but a foreign runner plugged in through
//! [`WorkerKind::Process`] gets whatever isolation it provides itself.

pub mod protocol;
pub mod runner;

use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::PathBuf;
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use protocol::{Request, Response, PROTOCOL_VERSION};
use runner::Runner;

pub const DEFAULT_CALL_TIMEOUT: Duration = Duration::from_secs(5);
pub const DEFAULT_STARTUP_TIMEOUT: Duration = Duration::from_secs(5);
/// Budget for load, reset and other requests that do not carry their own timeout.
const CONTROL_TIMEOUT: Duration = Duration::from_secs(10);

/// A filtered failure: class, message and the innermost frame only.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub etype: String,
    pub message: String,
    /// `File "<generated>", line N, in f` plus the source line, or empty when the
    /// failure did not come from executing code (missing entry, protocol error).
    pub frame: String,
}

impl Diagnostic {
    pub fn new(etype: impl Into<String>, message: impl Into<String>, frame: impl Into<String>) -> Self {
        let etype = etype.into();
        let mut message = message.into();
        if message.is_empty() {
            message = etype.clone();
        }
        Diagnostic { etype, message, frame: frame.into() }
    }

    pub fn is_syntax(&self) -> bool {
        matches!(self.etype.as_str(), "SyntaxError" | "IndentationError" | "TabError")
    }

    /// Number of stack frames in the frame text.
    pub fn frame_count(&self) -> usize {
        self.frame.matches("File \"").count()
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if !self.frame.is_empty() {
            writeln!(f, "{}", self.frame)?;
        }
        write!(f, "{}: {}", self.etype, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum CallResult {
    Ok { value: Value },
    Error { diagnostic: Diagnostic },
    /// The call ran past its budget; the worker was replaced.
    Timeout { diagnostic: Diagnostic },
}

impl CallResult {
    pub fn is_ok(&self) -> bool {
        matches!(self, CallResult::Ok { .. })
    }

    pub fn value(&self) -> Option<&Value> {
        match self {
            CallResult::Ok { value } => Some(value),
            _ => None,
        }
    }

    pub fn diagnostic(&self) -> Option<&Diagnostic> {
        match self {
            CallResult::Ok { .. } => None,
            CallResult::Error { diagnostic } | CallResult::Timeout { diagnostic } => Some(diagnostic),
        }
    }

    pub fn status(&self) -> &'static str {
        match self {
            CallResult::Ok { .. } => "ok",
            CallResult::Error { .. } => "error",
            CallResult::Timeout { .. } => "timeout",
        }
    }
}

#[derive(Debug)]
pub enum SandboxError {
    Spawn(String),
    Handshake(String),
    Dead(String),
    Protocol(String),
}

impl fmt::Display for SandboxError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SandboxError::Spawn(m) => write!(f, "cannot start worker: {m}"),
            SandboxError::Handshake(m) => write!(f, "worker handshake failed: {m}"),
            SandboxError::Dead(m) => write!(f, "worker is gone: {m}"),
            SandboxError::Protocol(m) => write!(f, "protocol violation: {m}"),
        }
    }
}

impl std::error::Error for SandboxError {}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WorkerKind {
    /// The bundled interpreter, run on the caller's threads.
    InProcess,
    /// Any executable speaking the wire protocol on stdin/stdout.
    Process { program: PathBuf, args: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorkerConfig {
    pub kind: WorkerKind,
    pub startup_timeout: Duration,
    pub call_timeout: Duration,
}

impl Default for WorkerConfig {
    fn default() -> Self {
        WorkerConfig {
            kind: WorkerKind::InProcess,
            startup_timeout: DEFAULT_STARTUP_TIMEOUT,
            call_timeout: DEFAULT_CALL_TIMEOUT,
        }
    }
}

impl WorkerConfig {
    pub fn process(program: impl Into<PathBuf>, args: Vec<String>) -> Self {
        WorkerConfig { kind: WorkerKind::Process { program: program.into(), args }, ..WorkerConfig::default() }
    }
}

/// Moves request and response lines. `Ok(None)` means no reply within `wait`.
trait Transport: Send {
    fn exchange(&mut self, line: &str, wait: Duration) -> Result<Option<String>, SandboxError>;
    fn kill(&mut self);
}

struct InProcess {
    runner: Option<Runner>,
}

impl Transport for InProcess {
    fn exchange(&mut self, line: &str, _wait: Duration) -> Result<Option<String>, SandboxError> {
        let runner = self.runner.as_mut().ok_or_else(|| SandboxError::Dead("worker exited".into()))?;
        let (reply, exit) = runner.handle_line(line);
        if exit {
            self.runner = None;
        }
        Ok(Some(reply))
    }

    fn kill(&mut self) {
        self.runner = None;
    }
}

struct Process {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
}

impl Process {
    fn spawn(program: &PathBuf, args: &[String]) -> Result<Process, SandboxError> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| SandboxError::Spawn(format!("{}: {e}", program.display())))?;
        let stdin = child.stdin.take().ok_or_else(|| SandboxError::Spawn("no stdin pipe".into()))?;
        let stdout = child.stdout.take().ok_or_else(|| SandboxError::Spawn("no stdout pipe".into()))?;
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok(Process { child, stdin, lines: rx })
    }
}

impl Transport for Process {
    fn exchange(&mut self, line: &str, wait: Duration) -> Result<Option<String>, SandboxError> {
        let dead = |e: &dyn fmt::Display| SandboxError::Dead(e.to_string());
        self.stdin.write_all(line.as_bytes()).map_err(|e| dead(&e))?;
        self.stdin.write_all(b"\n").map_err(|e| dead(&e))?;
        self.stdin.flush().map_err(|e| dead(&e))?;
        match self.lines.recv_timeout(wait) {
            Ok(Ok(l)) => Ok(Some(l)),
            Ok(Err(e)) => Err(dead(&e)),
            Err(RecvTimeoutError::Timeout) => Ok(None),
            Err(RecvTimeoutError::Disconnected) => Err(dead(&"worker closed its output")),
        }
    }

    fn kill(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

impl Drop for Process {
    fn drop(&mut self) {
        self.kill();
    }
}

/// One live worker. Serves a single request at a time.
pub struct WorkerHandle {
    config: WorkerConfig,
    transport: Box<dyn Transport>,
    protocol: u64,
}

/// Starts a worker and performs the hello handshake.
pub fn spawn_worker(config: &WorkerConfig) -> Result<WorkerHandle, SandboxError> {
    let transport = start(config)?;
    let mut h = WorkerHandle { config: config.clone(), transport, protocol: 0 };
    h.handshake()?;
    Ok(h)
}

fn start(config: &WorkerConfig) -> Result<Box<dyn Transport>, SandboxError> {
    Ok(match &config.kind {
        WorkerKind::InProcess => Box::new(InProcess { runner: Some(Runner::new()) }),
        WorkerKind::Process { program, args } => Box::new(Process::spawn(program, args)?),
    })
}

/// How long the client waits for a call reply before killing the worker.
/// The worker enforces the budget itself, this only catches hung workers.
pub fn kill_after(timeout: Duration) -> Duration {
    timeout + timeout / 2 + Duration::from_millis(20)
}

impl WorkerHandle {
    pub fn protocol(&self) -> u64 {
        self.protocol
    }

    pub fn config(&self) -> &WorkerConfig {
        &self.config
    }

    fn handshake(&mut self) -> Result<(), SandboxError> {
        let reply = self
            .transport
            .exchange(&Request::Hello.to_line(), self.config.startup_timeout)
            .map_err(|e| SandboxError::Handshake(e.to_string()))?
            .ok_or_else(|| SandboxError::Handshake("no reply within the startup budget".into()))?;
        match Response::parse(&reply).map_err(SandboxError::Handshake)? {
            Response::Ok { value } => {
                let v = value.get("protocol").and_then(Value::as_u64);
                match v {
                    Some(PROTOCOL_VERSION) => {
                        self.protocol = PROTOCOL_VERSION;
                        Ok(())
                    }
                    other => Err(SandboxError::Handshake(format!("unsupported protocol {other:?}"))),
                }
            }
            Response::Error { message, .. } => Err(SandboxError::Handshake(message)),
        }
    }

    /// Replaces the worker with a fresh one; loaded state is lost.
    pub fn restart(&mut self) -> Result<(), SandboxError> {
        self.transport.kill();
        self.transport = start(&self.config)?;
        self.handshake()
    }

    fn send(&mut self, req: &Request, wait: Duration) -> Result<Option<Response>, SandboxError> {
        match self.transport.exchange(&req.to_line(), wait)? {
            None => Ok(None),
            Some(line) => Response::parse(&line).map(Some).map_err(SandboxError::Protocol),
        }
    }

    pub fn hello(&mut self) -> Result<u64, SandboxError> {
        self.handshake()?;
        Ok(self.protocol)
    }

    /// Loads `source` and checks that `entry` is defined.
    pub fn load_source(&mut self, source: &str, entry: &str) -> Result<CallResult, SandboxError> {
        let req = Request::Load { source: source.to_string(), entry: entry.to_string() };
        match self.send(&req, CONTROL_TIMEOUT)? {
            Some(r) => Ok(to_result(r)),
            None => {
                self.restart()?;
                Ok(CallResult::Timeout {
                    diagnostic: Diagnostic::new("TimeoutError", "load did not finish", ""),
                })
            }
        }
    }

    /// Calls the loaded entry with positional `args`. On timeout the worker is
    /// restarted and the source must be loaded again.
    pub fn call_entry(&mut self, args: &[Value], timeout: Duration, seed: Option<u64>) -> Result<CallResult, SandboxError> {
        let req = Request::Call { args: args.to_vec(), timeout_ms: timeout.as_millis() as u64, seed };
        match self.send(&req, kill_after(timeout))? {
            Some(r) => {
                let res = to_result(r);
                if let CallResult::Error { diagnostic } = &res {
                    if diagnostic.etype == "TimeoutError" {
                        let diagnostic = diagnostic.clone();
                        self.restart()?;
                        return Ok(CallResult::Timeout { diagnostic });
                    }
                }
                Ok(res)
            }
            None => {
                self.restart()?;
                let ms = timeout.as_millis();
                Ok(CallResult::Timeout {
                    diagnostic: Diagnostic::new("TimeoutError", format!("no reply within {ms} ms, worker killed"), ""),
                })
            }
        }
    }

    /// Loads `source` and calls `entry` in one step.
    pub fn run(&mut self, source: &str, entry: &str, args: &[Value], seed: Option<u64>) -> Result<CallResult, SandboxError> {
        let loaded = self.load_source(source, entry)?;
        if !loaded.is_ok() {
            return Ok(loaded);
        }
        let timeout = self.config.call_timeout;
        self.call_entry(args, timeout, seed)
    }

    pub fn reset(&mut self) -> Result<(), SandboxError> {
        match self.send(&Request::Reset, CONTROL_TIMEOUT)? {
            Some(Response::Ok { .. }) => Ok(()),
            Some(Response::Error { message, .. }) => Err(SandboxError::Protocol(message)),
            None => self.restart(),
        }
    }
}

impl Drop for WorkerHandle {
    fn drop(&mut self) {
        let _ = self.transport.exchange(&Request::Exit.to_line(), Duration::from_millis(200));
        self.transport.kill();
    }
}

fn to_result(r: Response) -> CallResult {
    match r {
        Response::Ok { value } => CallResult::Ok { value },
        Response::Error { etype, message, frame } => CallResult::Error { diagnostic: Diagnostic::new(etype, message, frame) },
    }
}

/// Hands out workers to concurrent users, spawning lazily up to `size`.
pub struct WorkerPool {
    config: WorkerConfig,
    size: usize,
    state: Mutex<(Vec<WorkerHandle>, usize)>,
    freed: Condvar,
}

pub struct PooledWorker<'a> {
    pool: &'a WorkerPool,
    handle: Option<WorkerHandle>,
}

impl WorkerPool {
    pub fn new(config: WorkerConfig, size: usize) -> Self {
        WorkerPool { config, size: size.max(1), state: Mutex::new((Vec::new(), 0)), freed: Condvar::new() }
    }

    pub fn get(&self) -> Result<PooledWorker<'_>, SandboxError> {
        let mut st = self.state.lock().unwrap_or_else(|e| e.into_inner());
        loop {
            if let Some(h) = st.0.pop() {
                return Ok(PooledWorker { pool: self, handle: Some(h) });
            }
            if st.1 < self.size {
                st.1 += 1;
                drop(st);
                return match spawn_worker(&self.config) {
                    Ok(h) => Ok(PooledWorker { pool: self, handle: Some(h) }),
                    Err(e) => {
                        self.state.lock().unwrap_or_else(|e| e.into_inner()).1 -= 1;
                        self.freed.notify_one();
                        Err(e)
                    }
                };
            }
            st = self.freed.wait(st).unwrap_or_else(|e| e.into_inner());
        }
    }
}

impl std::ops::Deref for PooledWorker<'_> {
    type Target = WorkerHandle;
    fn deref(&self) -> &WorkerHandle {
        self.handle.as_ref().expect("handle present until drop")
    }
}

impl std::ops::DerefMut for PooledWorker<'_> {
    fn deref_mut(&mut self) -> &mut WorkerHandle {
        self.handle.as_mut().expect("handle present until drop")
    }
}

impl Drop for PooledWorker<'_> {
    fn drop(&mut self) {
        if let Some(mut h) = self.handle.take() {
            let mut st = self.pool.state.lock().unwrap_or_else(|e| e.into_inner());
            if h.reset().is_ok() {
                st.0.push(h);
            } else {
                st.1 -= 1;
            }
            self.pool.freed.notify_one();
        }
    }
}
