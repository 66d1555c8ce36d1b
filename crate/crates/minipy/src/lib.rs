//! A small interpreter for the subset of Python that generated goal and reward
//! functions are written in.
//!
//! Every [`Program::call`] executes the module body in a fresh namespace and then
//! invokes the entry function, so calls never observe state left by earlier ones.
//! Arguments and results cross the boundary as JSON values.
//!
//! ```
//! use minipy::{Program, RunOptions};
//! use serde_json::json;
//!
//! let prog = Program::compile("def double(x):\n    return [2 * v for v in x]\n").unwrap();
//! let out = prog.call("double", &[json!([1, 2.5])], &RunOptions::default()).unwrap();
//! assert_eq!(out, json!([2, 5.0]));
//! ```

mod ast;
mod builtins;
mod error;
mod interp;
mod lexer;
mod parser;
mod value;

use std::sync::Arc;
use std::time::{Duration, Instant};

pub use error::{Exception, Frame, MODULE_SCOPE, SOURCE_NAME};

use interp::Interp;
use value::Value;

/// Limits for a single execution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    /// Wall-clock budget covering module execution and the call itself.
    pub timeout: Option<Duration>,
    /// Seed for the `random` module.
    pub seed: u64,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            timeout: Some(Duration::from_secs(5)),
            seed: 0,
        }
    }
}

/// Parsed source, cheap to clone and safe to share between threads.
#[derive(Debug, Clone)]
pub struct Program {
    body: Arc<Vec<ast::Stmt>>,
    lines: Arc<Vec<String>>,
}

impl Program {
    pub fn compile(src: &str) -> Result<Program, Exception> {
        let body = parser::parse(src)?;
        Ok(Program {
            body: Arc::new(body),
            lines: Arc::new(src.lines().map(str::to_string).collect()),
        })
    }

    /// Executes the module body and returns the names of the functions it defines, sorted.
    pub fn load(&self, opts: &RunOptions) -> Result<Vec<String>, Exception> {
        on_large_stack(|| {
            let mut it = self.interp(opts);
            it.run_module(&self.body)?;
            let mut names: Vec<String> = it
                .globals
                .iter()
                .filter(|(_, v)| matches!(v, Value::Func(_)))
                .map(|(k, _)| k.to_string())
                .collect();
            names.sort();
            Ok(names)
        })
    }

    /// Runs the module, then calls `entry` with `args` and converts the result to JSON.
    pub fn call(
        &self,
        entry: &str,
        args: &[serde_json::Value],
        opts: &RunOptions,
    ) -> Result<serde_json::Value, Exception> {
        on_large_stack(|| {
            let mut it = self.interp(opts);
            let out = self.invoke(&mut it, entry, args)?;
            out.to_json()
        })
    }

    /// Like [`Program::call`] but reports whether the result counts as a pass for a
    /// test function: `None` or any truthy value.
    pub fn call_check(
        &self,
        entry: &str,
        args: &[serde_json::Value],
        opts: &RunOptions,
    ) -> Result<bool, Exception> {
        on_large_stack(|| {
            let mut it = self.interp(opts);
            let out = self.invoke(&mut it, entry, args)?;
            Ok(matches!(out, Value::None) || out.truthy())
        })
    }

    pub fn source_line(&self, line: usize) -> Option<&str> {
        self.lines.get(line.checked_sub(1)?).map(String::as_str)
    }

    fn interp(&self, opts: &RunOptions) -> Interp<'_> {
        let deadline = opts.timeout.map(|t| Instant::now() + t);
        Interp::new(&self.lines, deadline, opts.seed)
    }

    fn invoke(
        &self,
        it: &mut Interp<'_>,
        entry: &str,
        args: &[serde_json::Value],
    ) -> Result<Value, Exception> {
        it.run_module(&self.body)?;
        let f = it
            .global(entry)
            .cloned()
            .ok_or_else(|| Exception::new("NameError", format!("name '{entry}' is not defined")))?;
        let args = args.iter().map(Value::from_json).collect();
        it.call_value(&f, args, Vec::new())
    }
}

/// Native stack for one execution. The tree-walking evaluator uses several Rust
/// frames per Python call, and the recursion limit has to trip before the stack does.
const STACK_BYTES: usize = 64 << 20;

fn on_large_stack<T: Send>(
    f: impl FnOnce() -> Result<T, Exception> + Send,
) -> Result<T, Exception> {
    std::thread::scope(|s| {
        let handle = std::thread::Builder::new()
            .name("minipy".into())
            .stack_size(STACK_BYTES)
            .spawn_scoped(s, f)
            .map_err(|e| {
                Exception::new(
                    "MemoryError",
                    format!("could not start interpreter thread: {e}"),
                )
            })?;
        handle
            .join()
            .unwrap_or_else(|_| Err(Exception::new("SystemError", "interpreter panicked")))
    })
}
