//! Worker side of the protocol, backed by the bundled interpreter. Used in-process
//! as the stub worker and as the `larg-worker` executable.

use std::io::{BufRead, Read, Write};
use std::time::Duration;

use minipy::{Exception, Program, RunOptions};
use serde_json::{json, Value};

use super::protocol::{Request, Response, PROTOCOL_VERSION};

/// Longest line the runner will read; longer requests are answered with a protocol error.
pub const MAX_LINE: usize = 4 << 20;

#[derive(Default)]
pub struct Runner {
    loaded: Option<(Program, String)>,
}

pub fn exception_response(e: &Exception) -> Response {
    let frame = e.frame.as_ref().map(|f| f.to_string()).unwrap_or_default();
    Response::error(e.etype.clone(), e.message.clone(), frame)
}

impl Runner {
    pub fn new() -> Self {
        Runner::default()
    }

    /// Handles one request line. The flag is true when the worker should stop.
    pub fn handle_line(&mut self, line: &str) -> (String, bool) {
        let line = line.strip_suffix('\n').unwrap_or(line);
        let line = line.strip_suffix('\r').unwrap_or(line);
        match Request::parse(line) {
            Ok(req) => {
                let exit = req == Request::Exit;
                (self.handle(req).to_line(), exit)
            }
            Err(msg) => (Response::error("ProtocolError", msg, "").to_line(), false),
        }
    }

    pub fn handle(&mut self, req: Request) -> Response {
        match req {
            Request::Hello => Response::ok(json!({ "protocol": PROTOCOL_VERSION })),
            Request::Reset | Request::Exit => {
                self.loaded = None;
                Response::ok(Value::Null)
            }
            Request::Load { source, entry } => {
                self.loaded = None;
                let prog = match Program::compile(&source) {
                    Ok(p) => p,
                    Err(e) => return exception_response(&e),
                };
                match prog.load(&RunOptions::default()) {
                    Err(e) => exception_response(&e),
                    Ok(names) if !names.contains(&entry) => {
                        Response::error("NameError", format!("name '{entry}' is not defined"), "")
                    }
                    Ok(_) => {
                        self.loaded = Some((prog, entry.clone()));
                        Response::ok(json!({ "entry": entry }))
                    }
                }
            }
            Request::Call { args, timeout_ms, seed } => {
                let Some((prog, entry)) = &self.loaded else {
                    return Response::error("NoEntryLoaded", "no entry loaded; send a load request first", "");
                };
                let opts = RunOptions { timeout: Some(Duration::from_millis(timeout_ms)), seed: seed.unwrap_or(0) };
                match prog.call(entry, &args, &opts) {
                    Ok(v) => Response::ok(v),
                    Err(e) => exception_response(&e),
                }
            }
        }
    }
}

/// Answers every request line on `input` with exactly one line on `output` until
/// an exit request or end of input.
pub fn serve<R: BufRead, W: Write>(input: R, mut output: W) -> std::io::Result<()> {
    let mut runner = Runner::new();
    let mut input = input;
    let mut buf = Vec::new();
    loop {
        buf.clear();
        let n = Read::by_ref(&mut input).take(MAX_LINE as u64 + 1).read_until(b'\n', &mut buf)?;
        if n == 0 {
            return Ok(());
        }
        let (reply, exit) = if buf.len() > MAX_LINE && !buf.ends_with(b"\n") {
            // drain the rest of the oversized line before answering
            let mut rest = Vec::new();
            input.read_until(b'\n', &mut rest)?;
            (Response::error("ProtocolError", "request line too long", "").to_line(), false)
        } else {
            match std::str::from_utf8(&buf) {
                Ok(s) => runner.handle_line(s),
                Err(_) => (Response::error("ProtocolError", "request is not valid UTF-8", "").to_line(), false),
            }
        };
        output.write_all(reply.as_bytes())?;
        output.write_all(b"\n")?;
        output.flush()?;
        if exit {
            return Ok(());
        }
    }
}
