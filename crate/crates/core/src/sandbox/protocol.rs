//! Newline-delimited JSON messages exchanged with a sandbox worker.

use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const PROTOCOL_VERSION: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum Request {
    Hello,
    Load {
        source: String,
        entry: String,
    },
    Call {
        args: Vec<Value>,
        timeout_ms: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    Reset,
    Exit,
}

impl Request {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("requests always serialize")
    }

    /// Parses one request line. The error text becomes a `ProtocolError` message.
    pub fn parse(line: &str) -> Result<Request, String> {
        let v: Value = serde_json::from_str(line).map_err(|_| "request is not valid JSON".to_string())?;
        let obj = v.as_object().ok_or("request must be a JSON object")?;
        let op = match obj.get("op") {
            Some(Value::String(s)) => s.as_str(),
            Some(_) => return Err("field 'op' must be a string".into()),
            None => return Err("missing field 'op'".into()),
        };
        let string = |k: &str| match obj.get(k) {
            Some(Value::String(s)) => Ok(s.clone()),
            Some(_) => Err(format!("field '{k}' must be a string")),
            None => Err(format!("missing field '{k}'")),
        };
        let allowed: &[&str] = match op {
            "hello" | "reset" | "exit" => &["op"],
            "load" => &["op", "source", "entry"],
            "call" => &["op", "args", "timeout_ms", "seed"],
            other => return Err(format!("unknown op '{}'", truncate(other))),
        };
        if let Some(k) = obj.keys().find(|k| !allowed.contains(&k.as_str())) {
            return Err(format!("unexpected field '{}' for op '{op}'", truncate(k)));
        }
        Ok(match op {
            "hello" => Request::Hello,
            "reset" => Request::Reset,
            "exit" => Request::Exit,
            "load" => Request::Load { source: string("source")?, entry: string("entry")? },
            _ => {
                let args = match obj.get("args") {
                    Some(Value::Array(a)) => a.clone(),
                    Some(_) => return Err("field 'args' must be an array".into()),
                    None => return Err("missing field 'args'".into()),
                };
                let timeout_ms = match obj.get("timeout_ms") {
                    Some(t) => t.as_u64().ok_or("field 'timeout_ms' must be a non-negative integer")?,
                    None => return Err("missing field 'timeout_ms'".into()),
                };
                let seed = match obj.get("seed") {
                    None | Some(Value::Null) => None,
                    Some(s) => Some(s.as_u64().ok_or("field 'seed' must be a non-negative integer")?),
                };
                Request::Call { args, timeout_ms, seed }
            }
        })
    }
}

fn truncate(s: &str) -> String {
    s.chars().take(40).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase", deny_unknown_fields)]
pub enum Response {
    Ok { value: Value },
    Error { etype: String, message: String, frame: String },
}

impl Response {
    pub fn ok(value: Value) -> Self {
        Response::Ok { value }
    }

    /// An error response. An empty message falls back to the exception class name.
    pub fn error(etype: impl Into<String>, message: impl Into<String>, frame: impl Into<String>) -> Self {
        let etype = etype.into();
        let mut message = message.into();
        if message.is_empty() {
            message = etype.clone();
        }
        Response::Error { etype, message, frame: frame.into() }
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("responses always serialize")
    }

    pub fn parse(line: &str) -> Result<Response, String> {
        serde_json::from_str(line).map_err(|e| format!("malformed response: {e}"))
    }
}
