use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::time::Duration;

use larg::llm::*;

const D01: &str = "Move a cube to the top right corner of the table.";

fn req() -> ChatRequest {
    ChatRequest::user(DEFAULT_MODEL, D01)
}

#[test]
fn defaults() {
    let r = req();
    assert_eq!(r.model, "gpt-3.5-turbo");
    assert_eq!(r.temperature, 0.2);
    assert_eq!(r.max_tokens, 1024);
    assert_eq!(r.messages.len(), 1);
}

#[test]
fn digest_matches_independent_sha256() {
    // python: json.dumps(r, sort_keys=True, separators=(',', ':')) then hashlib.sha256
    assert_eq!(
        req().canonical_json(),
        r#"{"max_tokens":1024,"messages":[{"content":"Move a cube to the top right corner of the table.","role":"user"}],"model":"gpt-3.5-turbo","temperature":0.2}"#
    );
    assert_eq!(req().digest(), "f9e3d22d74bd5aae68a28cf1c4cb98967b5d9e446bcd64339c268949c0a13d85");
}

#[test]
fn digest_ignores_envelope_whitespace_and_key_order() {
    let pretty = format!(
        "{{\n  \"temperature\": 0.2,\n  \"model\" :  \"gpt-3.5-turbo\",\n\t\"messages\": [ {{ \"role\": \"user\", \"content\": \"{D01}\" }} ],\n  \"max_tokens\": 1024\n}}\n"
    );
    assert_eq!(ChatRequest::from_json(&pretty).unwrap().digest(), req().digest());
}

#[test]
fn digest_is_sensitive_to_message_text() {
    let a = req();
    let mut b = req();
    b.messages[0].content.push(' ');
    assert_ne!(a.digest(), b.digest());
    let mut c = req();
    c.messages[0].content = c.messages[0].content.replace("right", "left");
    assert_ne!(a.digest(), c.digest());
}

#[test]
fn request_checks() {
    let mut r = req();
    r.temperature = 2.5;
    assert!(matches!(r.check(), Err(LlmError::Request(_))));
    r.temperature = f64::NAN;
    assert!(r.check().is_err());
    r.temperature = 2.0;
    assert!(r.check().is_ok());
    r.messages.clear();
    assert!(ScriptedBackend::new(vec!["x".to_string()]).complete(&r).is_err());
}

#[test]
fn record_then_replay() {
    let dir = tempfile::tempdir().unwrap();
    let text = "```python\ndef generate_goal(p):\n    return [p]\n```\n";
    let rec = RecordingBackend::new(Box::new(ScriptedBackend::new(vec![text.to_string()])), dir.path());
    assert_eq!(rec.complete(&req()).unwrap(), text);
    let stored: Transcript =
        serde_json::from_str(&std::fs::read_to_string(fixture_path(dir.path(), &req().digest())).unwrap()).unwrap();
    assert_eq!(stored.request_digest, req().digest());
    assert_eq!(stored.backend, "scripted");
    assert_eq!(stored.request, req());

    let replay = ReplayBackend { dir: dir.path().to_path_buf() };
    assert_eq!(replay.complete(&req()).unwrap(), text);
}

#[test]
fn replay_missing_fixture_names_digest() {
    let dir = tempfile::tempdir().unwrap();
    let replay = ReplayBackend { dir: dir.path().to_path_buf() };
    let err = replay.complete(&req()).unwrap_err();
    assert_eq!(err, LlmError::MissingFixture { digest: req().digest() });
    assert!(err.to_string().contains(&req().digest()));
}

#[test]
fn empty_completion_is_an_error() {
    let b = ScriptedBackend::new(vec![" \n\t".to_string()]);
    assert_eq!(b.complete(&req()), Err(LlmError::EmptyCompletion));
    assert_eq!(extract_code(""), Err(LlmError::EmptyCompletion));
}

#[test]
fn extraction_examples() {
    let e = extract_code("here: ```\nreturn 1\n```").unwrap();
    assert_eq!(e.code, "return 1");
    assert!(!e.unfenced);

    let bare = "def f():\n    return 1\n";
    let e = extract_code(bare).unwrap();
    assert_eq!(e.code, bare);
    assert!(e.unfenced);
    assert!(e.looks_like_code());

    let two = "First:\n```python\nx = 1\n```\nSecond:\n```python\ny = 2\n```\n";
    assert_eq!(extract_code(two).unwrap().code, "x = 1");

    let unclosed = "```python\ndef f():\n    return 2\n";
    assert_eq!(extract_code(unclosed).unwrap().code, "def f():\n    return 2");

    assert!(!extract_code("I cannot help with that.").unwrap().looks_like_code());
    assert!(!extract_code("```\n```").unwrap().looks_like_code());
}

/// One-shot HTTP server answering with `status` and `body`; returns the base URL
/// and a handle yielding the raw request.
fn serve_once(status: u16, body: &'static str) -> (String, std::thread::JoinHandle<String>) {
    let l = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1", l.local_addr().unwrap());
    let h = std::thread::spawn(move || {
        let (mut s, _) = l.accept().unwrap();
        let mut r = BufReader::new(s.try_clone().unwrap());
        let mut head = String::new();
        let mut len = 0;
        loop {
            let mut line = String::new();
            r.read_line(&mut line).unwrap();
            if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                len = v.trim().parse().unwrap();
            }
            head.push_str(&line);
            if line == "\r\n" {
                break;
            }
        }
        let mut b = vec![0; len];
        r.read_exact(&mut b).unwrap();
        head.push_str(&String::from_utf8(b).unwrap());
        write!(s, "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}", body.len()).unwrap();
        head
    });
    (url, h)
}

#[test]
fn http_backend_posts_chat_request() {
    let (url, h) = serve_once(200, r#"{"choices":[{"message":{"role":"assistant","content":"```python\nx = 1\n```"}}]}"#);
    let b = HttpBackend { base_url: url, api_key: "sk-test".into(), timeout: Duration::from_secs(10) };
    assert_eq!(b.complete(&req()).unwrap(), "```python\nx = 1\n```");
    let raw = h.join().unwrap();
    assert!(raw.starts_with("POST /v1/chat/completions"));
    assert!(raw.to_ascii_lowercase().contains("authorization: bearer sk-test"));
    assert!(raw.contains("\"model\":\"gpt-3.5-turbo\""));
}

#[test]
fn http_backend_errors() {
    let (url, h) = serve_once(401, r#"{"error":{"message":"bad key"}}"#);
    let b = HttpBackend { base_url: url, api_key: "nope".into(), timeout: Duration::from_secs(10) };
    assert!(matches!(b.complete(&req()), Err(LlmError::Auth(_))));
    h.join().unwrap();

    let (url, h) = serve_once(200, r#"{"choices":[{"message":{"role":"assistant","content":""}}]}"#);
    let b = HttpBackend { base_url: url, api_key: "k".into(), timeout: Duration::from_secs(10) };
    assert_eq!(b.complete(&req()), Err(LlmError::EmptyCompletion));
    h.join().unwrap();

    // nothing listens on a freshly released port
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let b = HttpBackend { base_url: format!("http://127.0.0.1:{port}"), api_key: "k".into(), timeout: Duration::from_secs(5) };
    assert!(matches!(b.complete(&req()), Err(LlmError::Network(_))));
}
