//! Deterministic text embeddings for task conditioning.
//!
//! Tokens are maximal runs of alphanumeric characters (Unicode-aware, so Hangul
//! and accented text tokenize), lowercased. Unigrams and adjacent bigrams are
//! hashed with 64-bit FNV-1a into 512 buckets with a hash-derived sign, then the
//! vector is L2-normalized.

use std::fmt;

use serde::Serialize;

pub const DIM: usize = 512;
pub const STATE_DIM: usize = 7;
pub const OBSERVATION_DIM: usize = STATE_DIM + DIM;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0100_0000_01b3;
/// Joins the two tokens of a bigram; cannot occur inside a token.
const BIGRAM_SEP: u8 = 0x1f;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EncodeError {
    EmptyText,
    StateLength(usize),
    NonFiniteState,
    Backend(String),
}

impl fmt::Display for EncodeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EncodeError::EmptyText => write!(f, "cannot encode empty text"),
            EncodeError::StateLength(n) => write!(f, "state must have {STATE_DIM} entries, got {n}"),
            EncodeError::NonFiniteState => write!(f, "state entries must be finite"),
            EncodeError::Backend(m) => write!(f, "embedding backend failed: {m}"),
        }
    }
}

impl std::error::Error for EncodeError {}

/// Unit-norm vector of length [`DIM`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaskEmbedding(Vec<f64>);

impl TaskEmbedding {
    /// Normalizes `v`; fails unless it has [`DIM`] finite entries and non-zero norm.
    pub fn from_vec(v: Vec<f64>) -> Result<Self, EncodeError> {
        if v.len() != DIM || v.iter().any(|x| !x.is_finite()) {
            return Err(EncodeError::Backend(format!("expected {DIM} finite values, got {}", v.len())));
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n == 0.0 {
            return Err(EncodeError::Backend("zero vector".into()));
        }
        Ok(TaskEmbedding(v.into_iter().map(|x| x / n).collect()))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn cosine(&self, o: &TaskEmbedding) -> f64 {
        self.0.iter().zip(&o.0).map(|(a, b)| a * b).sum()
    }
}

pub fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}

fn add_feature(v: &mut [f64], bytes: &[u8]) {
    let h = fnv1a(bytes);
    let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
    v[(h % DIM as u64) as usize] += sign;
}

/// Feature-hashing encoder.
pub fn encode(text: &str) -> Result<TaskEmbedding, EncodeError> {
    if text.trim().is_empty() {
        return Err(EncodeError::EmptyText);
    }
    let tokens = tokenize(text);
    let mut v = vec![0.0; DIM];
    for t in &tokens {
        add_feature(&mut v, t.as_bytes());
    }
    for w in tokens.windows(2) {
        let mut b = w[0].as_bytes().to_vec();
        b.push(BIGRAM_SEP);
        b.extend_from_slice(w[1].as_bytes());
        add_feature(&mut v, &b);
    }
    if v.iter().all(|x| *x == 0.0) {
        // no tokens (punctuation only) or every feature cancelled out
        add_feature(&mut v, text.as_bytes());
    }
    TaskEmbedding::from_vec(v)
}

/// State followed by embedding.
pub fn assemble_observation(state: &[f64], e: &TaskEmbedding) -> Result<Vec<f64>, EncodeError> {
    if state.len() != STATE_DIM {
        return Err(EncodeError::StateLength(state.len()));
    }
    if state.iter().any(|x| !x.is_finite()) {
        return Err(EncodeError::NonFiniteState);
    }
    let mut out = Vec::with_capacity(OBSERVATION_DIM);
    out.extend_from_slice(state);
    out.extend_from_slice(e.as_slice());
    Ok(out)
}

/// Anything that maps text to a [`TaskEmbedding`].
pub trait TextEncoder {
    fn encode(&self, text: &str) -> Result<TaskEmbedding, EncodeError>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct HashEncoder;

impl TextEncoder for HashEncoder {
    fn encode(&self, text: &str) -> Result<TaskEmbedding, EncodeError> {
        encode(text)
    }
}

/// Remote embedding endpoint: POSTs `{"input": text}` and expects
/// `{"embedding": [512 numbers]}` back. The result is renormalized.
#[derive(Debug, Clone)]
pub struct HttpEncoder {
    pub url: String,
    pub api_key: Option<String>,
}

impl HttpEncoder {
    /// Reads `LARG_EMBED_URL` and optionally `LARG_EMBED_API_KEY`.
    pub fn from_env() -> Option<Self> {
        let url = std::env::var("LARG_EMBED_URL").ok()?;
        Some(HttpEncoder { url, api_key: std::env::var("LARG_EMBED_API_KEY").ok() })
    }
}

impl TextEncoder for HttpEncoder {
    fn encode(&self, text: &str) -> Result<TaskEmbedding, EncodeError> {
        if text.trim().is_empty() {
            return Err(EncodeError::EmptyText);
        }
        let mut req = ureq::post(&self.url);
        if let Some(k) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {k}"));
        }
        let body: serde_json::Value = req
            .send_json(serde_json::json!({ "input": text }))
            .and_then(|mut r| r.body_mut().read_json())
            .map_err(|e| EncodeError::Backend(e.to_string()))?;
        let v: Vec<f64> = body
            .get("embedding")
            .and_then(|e| e.as_array())
            .ok_or_else(|| EncodeError::Backend("response has no 'embedding' array".into()))?
            .iter()
            .map(|x| x.as_f64().unwrap_or(f64::NAN))
            .collect();
        TaskEmbedding::from_vec(v)
    }
}
