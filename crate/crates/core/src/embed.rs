//! Fixed-size semantic vectors for queries and agent responses.
//!
//! Two embedders are provided: an offline feature-hashing embedder that is
//! fully deterministic across platforms, and a client for a remote
//! embedding service.
//!
//! # Hash scheme
//!
//! 1. lowercase the text;
//! 2. split on runs of non-alphanumeric characters (`char::is_alphanumeric`);
//! 3. for each token compute `h = fnv1a64(utf8 bytes)`;
//! 4. `bucket = h % d`, and the sign is `+1` when `(h / d) % 2 == 0`
//!    (the next digit of the hash after the bucket), `-1` otherwise;
//! 5. accumulate the sign into the bucket, then L2-normalize unless the
//!    vector is all zero.
//!
//! Token order is ignored: texts with identical token multisets embed
//! identically.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::seed::fnv1a64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    /// Wraps raw values, rejecting non-finite entries.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("embedding entry {i}")));
        }
        Ok(Self(values))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

impl AsRef<[f64]> for EmbeddingVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Lowercased alphanumeric tokens of `text`.
pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

pub fn hash_embed(text: &str, dim: usize) -> Result<EmbeddingVector> {
    if dim == 0 {
        return Err(Error::InvalidArgument("embedding dimension must be at least 1".into()));
    }
    let d = dim as u64;
    let mut values = vec![0.0f64; dim];
    for token in tokenize(text) {
        let h = fnv1a64(token.as_bytes());
        let bucket = (h % d) as usize;
        let sign = if (h / d) % 2 == 0 { 1.0 } else { -1.0 };
        values[bucket] += sign;
    }
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        values.iter_mut().for_each(|v| *v /= norm);
    }
    Ok(EmbeddingVector(values))
}

/// Client for a service answering `POST {"input": text}` with
/// `{"embedding": [floats]}`.
#[derive(Debug, Clone)]
pub struct RemoteEmbedder {
    endpoint: String,
    token: Option<String>,
    dim: usize,
    agent: ureq::Agent,
}

impl RemoteEmbedder {
    pub fn new(endpoint: impl Into<String>, dim: usize, token: Option<String>) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(60)))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            endpoint: endpoint.into(),
            token,
            dim,
            agent,
        }
    }

    pub fn embed(&self, text: &str) -> Result<EmbeddingVector> {
        let mut req = self.agent.post(&self.endpoint);
        if let Some(token) = &self.token {
            req = req.header("Authorization", &format!("Bearer {token}"));
        }
        let mut resp = req
            .send_json(serde_json::json!({ "input": text }))
            .map_err(|e| Error::Transport(e.to_string()))?;
        let status = resp.status();
        let body = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| Error::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(Error::Transport(format!("embedding service returned {status}")));
        }
        decode_embedding_response(&body, self.dim)
    }
}

/// Validates a raw embedding-service reply against the expected dimension.
///
/// `null`, `"NaN"` and `"Infinity"` entries (the usual JSON stand-ins for
/// non-finite floats) are reported as non-finite rather than as parse errors.
pub fn decode_embedding_response(body: &str, dim: usize) -> Result<EmbeddingVector> {
    let value: Value = match serde_json::from_str(body) {
        Ok(v) => v,
        Err(e) => {
            if body.contains("NaN") || body.contains("Infinity") {
                return Err(Error::NonFinite("embedding service reply".into()));
            }
            return Err(Error::Protocol(format!("invalid JSON: {e}")));
        }
    };
    let entries = value
        .get("embedding")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::Protocol("missing \"embedding\" array".into()))?;
    if entries.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            received: entries.len(),
        });
    }
    let mut values = Vec::with_capacity(dim);
    for (i, entry) in entries.iter().enumerate() {
        match entry {
            Value::Number(n) => values.push(n.as_f64().unwrap_or(f64::NAN)),
            Value::Null | Value::String(_) => values.push(f64::NAN),
            other => return Err(Error::Protocol(format!("embedding entry {i} is {other}"))),
        }
    }
    EmbeddingVector::new(values)
}

/// The embedder selected by configuration.
#[derive(Debug, Clone)]
pub enum Embedder {
    Hash {
        dim: usize,
        char_cap: Option<usize>,
    },
    Remote {
        client: RemoteEmbedder,
        char_cap: Option<usize>,
    },
}

impl Embedder {
    pub fn hash(dim: usize) -> Self {
        Embedder::Hash { dim, char_cap: None }
    }

    pub fn dim(&self) -> usize {
        match self {
            Embedder::Hash { dim, .. } => *dim,
            Embedder::Remote { client, .. } => client.dim,
        }
    }

    pub fn embed(&self, text: &str) -> Result<EmbeddingVector> {
        match self {
            Embedder::Hash { dim, char_cap } => hash_embed(truncate(text, *char_cap), *dim),
            Embedder::Remote { client, char_cap } => client.embed(truncate(text, *char_cap)),
        }
    }
}

fn truncate(text: &str, cap: Option<usize>) -> &str {
    match cap {
        Some(cap) => match text.char_indices().nth(cap) {
            Some((idx, _)) => &text[..idx],
            None => text,
        },
        None => text,
    }
}
