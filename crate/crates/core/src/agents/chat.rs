//! OpenAI-compatible chat-completions client.
//!
//! Per-token entropy comes from the returned top-j log-probabilities,
//! renormalized over those j candidates. Mass outside the top j is dropped,
//! so the estimate is biased low.

use std::time::Duration;

use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::learning::shannon_entropy;

pub const API_KEY_ENV: &str = "DMOA_API_KEY";

#[derive(Debug, Clone)]
pub struct ChatClient {
    endpoint: String,
    model: String,
    api_key: Option<String>,
    top_logprobs: usize,
    max_tokens: Option<u32>,
    agent: ureq::Agent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatReply {
    pub text: String,
    /// `None` when the service omitted log-probabilities.
    pub token_entropies: Option<Vec<f64>>,
    pub token_count: usize,
}

impl ChatClient {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>, api_key: Option<String>) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(300)))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            endpoint: endpoint.into(),
            model: model.into(),
            api_key,
            top_logprobs: 5,
            max_tokens: None,
            agent,
        }
    }

    /// Reads the key from `DMOA_API_KEY`, if set.
    pub fn from_env(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        Self::new(endpoint, model, std::env::var(API_KEY_ENV).ok())
    }

    pub fn with_top_logprobs(mut self, j: usize) -> Self {
        self.top_logprobs = j;
        self
    }

    pub fn with_max_tokens(mut self, n: Option<u32>) -> Self {
        self.max_tokens = n;
        self
    }

    pub fn request_body(&self, system: &str, user: &str, logprobs: bool) -> Value {
        let mut body = json!({
            "model": self.model,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user},
            ],
        });
        if logprobs {
            body["logprobs"] = json!(true);
            body["top_logprobs"] = json!(self.top_logprobs);
        }
        if let Some(n) = self.max_tokens {
            body["max_tokens"] = json!(n);
        }
        body
    }

    pub fn complete(&self, system: &str, user: &str, logprobs: bool) -> Result<ChatReply> {
        let mut req = self.agent.post(&self.endpoint);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req
            .send_json(self.request_body(system, user, logprobs))
            .map_err(|e| Error::Transport(format!("{}: {e}", self.endpoint)))?;
        let status = resp.status();
        let body = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| Error::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(Error::Transport(format!("{} returned {status}", self.endpoint)));
        }
        parse_chat_reply(&body)
    }
}

/// Extracts text, per-token entropies and token count from a completion.
pub fn parse_chat_reply(body: &str) -> Result<ChatReply> {
    let v: Value = serde_json::from_str(body).map_err(|e| Error::Protocol(format!("invalid JSON: {e}")))?;
    let choice = v
        .get("choices")
        .and_then(|c| c.get(0))
        .ok_or_else(|| Error::Protocol("no choices in reply".into()))?;
    let text = choice
        .pointer("/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| Error::Protocol("reply has no message content".into()))?
        .to_owned();

    let token_entropies = match choice.pointer("/logprobs/content").and_then(Value::as_array) {
        Some(tokens) if !tokens.is_empty() => {
            let mut hs = Vec::with_capacity(tokens.len());
            for (i, tok) in tokens.iter().enumerate() {
                hs.push(token_entropy(tok).map_err(|e| Error::Protocol(format!("token {i}: {e}")))?);
            }
            Some(hs)
        }
        _ => None,
    };
    let token_count = match &token_entropies {
        Some(hs) => hs.len(),
        None => v
            .pointer("/usage/completion_tokens")
            .and_then(Value::as_u64)
            .map(|n| n as usize)
            .unwrap_or_else(|| text.split_whitespace().count())
            .max(1),
    };
    Ok(ChatReply {
        text,
        token_entropies,
        token_count,
    })
}

fn token_entropy(tok: &Value) -> std::result::Result<f64, String> {
    let logprobs: Vec<f64> = match tok.get("top_logprobs").and_then(Value::as_array) {
        Some(top) if !top.is_empty() => top
            .iter()
            .map(|t| {
                t.get("logprob")
                    .and_then(Value::as_f64)
                    .ok_or("candidate without logprob")
            })
            .collect::<std::result::Result<_, _>>()?,
        _ => vec![tok.get("logprob").and_then(Value::as_f64).ok_or("missing logprob")?],
    };
    if logprobs.iter().any(|l| !l.is_finite() && *l != f64::NEG_INFINITY) {
        return Err("non-finite logprob".into());
    }
    let max = logprobs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err("all candidates have zero probability".into());
    }
    let w: Vec<f64> = logprobs.iter().map(|l| (l - max).exp()).collect();
    let s: f64 = w.iter().sum();
    let p: Vec<f64> = w.iter().map(|x| x / s).collect();
    Ok(shannon_entropy(&p))
}
