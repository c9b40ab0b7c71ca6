//! Agents, prompts, responses and the per-query trajectory record.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::embed::EmbeddingVector;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub agent_id: usize,
    pub model_ref: String,
    pub profile_text: String,
    #[serde(default)]
    pub tool_names: Vec<String>,
}

/// Checks that ids are exactly `0..N` in order and profiles are non-empty.
pub fn validate_pool(specs: &[AgentSpec]) -> Result<()> {
    for (i, spec) in specs.iter().enumerate() {
        if spec.agent_id != i {
            return Err(Error::Config(format!(
                "pool entry {i} has agent_id {}; ids must be 0..N in order",
                spec.agent_id
            )));
        }
        if spec.profile_text.trim().is_empty() {
            return Err(Error::Config(format!("agent {i} has an empty profile")));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    pub system_part: String,
    pub context_part: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentResponse {
    pub agent_id: usize,
    pub step_index: usize,
    pub text: String,
    pub token_entropies: Vec<f64>,
    #[serde(rename = "token_count_M")]
    pub token_count: usize,
    /// Absent when the backend returned no log-probabilities; such responses
    /// cannot supervise the router.
    pub predictive_entropy: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    Summarizer,
    StepLimit,
}

#[allow(non_snake_case)]
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step_index: usize,
    pub logits_z: Vec<f64>,
    pub count_probs: Vec<f64>,
    pub k: usize,
    pub selected_ids: Vec<usize>,
    pub alpha: Vec<f64>,
    /// Router input at this step: the query embedding at step 1, otherwise
    /// the previous step's aggregated responses.
    pub context_X: EmbeddingVector,
    pub entropy_E: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub query: String,
    pub steps: Vec<StepRecord>,
    #[serde(with = "response_list")]
    pub responses: BTreeMap<(usize, usize), AgentResponse>,
    pub final_answer: Option<String>,
    pub terminated_by: Option<Termination>,
    pub total_agent_calls: usize,
    pub total_tokens: usize,
}

pub fn new_trajectory(query: &str) -> Result<Trajectory> {
    if query.is_empty() {
        return Err(Error::InvalidArgument("query must be non-empty".into()));
    }
    Ok(Trajectory {
        query: query.to_owned(),
        steps: Vec::new(),
        responses: BTreeMap::new(),
        final_answer: None,
        terminated_by: None,
        total_agent_calls: 0,
        total_tokens: 0,
    })
}

impl Trajectory {
    /// Appends a step. `executed` is the number of agents invoked at this
    /// step (including any that failed); `responses` are the ones that came
    /// back.
    pub fn push_step(
        &mut self,
        record: StepRecord,
        executed: usize,
        responses: Vec<AgentResponse>,
        k_cap: usize,
    ) -> Result<()> {
        let expected = self.steps.len() + 1;
        if record.step_index != expected {
            return Err(Error::InvalidArgument(format!(
                "step index {} but {expected} expected",
                record.step_index
            )));
        }
        if record.k < 1 || record.k > k_cap {
            return Err(Error::InvalidArgument(format!("k = {} outside 1..={k_cap}", record.k)));
        }
        if record.selected_ids.len() != record.k || record.alpha.len() != record.k {
            return Err(Error::InvalidArgument(format!(
                "k = {} but {} ids and {} weights",
                record.k,
                record.selected_ids.len(),
                record.alpha.len()
            )));
        }
        let mut seen = record.selected_ids.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != record.k {
            return Err(Error::InvalidArgument("selected ids are not distinct".into()));
        }
        let sum: f64 = record.alpha.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("alpha sums to {sum}")));
        }
        for r in &responses {
            if r.step_index != expected {
                return Err(Error::InvalidArgument(format!(
                    "response of agent {} is tagged step {}",
                    r.agent_id, r.step_index
                )));
            }
        }
        self.total_agent_calls += executed;
        for r in responses {
            self.total_tokens += r.token_count;
            self.responses.insert((r.step_index, r.agent_id), r);
        }
        self.steps.push(record);
        Ok(())
    }

    pub fn finish(&mut self, answer: String, by: Termination) {
        self.final_answer = Some(answer);
        self.terminated_by = Some(by);
    }

    /// Sum of `k_i` over the routed steps.
    pub fn routed_calls(&self) -> usize {
        self.steps.iter().map(|s| s.k).sum()
    }

    /// Responses of one step, in ascending agent order.
    pub fn step_responses(&self, step_index: usize) -> impl Iterator<Item = &AgentResponse> {
        self.responses
            .range((step_index, 0)..(step_index + 1, 0))
            .map(|(_, r)| r)
    }

    pub fn to_json_line(&self) -> Result<String> {
        let value = serde_json::to_value(self).map_err(|e| Error::Parse(e.to_string()))?;
        let mut out = String::new();
        write_value(&value, &mut out);
        Ok(out)
    }

    pub fn from_json_line(line: &str) -> Result<Self> {
        serde_json::from_str(line).map_err(|e| Error::Parse(e.to_string()))
    }
}

/// Writes trajectories as JSONL.
pub fn write_jsonl<W: Write>(mut out: W, trajectories: &[Trajectory]) -> std::io::Result<()> {
    for t in trajectories {
        let line = t
            .to_json_line()
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e.to_string()))?;
        writeln!(out, "{line}")?;
    }
    Ok(())
}

/// Compact JSON with every float in 17-significant-digit exponent form so
/// that files are byte-stable and round-trip exactly.
fn write_value(v: &Value, out: &mut String) {
    match v {
        Value::Number(n) => {
            if n.is_f64() {
                out.push_str(&crate::router::fmt_f64(n.as_f64().unwrap_or(f64::NAN)));
            } else {
                out.push_str(&n.to_string());
            }
        }
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_value(item, out);
            }
            out.push(']');
        }
        Value::Object(map) => {
            out.push('{');
            for (i, (k, item)) in map.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&Value::String(k.clone()).to_string());
                out.push(':');
                write_value(item, out);
            }
            out.push('}');
        }
        other => out.push_str(&other.to_string()),
    }
}

mod response_list {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(map: &BTreeMap<(usize, usize), AgentResponse>, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(map.values())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<(usize, usize), AgentResponse>, D::Error> {
        let list = Vec::<AgentResponse>::deserialize(d)?;
        let mut map = BTreeMap::new();
        for r in list {
            let key = (r.step_index, r.agent_id);
            if map.insert(key, r).is_some() {
                return Err(serde::de::Error::custom(format!(
                    "duplicate response for step {} agent {}",
                    key.0, key.1
                )));
            }
        }
        Ok(map)
    }
}
