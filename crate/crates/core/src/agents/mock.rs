//! Deterministic stand-in agents whose predictive entropy is set per task tag.
//!
//! Each generated token's distribution is a mixture of a point mass and the
//! uniform distribution over `V` symbols. Its entropy grows monotonically
//! from 0 (pure point mass) to `ln V` (pure uniform) with the mixing weight,
//! so bisection reaches any target in that range.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learning::shannon_entropy;
use crate::seed::rng_for;
use crate::trajectory::AgentResponse;

pub const DEFAULT_TAG: &str = "default";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Skill {
    /// Target mean per-token entropy in nats.
    pub entropy: f64,
    #[serde(default)]
    pub jitter: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockProfile {
    pub agent_id: usize,
    pub skill_map: BTreeMap<String, Skill>,
    pub response_template: String,
    pub vocab_size: usize,
    pub tokens_per_response: usize,
}

impl MockProfile {
    pub fn validate(&self) -> Result<()> {
        if self.vocab_size < 2 {
            return Err(Error::Config(format!(
                "mock agent {}: vocab size must be at least 2",
                self.agent_id
            )));
        }
        if self.tokens_per_response < 1 {
            return Err(Error::Config(format!(
                "mock agent {}: tokens per response must be positive",
                self.agent_id
            )));
        }
        let max = (self.vocab_size as f64).ln();
        for (tag, skill) in &self.skill_map {
            if !(skill.entropy >= 0.0 && skill.entropy <= max) {
                return Err(Error::Config(format!(
                    "mock agent {} tag {tag}: entropy {} outside [0, ln {}]",
                    self.agent_id, skill.entropy, self.vocab_size
                )));
            }
            if !skill.jitter.is_finite() || skill.jitter < 0.0 {
                return Err(Error::Config(format!(
                    "mock agent {} tag {tag}: jitter must be non-negative",
                    self.agent_id
                )));
            }
        }
        Ok(())
    }

    pub fn skill(&self, tag: &str) -> Result<Skill> {
        self.skill_map
            .get(tag)
            .or_else(|| self.skill_map.get(DEFAULT_TAG))
            .copied()
            .ok_or_else(|| Error::Agent {
                agent_id: self.agent_id,
                reason: format!("no skill entry for tag '{tag}' and no default"),
            })
    }
}

/// Entropy of `(1−ε)·δ + ε·uniform(V)`.
pub fn mixture_entropy(eps: f64, vocab: usize) -> f64 {
    let v = vocab as f64;
    let rest = eps / v;
    let top = 1.0 - eps + rest;
    let mut h = if top > 0.0 { -top * top.ln() } else { 0.0 };
    if rest > 0.0 {
        h -= (v - 1.0) * rest * rest.ln();
    }
    h
}

/// Mixing weight whose mixture entropy equals `target`, by bisection on
/// `[0, 1]`. Targets are clamped to `[0, ln V]`.
pub fn mixture_epsilon_for_entropy(target: f64, vocab: usize) -> f64 {
    let max = (vocab as f64).ln();
    if target <= 0.0 {
        return 0.0;
    }
    if target >= max {
        return 1.0;
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    // Runs the interval down to adjacent floats; far below the 1e-9 needed.
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if mixture_entropy(mid, vocab) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Renders `template`, replacing `{agent_id}`, `{tag}`, `{step}`, `{query}`
/// and `{tokens}`.
fn render(template: &str, agent_id: usize, tag: &str, step: usize, query: &str, tokens: &str) -> String {
    template
        .replace("{agent_id}", &agent_id.to_string())
        .replace("{tag}", tag)
        .replace("{step}", &step.to_string())
        .replace("{query}", query)
        .replace("{tokens}", tokens)
}

/// Generates one response. Pure in `(profile, tag, step, query, seed)`.
pub fn mock_execute(
    profile: &MockProfile,
    query: &str,
    task_tag: &str,
    step_index: usize,
    seed: u64,
) -> Result<AgentResponse> {
    let skill = profile.skill(task_tag)?;
    let v = profile.vocab_size;
    let max = (v as f64).ln();
    let mut rng = rng_for(seed, "mock/tokens");
    let mut entropies = Vec::with_capacity(profile.tokens_per_response);
    let mut words = Vec::with_capacity(profile.tokens_per_response);
    let mut dist = vec![0.0; v];
    for _ in 0..profile.tokens_per_response {
        let noise = if skill.jitter > 0.0 {
            rng.random_range(-1.0..=1.0)
        } else {
            0.0
        };
        let target = (skill.entropy + skill.jitter * noise).clamp(0.0, max);
        let eps = mixture_epsilon_for_entropy(target, v);
        let argmax = rng.random_range(0..v);
        dist.iter_mut().for_each(|p| *p = eps / v as f64);
        dist[argmax] += 1.0 - eps;
        entropies.push(shannon_entropy(&dist));
        words.push(format!("w{argmax}"));
    }
    let pe = entropies.iter().sum::<f64>() / entropies.len() as f64;
    let text = render(
        &profile.response_template,
        profile.agent_id,
        task_tag,
        step_index,
        query,
        &words.join(" "),
    );
    Ok(AgentResponse {
        agent_id: profile.agent_id,
        step_index,
        text,
        token_count: entropies.len(),
        token_entropies: entropies,
        predictive_entropy: Some(pe),
    })
}
