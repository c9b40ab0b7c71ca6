//! Synthetic task families: mock pools where designated agents are
//! confident (low entropy) on each task tag, plus matching query streams.

use std::collections::BTreeMap;

use rand::seq::IndexedRandom;
use rand::Rng;

use crate::agents::{Agent, MockAgent, MockProfile, Skill, DEFAULT_TAG};
use crate::error::{Error, Result};
use crate::seed::rng_for;
use crate::trajectory::AgentSpec;

const ROLES: [(&str, &[&str]); 4] = [
    ("You solve math problems step by step.", &["calculator", "python"]),
    ("You write and debug short programs.", &["python"]),
    ("You answer factual questions and cite what you used.", &["search"]),
    ("You break problems into plans and check each part.", &["calculator"]),
];

const STEMS: [&str; 12] = [
    "sum", "rate", "graph", "prime", "angle", "proof", "loop", "array", "cell", "gene", "law", "price",
];

const SHARED: [&str; 8] = [
    "compute", "explain", "value", "find", "show", "total", "given", "result",
];

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticFamily {
    pub pool_size: usize,
    /// Tag → agents that are confident on it.
    pub designated: BTreeMap<String, Vec<usize>>,
    pub low_entropy: f64,
    pub high_entropy: f64,
    pub jitter: f64,
    pub vocab_size: usize,
    pub tokens_per_response: usize,
}

impl SyntheticFamily {
    /// Eight agents, four tags, two confident agents per tag.
    pub fn paired(pool_size: usize) -> Self {
        let pairs: [(&str, [usize; 2]); 4] = [("A", [2, 5]), ("B", [0, 7]), ("C", [1, 4]), ("D", [3, 6])];
        Self::with_designated(
            pool_size,
            pairs.iter().map(|(t, ids)| (t.to_string(), ids.to_vec())).collect(),
        )
    }

    pub fn with_designated(pool_size: usize, designated: BTreeMap<String, Vec<usize>>) -> Self {
        Self {
            pool_size,
            designated,
            low_entropy: 0.2,
            high_entropy: 2.0,
            jitter: 0.05,
            vocab_size: 16,
            tokens_per_response: 16,
        }
    }

    pub fn tags(&self) -> Vec<&str> {
        self.designated.keys().map(String::as_str).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.designated.is_empty() {
            return Err(Error::Config("synthetic family has no tags".into()));
        }
        for (tag, ids) in &self.designated {
            if ids.is_empty() || ids.iter().any(|&i| i >= self.pool_size) {
                return Err(Error::Config(format!(
                    "tag {tag}: designated agents must be non-empty and below {}",
                    self.pool_size
                )));
            }
        }
        Ok(())
    }

    pub fn profiles(&self) -> Vec<(AgentSpec, MockProfile)> {
        (0..self.pool_size)
            .map(|id| {
                let (role, tools) = ROLES[id % ROLES.len()];
                let spec = AgentSpec {
                    agent_id: id,
                    model_ref: "mock".into(),
                    profile_text: format!("You are agent {id}. {role}"),
                    tool_names: tools.iter().map(|t| t.to_string()).collect(),
                };
                let high = Skill {
                    entropy: self.high_entropy,
                    jitter: self.jitter,
                };
                let mut skill_map = BTreeMap::new();
                skill_map.insert(DEFAULT_TAG.to_owned(), high);
                for (tag, ids) in &self.designated {
                    let entropy = if ids.contains(&id) {
                        self.low_entropy
                    } else {
                        self.high_entropy
                    };
                    skill_map.insert(
                        tag.clone(),
                        Skill {
                            entropy,
                            jitter: self.jitter,
                        },
                    );
                }
                let profile = MockProfile {
                    agent_id: id,
                    skill_map,
                    response_template: "agent {agent_id} answers {tag} at step {step}: {tokens}".into(),
                    vocab_size: self.vocab_size,
                    tokens_per_response: self.tokens_per_response,
                };
                (spec, profile)
            })
            .collect()
    }

    pub fn agents(&self) -> Result<Vec<Box<dyn Agent>>> {
        self.validate()?;
        self.profiles()
            .into_iter()
            .map(|(spec, profile)| Ok(Box::new(MockAgent::new(spec, profile)?) as Box<dyn Agent>))
            .collect()
    }

    /// `count` queries over this family's tags; see [`synthetic_queries`].
    pub fn queries(&self, count: usize, seed: u64, label: &str) -> Vec<String> {
        synthetic_queries(&self.tags(), count, seed, label)
    }
}

/// `count` queries with uniformly drawn tags. Each query uses words specific
/// to its tag plus shared filler, so tags are separable from the text alone.
pub fn synthetic_queries(tags: &[&str], count: usize, seed: u64, label: &str) -> Vec<String> {
    if tags.is_empty() {
        return Vec::new();
    }
    let mut rng = rng_for(seed, &format!("synthetic/{label}"));
    (0..count)
        .map(|_| {
            let tag = tags[rng.random_range(0..tags.len())];
            let prefix = tag.to_lowercase();
            let mut words: Vec<String> = (0..5)
                .map(|_| format!("{prefix}{}", STEMS.choose(&mut rng).unwrap_or(&"sum")))
                .collect();
            for _ in 0..3 {
                words.push(SHARED.choose(&mut rng).unwrap_or(&"value").to_string());
            }
            format!("[{tag}] {} {}", words.join(" "), rng.random_range(1..1000))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::{mock_execute, task_tag};

    #[test]
    fn designated_agents_are_confident() {
        let fam = SyntheticFamily::paired(8);
        fam.validate().unwrap();
        let profiles = fam.profiles();
        for (id, (_, p)) in profiles.iter().enumerate() {
            let r = mock_execute(p, "[A] x", "A", 1, 3).unwrap();
            let pe = r.predictive_entropy.unwrap();
            if id == 2 || id == 5 {
                assert!(pe < 0.3, "{id}: {pe}");
            } else {
                assert!(pe > 1.9, "{id}: {pe}");
            }
        }
    }

    #[test]
    fn queries_are_tagged_and_reproducible() {
        let fam = SyntheticFamily::paired(8);
        let a = fam.queries(50, 1, "train");
        assert_eq!(a, fam.queries(50, 1, "train"));
        assert_ne!(a, fam.queries(50, 1, "test"));
        for q in &a {
            assert!(fam.designated.contains_key(task_tag(q)), "{q}");
        }
        let tags: std::collections::BTreeSet<_> = a.iter().map(|q| task_tag(q)).collect();
        assert_eq!(tags.len(), 4);
    }

    #[test]
    fn rejects_out_of_range_designations() {
        let mut fam = SyntheticFamily::paired(8);
        fam.pool_size = 6;
        assert!(fam.agents().is_err());
    }
}
