//! TOML run configuration.
//!
//! Relative paths inside the file are resolved against the directory that
//! holds the config, so a config and its outputs can travel together.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use agentroute_core::agents::summarizer::{ChatSummarizer, MockSummarizer, Summarizer};
use agentroute_core::agents::{Agent, ChatAgent, ChatClient, MockAgent, MockProfile, Skill, DEFAULT_TAG};
use agentroute_core::embed::RemoteEmbedder;
use agentroute_core::learning::{AdamWConfig, LossKind};
use agentroute_core::orchestrator::{Runtime, TrainHyper};
use agentroute_core::{AgentSpec, Embedder, Error, Result, RouterConfig};
use serde::Deserialize;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub router: RouterSection,
    #[serde(default)]
    pub embedder: EmbedderSection,
    #[serde(default)]
    pub backend: BackendSection,
    #[serde(default)]
    pub summarizer: SummarizerSection,
    #[serde(default)]
    pub training: TrainingSection,
    #[serde(default)]
    pub paths: PathsSection,
    pub synthetic: Option<SyntheticSection>,
    #[serde(default)]
    pub pool: Vec<PoolEntry>,
    /// Directory of the config file; filled in by [`load_config`].
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RouterSection {
    pub pool_size: usize,
    pub max_route: usize,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_embed_dim")]
    pub embed_dim: usize,
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
    #[serde(default = "default_train_steps")]
    pub train_steps: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_temperature() -> f64 {
    agentroute_core::config::DEFAULT_TEMPERATURE
}
fn default_embed_dim() -> usize {
    agentroute_core::config::DEFAULT_EMBED_DIM
}
fn default_max_steps() -> usize {
    agentroute_core::config::DEFAULT_MAX_STEPS
}
fn default_train_steps() -> usize {
    agentroute_core::config::DEFAULT_TRAIN_STEPS
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbedderKind {
    #[default]
    Hash,
    Remote,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbedderSection {
    #[serde(default)]
    pub kind: EmbedderKind,
    pub endpoint: Option<String>,
    /// Texts longer than this many characters are cut before embedding.
    pub char_cap: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    Mock,
    Chat,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendSection {
    #[serde(default)]
    pub kind: BackendKind,
    pub endpoint: Option<String>,
    #[serde(default = "default_top_logprobs")]
    pub top_logprobs: usize,
    pub max_tokens: Option<u32>,
}

fn default_top_logprobs() -> usize {
    5
}

impl Default for BackendSection {
    fn default() -> Self {
        Self {
            kind: BackendKind::Mock,
            endpoint: None,
            top_logprobs: default_top_logprobs(),
            max_tokens: None,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SummarizerSection {
    #[serde(default)]
    pub kind: BackendKind,
    /// Mock only: answer at this step; unset means only the step limit ends a run.
    pub final_at_step: Option<usize>,
    /// Chat only; defaults to the backend endpoint.
    pub endpoint: Option<String>,
    pub model: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSection {
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default)]
    pub loss: LossKind,
    #[serde(default = "default_weight_decay")]
    pub weight_decay: f64,
    #[serde(default = "default_clip")]
    pub clip_norm: f64,
    /// One query per line. When unset, `[synthetic]` generates them.
    pub queries: Option<PathBuf>,
}

fn default_lr() -> f64 {
    AdamWConfig::default().lr
}
fn default_batch() -> usize {
    TrainHyper::default().batch_size
}
fn default_epochs() -> usize {
    TrainHyper::default().epochs
}
fn default_weight_decay() -> f64 {
    AdamWConfig::default().weight_decay
}
fn default_clip() -> f64 {
    AdamWConfig::default().clip_norm
}

impl Default for TrainingSection {
    fn default() -> Self {
        Self {
            lr: default_lr(),
            batch_size: default_batch(),
            epochs: default_epochs(),
            loss: LossKind::default(),
            weight_decay: default_weight_decay(),
            clip_norm: default_clip(),
            queries: None,
        }
    }
}

impl TrainingSection {
    pub fn hyper(&self) -> TrainHyper {
        TrainHyper {
            adamw: AdamWConfig {
                lr: self.lr,
                weight_decay: self.weight_decay,
                clip_norm: self.clip_norm,
                ..AdamWConfig::default()
            },
            batch_size: self.batch_size,
            epochs: self.epochs,
            loss: self.loss,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsSection {
    /// Parameters `infer` and `ttt` start from; a fresh seeded init when
    /// unset. Training always starts from the seeded init.
    pub params_in: Option<PathBuf>,
    pub params_out: Option<PathBuf>,
    /// Trajectory JSONL output.
    pub trace_out: Option<PathBuf>,
    /// Training loss CSV output.
    pub metrics_out: Option<PathBuf>,
}

/// Generated training queries. Tags are the bracketed prefixes the mock
/// agents key their skills on.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSection {
    pub tags: Vec<String>,
    #[serde(default = "default_train_queries")]
    pub train_queries: usize,
}

fn default_train_queries() -> usize {
    200
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SkillEntry {
    pub entropy: f64,
    #[serde(default)]
    pub jitter: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolEntry {
    pub agent_id: usize,
    /// Model name sent to the chat backend; informational for mocks.
    pub model_ref: String,
    pub profile: String,
    #[serde(default)]
    pub tools: Vec<String>,
    /// Mock skills per task tag; `default` covers untagged queries.
    #[serde(default)]
    pub skills: BTreeMap<String, SkillEntry>,
    #[serde(default = "default_template")]
    pub response_template: String,
    #[serde(default = "default_vocab")]
    pub vocab_size: usize,
    #[serde(default = "default_tokens")]
    pub tokens_per_response: usize,
}

fn default_template() -> String {
    "agent {agent_id} on {tag}, step {step}: {tokens}".into()
}
fn default_vocab() -> usize {
    16
}
fn default_tokens() -> usize {
    16
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut cfg: RunConfig = toml::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    cfg.validate()?;
    Ok(cfg)
}

impl RunConfig {
    pub fn router_config(&self) -> RouterConfig {
        let r = &self.router;
        RouterConfig {
            pool_size: r.pool_size,
            max_route: r.max_route,
            temperature: r.temperature,
            embed_dim: r.embed_dim,
            max_steps: r.max_steps,
            train_steps: r.train_steps,
            seed: r.seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.router_config().validate()?;
        if self.pool.len() != self.router.pool_size {
            return Err(Error::Config(format!(
                "pool_size is {} but {} [[pool]] entries are defined",
                self.router.pool_size,
                self.pool.len()
            )));
        }
        for (i, entry) in self.pool.iter().enumerate() {
            if entry.agent_id != i {
                return Err(Error::Config(format!(
                    "[[pool]] entry {i} has agent_id {}; ids must be 0..pool_size in order",
                    entry.agent_id
                )));
            }
            if self.backend.kind == BackendKind::Mock && !entry.skills.contains_key(DEFAULT_TAG) {
                return Err(Error::Config(format!(
                    "agent {i}: mock skills need a `{DEFAULT_TAG}` entry"
                )));
            }
        }
        if self.embedder.kind == EmbedderKind::Remote && self.embedder.endpoint.is_none() {
            return Err(Error::Config("remote embedder needs an endpoint".into()));
        }
        if self.backend.kind == BackendKind::Chat && self.backend.endpoint.is_none() {
            return Err(Error::Config("chat backend needs an endpoint".into()));
        }
        if self.summarizer.kind == BackendKind::Chat && self.summarizer_endpoint().is_none() {
            return Err(Error::Config("chat summarizer needs an endpoint".into()));
        }
        self.training.hyper().validate()
    }

    fn summarizer_endpoint(&self) -> Option<&str> {
        self.summarizer.endpoint.as_deref().or(self.backend.endpoint.as_deref())
    }

    /// Resolves a configured path against the config directory.
    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn embedder(&self) -> Embedder {
        let dim = self.router.embed_dim;
        let char_cap = self.embedder.char_cap;
        match self.embedder.kind {
            EmbedderKind::Hash => Embedder::Hash { dim, char_cap },
            EmbedderKind::Remote => Embedder::Remote {
                client: RemoteEmbedder::new(
                    self.embedder.endpoint.clone().unwrap_or_default(),
                    dim,
                    std::env::var(agentroute_core::agents::chat::API_KEY_ENV).ok(),
                ),
                char_cap,
            },
        }
    }

    fn agents(&self) -> Result<Vec<Box<dyn Agent>>> {
        self.pool
            .iter()
            .map(|entry| {
                let spec = AgentSpec {
                    agent_id: entry.agent_id,
                    model_ref: entry.model_ref.clone(),
                    profile_text: entry.profile.clone(),
                    tool_names: entry.tools.clone(),
                };
                let agent: Box<dyn Agent> = match self.backend.kind {
                    BackendKind::Mock => {
                        let skill_map = entry
                            .skills
                            .iter()
                            .map(|(tag, s)| {
                                (
                                    tag.clone(),
                                    Skill {
                                        entropy: s.entropy,
                                        jitter: s.jitter,
                                    },
                                )
                            })
                            .collect();
                        let profile = MockProfile {
                            agent_id: entry.agent_id,
                            skill_map,
                            response_template: entry.response_template.clone(),
                            vocab_size: entry.vocab_size,
                            tokens_per_response: entry.tokens_per_response,
                        };
                        Box::new(MockAgent::new(spec, profile)?)
                    }
                    BackendKind::Chat => {
                        let client =
                            ChatClient::from_env(self.backend.endpoint.clone().unwrap_or_default(), &entry.model_ref)
                                .with_top_logprobs(self.backend.top_logprobs)
                                .with_max_tokens(self.backend.max_tokens);
                        Box::new(ChatAgent { spec, client })
                    }
                };
                Ok(agent)
            })
            .collect()
    }

    fn summarizer(&self) -> Box<dyn Summarizer> {
        match self.summarizer.kind {
            BackendKind::Mock => Box::new(MockSummarizer {
                final_at_step: self.summarizer.final_at_step,
            }),
            BackendKind::Chat => {
                let model = self
                    .summarizer
                    .model
                    .clone()
                    .or_else(|| self.pool.first().map(|p| p.model_ref.clone()))
                    .unwrap_or_default();
                let client = ChatClient::from_env(self.summarizer_endpoint().unwrap_or_default(), model)
                    .with_max_tokens(self.backend.max_tokens);
                Box::new(ChatSummarizer { client })
            }
        }
    }

    pub fn runtime(&self) -> Result<Runtime> {
        Runtime::new(self.agents()?, self.embedder(), self.summarizer(), self.router_config())
    }
}
