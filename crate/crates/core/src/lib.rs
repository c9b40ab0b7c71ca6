//! Step-wise routed mixture-of-agents.
//!
//! A recurrent router picks a sparse, variable-size subset of an agent pool
//! at every reasoning step and is trained from the agents' own predictive
//! entropy. See the `orchestrator` module for the training, inference and
//! test-time adaptation loops.

pub mod agents;
pub mod config;
pub mod embed;
pub mod error;
pub mod gradcheck;
pub mod learning;
pub mod orchestrator;
pub mod router;
pub mod seed;
pub mod trajectory;

pub use config::{validate_config, RouterConfig};
pub use embed::{hash_embed, Embedder, EmbeddingVector};
pub use error::{Error, Result};
pub use router::RouterParams;
pub use trajectory::{new_trajectory, AgentResponse, AgentSpec, Prompt, StepRecord, Termination, Trajectory};
