//! The differentiable routing core.
//!
//! A GRU cell folds the current context into a hidden state, a linear head
//! turns the state into per-agent logits, a temperature-softmax counting
//! rule picks how many agents to route, and the top logits pick which.
//! The routed agents' response embeddings, weighted by a softmax over their
//! logits, form the next step's context.

mod bptt;
mod gru;
pub mod linalg;
mod params;
mod select;

pub use bptt::{backward_trajectory, forward_trajectory, ForwardCache, RouterSession, RoutingDecision, StepCache};
pub use gru::{gru_step, GruCache, RouterState};
pub use params::{fmt_f64, RouterParams, TENSOR_NAMES};
pub use select::{adaptive_k, aggregate_context, count_probs, head, keep_top_k};
