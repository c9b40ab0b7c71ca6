//! Multi-step routing with cached activations and backpropagation through
//! time.
//!
//! Gradients reach the parameters along three paths: each step's head and
//! GRU cell, the hidden-state recurrence `h_i → h_{i−1}`, and the
//! aggregation weights `α_{i−1} = softmax(kept z_{i−1})` through the next
//! context `X_i`. Response embeddings are constants.

use serde::{Deserialize, Serialize};

use super::gru::{gru_backward, gru_forward, GruCache, RouterState};
use super::linalg::{dot, softmax, softmax_backward};
use super::params::RouterParams;
use super::select::{adaptive_k, aggregate_context, head, keep_top_k};
use crate::config::RouterConfig;
use crate::embed::EmbeddingVector;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutingDecision {
    pub logits_z: Vec<f64>,
    pub k: usize,
    pub selected_ids: Vec<usize>,
    /// `softmax` over the kept logits; entries of agents whose responses
    /// were missing are zero and the rest renormalized.
    pub alpha: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct StepCache {
    pub gru: GruCache,
    pub logits: Vec<f64>,
    pub selected: Vec<usize>,
    /// Survivors among `selected`, in selection order.
    pub aggregated: Vec<usize>,
    /// Weights over `aggregated`.
    pub alpha: Vec<f64>,
    pub responses: Vec<EmbeddingVector>,
}

#[derive(Debug, Clone, Default)]
pub struct ForwardCache {
    pub steps: Vec<StepCache>,
}

impl ForwardCache {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// Interactive forward pass: `route`, execute the selected agents
/// elsewhere, then `observe` their response embeddings.
#[derive(Debug)]
pub struct RouterSession<'p> {
    params: &'p RouterParams,
    temperature: f64,
    max_route: usize,
    state: RouterState,
    context: EmbeddingVector,
    cache: ForwardCache,
    pending: Option<(GruCache, Vec<f64>, Vec<usize>)>,
}

impl<'p> RouterSession<'p> {
    pub fn new(params: &'p RouterParams, config: &RouterConfig, query: EmbeddingVector) -> Result<Self> {
        params.check_shapes(config.embed_dim, config.pool_size)?;
        if query.dim() != config.embed_dim {
            return Err(Error::DimensionMismatch {
                expected: config.embed_dim,
                received: query.dim(),
            });
        }
        Ok(Self {
            params,
            temperature: config.temperature,
            max_route: config.max_route,
            state: RouterState::zeros(config.embed_dim),
            context: query,
            cache: ForwardCache::default(),
            pending: None,
        })
    }

    /// Context `X_i` that the next `route` call consumes.
    pub fn context(&self) -> &EmbeddingVector {
        &self.context
    }

    pub fn steps_done(&self) -> usize {
        self.cache.steps.len()
    }

    pub fn route(&mut self) -> Result<RoutingDecision> {
        let step = self.steps_done() + 1;
        if self.pending.is_some() {
            return Err(Error::InvalidArgument(format!(
                "step {step}: route called before the previous step was observed"
            )));
        }
        let inner = || -> Result<_> {
            let gru = gru_forward(self.context.as_slice(), &self.state.hidden, self.params)?;
            let z = head(&gru.h_next, self.params)?;
            let k = adaptive_k(&z, self.temperature, self.max_route)?;
            let selected = keep_top_k(&z, k)?;
            Ok((gru, z, k, selected))
        };
        let (gru, z, k, selected) = inner().map_err(|e| e.at_step(step))?;
        let kept: Vec<f64> = selected.iter().map(|&j| z[j]).collect();
        let decision = RoutingDecision {
            logits_z: z.clone(),
            k,
            selected_ids: selected.clone(),
            alpha: softmax(&kept),
        };
        self.pending = Some((gru, z, selected));
        Ok(decision)
    }

    /// Aggregates the responses of the routed agents (aligned with
    /// `selected_ids`; `None` marks a failed agent) into the next context.
    /// Returns the realized `α` over all selected agents.
    pub fn observe(&mut self, responses: Vec<Option<EmbeddingVector>>) -> Result<Vec<f64>> {
        let step = self.steps_done() + 1;
        let (gru, logits, selected) = self
            .pending
            .take()
            .ok_or_else(|| Error::InvalidArgument(format!("step {step}: observe without route")))?;
        if responses.len() != selected.len() {
            return Err(Error::Shape {
                what: "observed responses",
                expected: selected.len(),
                got: responses.len(),
            }
            .at_step(step));
        }
        let mut aggregated = Vec::new();
        let mut kept = Vec::new();
        let mut embeddings = Vec::new();
        for (&id, r) in selected.iter().zip(responses) {
            if let Some(e) = r {
                aggregated.push(id);
                kept.push(logits[id]);
                embeddings.push(e);
            }
        }
        if aggregated.is_empty() {
            return Err(Error::InvalidArgument("every routed agent failed".into()).at_step(step));
        }
        let refs: Vec<&EmbeddingVector> = embeddings.iter().collect();
        let (alpha, next) = aggregate_context(&kept, &refs).map_err(|e| e.at_step(step))?;
        if next.dim() != self.context.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.context.dim(),
                received: next.dim(),
            }
            .at_step(step));
        }
        let full_alpha = selected
            .iter()
            .map(|id| aggregated.iter().position(|a| a == id).map_or(0.0, |p| alpha[p]))
            .collect();
        self.state = RouterState {
            hidden: gru.h_next.clone(),
        };
        self.context = next;
        self.cache.steps.push(StepCache {
            gru,
            logits,
            selected,
            aggregated,
            alpha,
            responses: embeddings,
        });
        Ok(full_alpha)
    }

    pub fn into_cache(self) -> ForwardCache {
        self.cache
    }
}

/// Replays the routing pipeline over recorded responses.
///
/// `step_responses[i][j]` is the embedding of agent `j`'s response at step
/// `i + 1`; only the routed agents' entries are aggregated. One step runs per
/// entry of `step_responses`.
pub fn forward_trajectory(
    query: &EmbeddingVector,
    step_responses: &[Vec<EmbeddingVector>],
    params: &RouterParams,
    config: &RouterConfig,
) -> Result<(Vec<RoutingDecision>, ForwardCache)> {
    let mut session = RouterSession::new(params, config, query.clone())?;
    let mut decisions = Vec::with_capacity(step_responses.len());
    for (i, all) in step_responses.iter().enumerate() {
        if all.len() != config.pool_size {
            return Err(Error::Shape {
                what: "per-step responses",
                expected: config.pool_size,
                got: all.len(),
            }
            .at_step(i + 1));
        }
        let mut decision = session.route()?;
        let picked = decision.selected_ids.iter().map(|&j| Some(all[j].clone())).collect();
        decision.alpha = session.observe(picked)?;
        decisions.push(decision);
    }
    Ok((decisions, session.into_cache()))
}

/// Parameter gradient of a loss whose per-step logit gradients are
/// `grad_logits[i] = dL/dz_{i+1}`.
pub fn backward_trajectory(
    params: &RouterParams,
    cache: &ForwardCache,
    grad_logits: &[Vec<f64>],
) -> Result<RouterParams> {
    if cache.steps.is_empty() {
        return Err(Error::InvalidArgument("missing forward cache".into()));
    }
    if grad_logits.len() != cache.steps.len() {
        return Err(Error::Shape {
            what: "per-step logit gradients",
            expected: cache.steps.len(),
            got: grad_logits.len(),
        });
    }
    let d = params.dim();
    let mut grads = params.zeros_like();
    let mut grad_h_rec = vec![0.0; d];
    let mut grad_next_context: Option<Vec<f64>> = None;

    for (i, step) in cache.steps.iter().enumerate().rev() {
        let mut gz = grad_logits[i].clone();
        if gz.len() != params.pool_size() {
            return Err(Error::Shape {
                what: "logit gradient",
                expected: params.pool_size(),
                got: gz.len(),
            }
            .at_step(i + 1));
        }
        if let Some(gx) = &grad_next_context {
            let grad_alpha: Vec<f64> = step.responses.iter().map(|r| dot(gx, r.as_slice())).collect();
            let grad_kept = softmax_backward(&step.alpha, &grad_alpha);
            for (&id, g) in step.aggregated.iter().zip(grad_kept) {
                gz[id] += g;
            }
        }
        grads.w_o.add_outer(&gz, &step.gru.h_next);
        grads.b_o.iter_mut().zip(&gz).for_each(|(a, b)| *a += b);
        let mut grad_h = grad_h_rec;
        params.w_o.matvec_t_acc(&gz, &mut grad_h);

        let (grad_x, grad_h_prev) = gru_backward(&step.gru, &grad_h, params, &mut grads);
        grad_next_context = Some(grad_x);
        grad_h_rec = grad_h_prev;
    }

    if let Some(name) = grads.first_non_finite() {
        return Err(Error::NonFinite(format!("gradient of {name}")));
    }
    Ok(grads)
}
