//! One routed run over a single query, shared by training, inference and
//! test-time adaptation.

use rayon::prelude::*;

use crate::agents::{
    assemble_prompt, summarizer::strip_marker, summarizer_decide, task_tag, Agent, CallContext, Decision, Summarizer,
};
use crate::config::RouterConfig;
use crate::embed::{Embedder, EmbeddingVector};
use crate::error::{Error, Result};
use crate::learning::{trajectory_objective, EntropyVector, LossKind};
use crate::router::{backward_trajectory, count_probs, ForwardCache, RouterParams, RouterSession};
use crate::seed::child_seed;
use crate::trajectory::{new_trajectory, validate_pool, AgentResponse, StepRecord, Termination, Trajectory};

/// Everything a run needs besides the router parameters.
pub struct Runtime {
    pub pool: Vec<Box<dyn Agent>>,
    pub embedder: Embedder,
    pub summarizer: Box<dyn Summarizer>,
    pub config: RouterConfig,
}

impl Runtime {
    pub fn new(
        pool: Vec<Box<dyn Agent>>,
        embedder: Embedder,
        summarizer: Box<dyn Summarizer>,
        config: RouterConfig,
    ) -> Result<Self> {
        let config = config.validate()?;
        if pool.len() != config.pool_size {
            return Err(Error::Config(format!(
                "pool has {} agents but pool_size is {}",
                pool.len(),
                config.pool_size
            )));
        }
        let specs: Vec<_> = pool.iter().map(|a| a.spec().clone()).collect();
        validate_pool(&specs)?;
        if embedder.dim() != config.embed_dim {
            return Err(Error::Config(format!(
                "embedder produces dimension {} but embed_dim is {}",
                embedder.dim(),
                config.embed_dim
            )));
        }
        Ok(Self {
            pool,
            embedder,
            summarizer,
            config,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Execute every agent at every step; entropies are recorded.
    Dense,
    /// Execute only the routed agents.
    Sparse,
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub mode: Mode,
    pub max_steps: usize,
    /// Consult the summarizer after each step and force an answer at
    /// `max_steps`.
    pub summarize: bool,
    /// Namespaces the per-call agent seeds.
    pub label: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentFailure {
    pub step_index: usize,
    pub agent_id: usize,
    pub reason: String,
}

#[derive(Debug)]
pub struct QueryRun {
    pub trajectory: Trajectory,
    pub cache: ForwardCache,
    /// One entry per step in dense mode, empty in sparse mode.
    pub entropies: Vec<EntropyVector>,
    pub failures: Vec<AgentFailure>,
}

impl QueryRun {
    pub fn logits(&self) -> Vec<Vec<f64>> {
        self.cache.steps.iter().map(|s| s.logits.clone()).collect()
    }
}

pub fn run_query(rt: &Runtime, params: &RouterParams, query: &str, opts: &RunOptions) -> Result<QueryRun> {
    if opts.max_steps < 1 {
        return Err(Error::InvalidArgument("at least one step is required".into()));
    }
    let mut trajectory = new_trajectory(query)?;
    let tag = task_tag(query);
    let n = rt.config.pool_size;
    let mut session = RouterSession::new(params, &rt.config, rt.embedder.embed(query)?)?;
    let mut entropies = Vec::new();
    let mut failures = Vec::new();
    let mut prev: Vec<AgentResponse> = Vec::new();

    for step in 1..=opts.max_steps {
        let context: EmbeddingVector = session.context().clone();
        let decision = session.route()?;
        let executed: Vec<usize> = match opts.mode {
            Mode::Dense => (0..n).collect(),
            Mode::Sparse => decision.selected_ids.clone(),
        };

        let prev_refs: Vec<&AgentResponse> = prev.iter().collect();
        let outcomes: Vec<Result<(AgentResponse, EmbeddingVector)>> = executed
            .par_iter()
            .map(|&id| {
                let agent = &rt.pool[id];
                let prompt = assemble_prompt(agent.spec(), query, &prev_refs);
                let ctx = CallContext {
                    step_index: step,
                    query,
                    task_tag: tag,
                    seed: child_seed(rt.config.seed, &format!("{}/agent{id}/step{step}", opts.label)),
                };
                let response = agent.execute(&prompt, &ctx)?;
                let embedding = rt.embedder.embed(&response.text)?;
                Ok((response, embedding))
            })
            .collect();

        let mut by_id: Vec<Option<(AgentResponse, EmbeddingVector)>> = vec![None; n];
        for (&id, outcome) in executed.iter().zip(outcomes) {
            match outcome {
                Ok(pair) => by_id[id] = Some(pair),
                Err(e) if opts.mode == Mode::Dense => {
                    return Err(Error::Agent {
                        agent_id: id,
                        reason: e.to_string(),
                    }
                    .at_step(step));
                }
                Err(e) => failures.push(AgentFailure {
                    step_index: step,
                    agent_id: id,
                    reason: e.to_string(),
                }),
            }
        }

        let entropy_e = if opts.mode == Mode::Dense {
            let mut e = Vec::with_capacity(n);
            for (id, slot) in by_id.iter().enumerate() {
                let pe = slot.as_ref().and_then(|(r, _)| r.predictive_entropy).ok_or_else(|| {
                    Error::Agent {
                        agent_id: id,
                        reason: "response carries no predictive entropy".into(),
                    }
                    .at_step(step)
                })?;
                e.push(pe);
            }
            entropies.push(EntropyVector::new(e.clone()).map_err(|e| e.at_step(step))?);
            Some(e)
        } else {
            None
        };

        let routed: Vec<Option<EmbeddingVector>> = decision
            .selected_ids
            .iter()
            .map(|&id| by_id[id].as_ref().map(|(_, emb)| emb.clone()))
            .collect();
        let alpha = session.observe(routed)?;

        prev = decision
            .selected_ids
            .iter()
            .filter_map(|&id| by_id[id].as_ref().map(|(r, _)| r.clone()))
            .collect();
        let record = StepRecord {
            step_index: step,
            count_probs: count_probs(&decision.logits_z, rt.config.temperature),
            logits_z: decision.logits_z,
            k: decision.k,
            selected_ids: decision.selected_ids,
            alpha,
            context_X: context,
            entropy_E: entropy_e,
        };
        let returned: Vec<AgentResponse> = by_id.into_iter().flatten().map(|(r, _)| r).collect();
        trajectory.push_step(record, executed.len(), returned, rt.config.k_cap())?;

        if opts.summarize {
            let refs: Vec<&AgentResponse> = prev.iter().collect();
            let decided = summarizer_decide(rt.summarizer.as_ref(), query, &refs, step).map_err(|e| e.at_step(step))?;
            if let Decision::Final(answer) = decided {
                trajectory.finish(answer, Termination::Summarizer);
                break;
            }
            if step == opts.max_steps {
                let reply = rt
                    .summarizer
                    .reply(query, &refs, step, true)
                    .map_err(|e| e.at_step(step))?;
                trajectory.finish(strip_marker(&reply), Termination::StepLimit);
            }
        }
    }
    if !opts.summarize {
        trajectory.terminated_by = Some(Termination::StepLimit);
    }
    Ok(QueryRun {
        trajectory,
        cache: session.into_cache(),
        entropies,
        failures,
    })
}

/// Step-averaged loss of a dense run and its parameter gradient.
pub fn dense_gradient(params: &RouterParams, run: &QueryRun, kind: LossKind) -> Result<(f64, Vec<f64>, RouterParams)> {
    if run.entropies.len() != run.cache.len() {
        return Err(Error::InvalidArgument("loss needs a dense run".into()));
    }
    let (loss, per_step, dz) = trajectory_objective(&run.logits(), &run.entropies, kind)?;
    let grads = backward_trajectory(params, &run.cache, &dz)?;
    Ok((loss, per_step, grads))
}

/// Sparse inference: up to `L_max` steps with summarizer termination.
pub fn infer(rt: &Runtime, params: &RouterParams, query: &str, label: &str) -> Result<Trajectory> {
    let opts = RunOptions {
        mode: Mode::Sparse,
        max_steps: rt.config.max_steps,
        summarize: true,
        label: label.to_owned(),
    };
    Ok(run_query(rt, params, query, &opts)?.trajectory)
}

/// Runs [`infer`] over each query, labelling seeds by position.
pub fn infer_all(rt: &Runtime, params: &RouterParams, queries: &[String]) -> Result<Vec<Trajectory>> {
    queries
        .iter()
        .enumerate()
        .map(|(i, q)| infer(rt, params, q, &format!("infer/q{i}")).map_err(|e| e.at_query(i)))
        .collect()
}
