//! Scripted routing schedules that reproduce fixed communication
//! topologies, and a structural check of the resulting traces.
//!
//! The learned router is bypassed: each step's logits are 1 for the
//! scheduled agents and 0 elsewhere, with the route cap raised to `N`. The
//! ordinary adaptive-k rule and top-k selection then pick exactly the
//! scheduled set, so the trace exercises the same selection and aggregation
//! code as a learned run.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::agents::{assemble_prompt, task_tag, CallContext};
use crate::embed::EmbeddingVector;
use crate::error::{Error, Result};
use crate::router::{adaptive_k, aggregate_context, count_probs, keep_top_k};
use crate::seed::child_seed;
use crate::trajectory::{new_trajectory, AgentResponse, StepRecord, Termination, Trajectory};

use super::engine::Runtime;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Topology {
    Chain,
    Star,
    Complete,
    Moa,
}

impl FromStr for Topology {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "chain" => Ok(Topology::Chain),
            "star" => Ok(Topology::Star),
            "complete" => Ok(Topology::Complete),
            "moa" => Ok(Topology::Moa),
            other => Err(Error::InvalidArgument(format!(
                "unknown topology '{other}' (expected chain, star, complete or moa)"
            ))),
        }
    }
}

impl fmt::Display for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Topology::Chain => "chain",
            Topology::Star => "star",
            Topology::Complete => "complete",
            Topology::Moa => "moa",
        })
    }
}

/// Agents executed at `step` (1-based) over a pool of `n`.
///
/// Chain walks the pool one agent at a time. Star alternates the hub
/// (agent 0) with all spokes. Complete and MoA run everyone every step.
pub fn schedule(topology: Topology, n: usize, step: usize) -> Vec<usize> {
    match topology {
        Topology::Chain => vec![(step - 1) % n],
        Topology::Star if n == 1 || step % 2 == 1 => vec![0],
        Topology::Star => (1..n).collect(),
        Topology::Complete | Topology::Moa => (0..n).collect(),
    }
}

fn scripted_logits(ids: &[usize], n: usize) -> Vec<f64> {
    let mut z = vec![0.0; n];
    for &id in ids {
        z[id] = 1.0;
    }
    z
}

pub fn simulate(rt: &Runtime, query: &str, topology: Topology, steps: usize) -> Result<Trajectory> {
    if steps < 1 {
        return Err(Error::InvalidArgument("at least one step is required".into()));
    }
    let n = rt.config.pool_size;
    let tag = task_tag(query);
    let mut trajectory = new_trajectory(query)?;
    let mut context = rt.embedder.embed(query)?;
    let mut prev: Vec<AgentResponse> = Vec::new();

    for step in 1..=steps {
        let z = scripted_logits(&schedule(topology, n, step), n);
        let k = adaptive_k(&z, rt.config.temperature, n)?;
        let selected = keep_top_k(&z, k)?;
        let prev_refs: Vec<&AgentResponse> = prev.iter().collect();
        let outcomes: Vec<Result<(AgentResponse, EmbeddingVector)>> = selected
            .par_iter()
            .map(|&id| {
                let agent = &rt.pool[id];
                let prompt = assemble_prompt(agent.spec(), query, &prev_refs);
                let ctx = CallContext {
                    step_index: step,
                    query,
                    task_tag: tag,
                    seed: child_seed(rt.config.seed, &format!("simulate/{topology}/agent{id}/step{step}")),
                };
                let r = agent.execute(&prompt, &ctx)?;
                let e = rt.embedder.embed(&r.text)?;
                Ok((r, e))
            })
            .collect();
        let mut responses = Vec::with_capacity(k);
        let mut embeddings = Vec::with_capacity(k);
        for (id, o) in selected.iter().zip(outcomes) {
            let (r, e) = o.map_err(|e| {
                Error::Agent {
                    agent_id: *id,
                    reason: e.to_string(),
                }
                .at_step(step)
            })?;
            responses.push(r);
            embeddings.push(e);
        }
        let kept: Vec<f64> = selected.iter().map(|&j| z[j]).collect();
        let refs: Vec<&EmbeddingVector> = embeddings.iter().collect();
        let (alpha, next) = aggregate_context(&kept, &refs)?;
        let record = StepRecord {
            step_index: step,
            count_probs: count_probs(&z, rt.config.temperature),
            logits_z: z,
            k,
            selected_ids: selected,
            alpha,
            context_X: context,
            entropy_E: None,
        };
        trajectory.push_step(record, k, responses.clone(), n)?;
        context = next;
        prev = responses;
    }
    let refs: Vec<&AgentResponse> = prev.iter().collect();
    let reply = rt.summarizer.reply(query, &refs, steps, true)?;
    trajectory.finish(crate::agents::summarizer::strip_marker(&reply), Termination::StepLimit);
    Ok(trajectory)
}

/// Checks a simulated trace: executed sets follow the schedule, and each
/// step's context is the α-weighted sum of the previous step's executed
/// agents' response embeddings (recomputed from the recorded texts).
pub fn verify_topology(
    trajectory: &Trajectory,
    topology: Topology,
    n: usize,
    embed: impl Fn(&str) -> Result<EmbeddingVector>,
) -> Result<()> {
    let fail = |step: usize, msg: String| Err(Error::InvalidArgument(msg).at_step(step));
    for (i, step) in trajectory.steps.iter().enumerate() {
        let index = i + 1;
        let want: BTreeSet<usize> = schedule(topology, n, index).into_iter().collect();
        let selected: BTreeSet<usize> = step.selected_ids.iter().copied().collect();
        let executed: BTreeSet<usize> = trajectory.step_responses(index).map(|r| r.agent_id).collect();
        if selected != want || executed != want {
            return fail(
                index,
                format!("executed {executed:?}, selected {selected:?}, schedule {want:?}"),
            );
        }
        if i == 0 {
            continue;
        }
        let prev = &trajectory.steps[i - 1];
        let mut expected = vec![0.0; step.context_X.dim()];
        for (&id, &a) in prev.selected_ids.iter().zip(&prev.alpha) {
            let r = trajectory
                .responses
                .get(&(index - 1, id))
                .ok_or_else(|| Error::InvalidArgument(format!("missing response of agent {id}")).at_step(index))?;
            for (x, e) in expected.iter_mut().zip(embed(&r.text)?.as_slice()) {
                *x += a * e;
            }
        }
        let max_diff = expected
            .iter()
            .zip(step.context_X.as_slice())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if max_diff > 1e-12 {
            return fail(
                index,
                format!("context differs from previous step's aggregate by {max_diff:e}"),
            );
        }
    }
    Ok(())
}
