//! Routing-quality measures computed against observed entropies.

use crate::error::Result;
use crate::router::{keep_top_k, RouterParams};

use super::engine::{run_query, Mode, RunOptions, Runtime};

/// True when every selected agent is among the `k` lowest-entropy agents.
/// Ties at the k-th smallest entropy count as inside.
pub fn selection_within_lowest(selected: &[usize], entropies: &[f64]) -> bool {
    if selected.is_empty() || selected.len() > entropies.len() {
        return false;
    }
    let mut sorted = entropies.to_vec();
    sorted.sort_by(f64::total_cmp);
    let kth = sorted[selected.len() - 1];
    selected.iter().all(|&id| entropies[id] <= kth)
}

/// True when the highest-logit agent has the minimum entropy (ties allowed).
pub fn argmin_agreement(logits: &[f64], entropies: &[f64]) -> bool {
    match keep_top_k(logits, 1) {
        Ok(top) => {
            let min = entropies.iter().cloned().fold(f64::INFINITY, f64::min);
            entropies[top[0]] <= min
        }
        Err(_) => false,
    }
}

/// True when the `m` highest logits are exactly the `m` lowest entropies.
pub fn lowest_m_recovered(logits: &[f64], entropies: &[f64], m: usize) -> bool {
    match keep_top_k(logits, m) {
        Ok(top) => selection_within_lowest(&top, entropies),
        Err(_) => false,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoutingEval {
    pub steps: usize,
    /// Fraction of steps whose top-1 agent has minimum entropy.
    pub argmin_agreement: f64,
    /// Fraction of steps whose top-m agents are the m lowest-entropy ones.
    pub lowest_m_recovery: f64,
}

/// Probes the router on `queries` with dense execution (so every agent's
/// entropy is observed) and `steps` routed steps per query. Parameters are
/// not modified.
pub fn evaluate_routing(
    rt: &Runtime,
    params: &RouterParams,
    queries: &[String],
    steps: usize,
    m: usize,
    label: &str,
) -> Result<RoutingEval> {
    let (mut total, mut argmin, mut recovered) = (0usize, 0usize, 0usize);
    for (i, q) in queries.iter().enumerate() {
        let opts = RunOptions {
            mode: Mode::Dense,
            max_steps: steps,
            summarize: false,
            label: format!("{label}/q{i}"),
        };
        let run = run_query(rt, params, q, &opts).map_err(|e| e.at_query(i))?;
        for (step, e) in run.trajectory.steps.iter().zip(&run.entropies) {
            total += 1;
            argmin += argmin_agreement(&step.logits_z, e.as_slice()) as usize;
            recovered += lowest_m_recovered(&step.logits_z, e.as_slice(), m) as usize;
        }
    }
    let frac = |c: usize| if total == 0 { 0.0 } else { c as f64 / total as f64 };
    Ok(RoutingEval {
        steps: total,
        argmin_agreement: frac(argmin),
        lowest_m_recovery: frac(recovered),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn within_lowest() {
        let e = [2.0, 0.2, 2.0, 0.1, 1.0];
        assert!(selection_within_lowest(&[3, 1], &e));
        assert!(selection_within_lowest(&[1, 3], &e));
        assert!(!selection_within_lowest(&[3, 4], &e));
        assert!(selection_within_lowest(&[3, 1, 4], &e));
        // Ties at the boundary count.
        assert!(selection_within_lowest(&[0], &[1.0, 1.0]));
        assert!(selection_within_lowest(&[1], &[1.0, 1.0]));
        assert!(!selection_within_lowest(&[], &e));
    }

    #[test]
    fn argmin_and_top_m() {
        let e = [2.0, 0.2, 2.0, 0.1];
        assert!(argmin_agreement(&[0.0, 0.5, 0.1, 0.9], &e));
        assert!(!argmin_agreement(&[0.0, 0.9, 0.1, 0.5], &e));
        assert!(lowest_m_recovered(&[0.0, 0.9, 0.1, 0.5], &e, 2));
        assert!(!lowest_m_recovered(&[0.6, 0.9, 0.1, 0.5], &e, 2));
    }
}
