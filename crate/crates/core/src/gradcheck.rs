//! Central finite-difference check of the BPTT gradient.

use rand::Rng;

use crate::config::RouterConfig;
use crate::embed::EmbeddingVector;
use crate::error::{Error, Result};
use crate::learning::{trajectory_objective, EntropyVector, LossKind};
use crate::router::{backward_trajectory, forward_trajectory, RouterParams, TENSOR_NAMES};
use crate::seed::{child_seed, rng_for};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckSetup {
    pub pool_size: usize,
    pub max_route: usize,
    pub dim: usize,
    pub steps: usize,
    pub fd_step: f64,
    /// Denominator floor for the relative error, `|a − n| / max(|a|, |n|, floor)`.
    pub rel_floor: f64,
    pub loss: LossKind,
}

impl Default for GradCheckSetup {
    fn default() -> Self {
        Self {
            pool_size: 6,
            max_route: 3,
            dim: 16,
            steps: 3,
            fd_step: 1e-6,
            rel_floor: 1e-3,
            loss: LossKind::Ranking,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub worst_tensor: &'static str,
    pub worst_index: usize,
    pub checked: usize,
    pub loss: f64,
    /// Routed count per step; values above 1 before the last step mean the
    /// aggregation-weight path carries gradient.
    pub routed: Vec<usize>,
}

fn random_unit(rng: &mut impl Rng, dim: usize) -> EmbeddingVector {
    let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    EmbeddingVector::new(v.into_iter().map(|x| x / norm).collect()).expect("finite")
}

/// Builds a seeded random trajectory, then compares every analytic gradient
/// entry with a central difference. `corrupt` perturbs one analytic entry
/// as a negative control.
pub fn gradcheck(seed: u64, setup: &GradCheckSetup, corrupt: bool) -> Result<GradCheckReport> {
    let (n, d) = (setup.pool_size, setup.dim);
    let config = RouterConfig {
        pool_size: n,
        max_route: setup.max_route,
        temperature: 0.1,
        embed_dim: d,
        max_steps: setup.steps,
        train_steps: setup.steps,
        seed,
    }
    .validate()?;
    // Larger-than-default GRU weights push the gates off their linear
    // regime; a damped head keeps logits close enough (relative to τ) that
    // several agents are routed, so the aggregation-weight path is exercised.
    let mut params = RouterParams::init(d, n, child_seed(seed, "gradcheck/params"));
    let flat: Vec<f64> = params.to_flat().iter().map(|v| v * 4.0).collect();
    params.set_flat(&flat);
    params.w_o.as_mut_slice().iter_mut().for_each(|v| *v *= 0.1);
    params.b_o.iter_mut().for_each(|v| *v *= 0.1);

    let mut rng = rng_for(seed, "gradcheck/data");
    let query = random_unit(&mut rng, d);
    let responses: Vec<Vec<EmbeddingVector>> = (0..setup.steps)
        .map(|_| (0..n).map(|_| random_unit(&mut rng, d)).collect())
        .collect();
    let entropies: Vec<EntropyVector> = (0..setup.steps)
        .map(|_| EntropyVector::new((0..n).map(|_| rng.random_range(0.0..2.5)).collect()))
        .collect::<Result<_>>()?;

    let loss_at = |p: &RouterParams| -> Result<(f64, Vec<Vec<usize>>)> {
        let (decisions, cache) = forward_trajectory(&query, &responses, p, &config)?;
        let logits: Vec<Vec<f64>> = cache.steps.iter().map(|s| s.logits.clone()).collect();
        let (loss, _, _) = trajectory_objective(&logits, &entropies, setup.loss)?;
        Ok((loss, decisions.into_iter().map(|d| d.selected_ids).collect()))
    };

    let (decisions, cache) = forward_trajectory(&query, &responses, &params, &config)?;
    let base_selection: Vec<Vec<usize>> = decisions.into_iter().map(|d| d.selected_ids).collect();
    let logits: Vec<Vec<f64>> = cache.steps.iter().map(|s| s.logits.clone()).collect();
    let (loss, _, dz) = trajectory_objective(&logits, &entropies, setup.loss)?;
    let grads = backward_trajectory(&params, &cache, &dz)?;
    let mut analytic = grads.to_flat();
    if corrupt {
        analytic[0] += 1e-3;
    }

    let sizes: Vec<usize> = grads.tensors().iter().map(|(_, t)| t.len()).collect();
    let base = params.to_flat();
    let mut probe = params.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        worst_tensor: TENSOR_NAMES[0],
        worst_index: 0,
        checked: 0,
        loss,
        routed: base_selection.iter().map(Vec::len).collect(),
    };
    let mut flat = base.clone();
    for i in 0..base.len() {
        flat[i] = base[i] + setup.fd_step;
        probe.set_flat(&flat);
        let (plus, sel_plus) = loss_at(&probe)?;
        flat[i] = base[i] - setup.fd_step;
        probe.set_flat(&flat);
        let (minus, sel_minus) = loss_at(&probe)?;
        flat[i] = base[i];
        if sel_plus != base_selection || sel_minus != base_selection {
            return Err(Error::InvalidArgument(format!(
                "perturbing parameter {i} changed the routed set; pick another seed"
            )));
        }
        let numeric = (plus - minus) / (2.0 * setup.fd_step);
        let abs = (analytic[i] - numeric).abs();
        let rel = abs / analytic[i].abs().max(numeric.abs()).max(setup.rel_floor);
        report.max_abs_error = report.max_abs_error.max(abs);
        if rel > report.max_rel_error || report.checked == 0 {
            report.max_rel_error = rel;
            let (mut t, mut offset) = (0, i);
            while offset >= sizes[t] {
                offset -= sizes[t];
                t += 1;
            }
            report.worst_tensor = TENSOR_NAMES[t];
            report.worst_index = offset;
        }
        report.checked += 1;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_case_passes_and_is_deterministic() {
        let setup = GradCheckSetup {
            pool_size: 4,
            max_route: 2,
            dim: 5,
            steps: 2,
            ..GradCheckSetup::default()
        };
        let a = gradcheck(3, &setup, false).unwrap();
        assert!(a.max_rel_error < 1e-5, "{a:?}");
        assert!(a.routed[0] > 1, "aggregation path not exercised: {a:?}");
        assert_eq!(a, gradcheck(3, &setup, false).unwrap());
        assert_eq!(a.checked, RouterParams::zeros(5, 4).num_values());
    }

    #[test]
    fn default_setup_routes_several_agents() {
        let r = gradcheck(1, &GradCheckSetup::default(), false).unwrap();
        assert_eq!(r.routed, vec![2, 2, 2]);
        assert!(r.max_rel_error < 1e-5, "{r:?}");
        assert!(r.max_abs_error < 1e-8, "{r:?}");
    }

    #[test]
    fn corruption_is_detected() {
        let setup = GradCheckSetup {
            pool_size: 4,
            max_route: 2,
            dim: 5,
            steps: 2,
            ..GradCheckSetup::default()
        };
        let r = gradcheck(3, &setup, true).unwrap();
        assert!(r.max_rel_error > 1e-4, "{r:?}");
    }
}
