//! Ranking objectives between routing probabilities `Z = softmax(z)` and
//! confidence targets `C`.
//!
//! - `Ranking` (default): `Σ_{C_a > C_b} ln(1 + exp(−(Z_a − Z_b)))`.
//! - `Mse`: `(1/N) Σ (Z_a − C_a)²`.
//! - `ListMle`: Plackett-Luce negative log-likelihood of the order given by
//!   descending `C` (ties by ascending index), with `Z` as scores:
//!   `Σ_j [−Z_{π_j} + ln Σ_{l ≥ j} exp(Z_{π_l})]`.
//! - `Triplet`: `Σ_{C_a > C_b} max(0, margin − (Z_a − Z_b))`, default margin 0.1.
//!
//! Pairs use a strict, exact comparison on `C`: ties contribute nothing.
//! The last three exist for ablations.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::entropy::{confidence, EntropyVector};
use crate::error::{Error, Result};
use crate::router::linalg::{softmax, softmax_backward};

pub const DEFAULT_TRIPLET_MARGIN: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    #[default]
    Ranking,
    Mse,
    ListMle,
    Triplet,
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossKind::Ranking => "ranking",
            LossKind::Mse => "mse",
            LossKind::ListMle => "listmle",
            LossKind::Triplet => "triplet",
        })
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ranking" => Ok(LossKind::Ranking),
            "mse" => Ok(LossKind::Mse),
            "listmle" => Ok(LossKind::ListMle),
            "triplet" => Ok(LossKind::Triplet),
            other => Err(Error::InvalidArgument(format!("unknown loss kind `{other}`"))),
        }
    }
}

fn check_lengths(z: &[f64], c: &[f64]) -> Result<()> {
    if z.len() != c.len() {
        return Err(Error::Shape {
            what: "loss inputs",
            expected: c.len(),
            got: z.len(),
        });
    }
    Ok(())
}

/// `ln(1 + eˣ)` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn logistic(x: f64) -> f64 {
    crate::router::linalg::sigmoid(x)
}

pub fn ranking_loss(z: &[f64], c: &[f64]) -> Result<f64> {
    Ok(ranking_loss_grad(z, c)?.0)
}

/// Loss and `dL/dZ`.
pub fn ranking_loss_grad(z: &[f64], c: &[f64]) -> Result<(f64, Vec<f64>)> {
    check_lengths(z, c)?;
    let mut loss = 0.0;
    let mut grad = vec![0.0; z.len()];
    for a in 0..z.len() {
        for b in 0..z.len() {
            if c[a] > c[b] {
                let margin = z[a] - z[b];
                loss += softplus(-margin);
                let s = logistic(-margin);
                grad[a] -= s;
                grad[b] += s;
            }
        }
    }
    Ok((loss, grad))
}

pub fn mse_loss(z: &[f64], c: &[f64]) -> Result<f64> {
    Ok(mse_loss_grad(z, c)?.0)
}

pub fn mse_loss_grad(z: &[f64], c: &[f64]) -> Result<(f64, Vec<f64>)> {
    check_lengths(z, c)?;
    let n = z.len() as f64;
    let loss = z.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n;
    let grad = z.iter().zip(c).map(|(a, b)| 2.0 * (a - b) / n).collect();
    Ok((loss, grad))
}

/// Descending `C`, ties by ascending index.
fn target_order(c: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..c.len()).collect();
    order.sort_by(|&a, &b| c[b].total_cmp(&c[a]).then(a.cmp(&b)));
    order
}

pub fn listmle_loss(z: &[f64], c: &[f64]) -> Result<f64> {
    Ok(listmle_loss_grad(z, c)?.0)
}

pub fn listmle_loss_grad(z: &[f64], c: &[f64]) -> Result<(f64, Vec<f64>)> {
    check_lengths(z, c)?;
    let order = target_order(c);
    let mut loss = 0.0;
    let mut grad = vec![0.0; z.len()];
    for j in 0..order.len() {
        let suffix: Vec<f64> = order[j..].iter().map(|&i| z[i]).collect();
        let m = suffix.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + suffix.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        loss += lse - z[order[j]];
        grad[order[j]] -= 1.0;
        for (&i, p) in order[j..].iter().zip(softmax(&suffix)) {
            grad[i] += p;
        }
    }
    Ok((loss, grad))
}

pub fn triplet_loss(z: &[f64], c: &[f64], margin: f64) -> Result<f64> {
    Ok(triplet_loss_grad(z, c, margin)?.0)
}

pub fn triplet_loss_grad(z: &[f64], c: &[f64], margin: f64) -> Result<(f64, Vec<f64>)> {
    check_lengths(z, c)?;
    let mut loss = 0.0;
    let mut grad = vec![0.0; z.len()];
    for a in 0..z.len() {
        for b in 0..z.len() {
            if c[a] > c[b] {
                let slack = margin - (z[a] - z[b]);
                if slack > 0.0 {
                    loss += slack;
                    grad[a] -= 1.0;
                    grad[b] += 1.0;
                }
            }
        }
    }
    Ok((loss, grad))
}

impl LossKind {
    pub fn loss_grad(self, z: &[f64], c: &[f64]) -> Result<(f64, Vec<f64>)> {
        match self {
            LossKind::Ranking => ranking_loss_grad(z, c),
            LossKind::Mse => mse_loss_grad(z, c),
            LossKind::ListMle => listmle_loss_grad(z, c),
            LossKind::Triplet => triplet_loss_grad(z, c, DEFAULT_TRIPLET_MARGIN),
        }
    }
}

/// Arithmetic mean of per-step losses.
pub fn total_loss(per_step: &[f64]) -> Result<f64> {
    if per_step.is_empty() {
        return Err(Error::InvalidArgument("no step losses".into()));
    }
    Ok(per_step.iter().sum::<f64>() / per_step.len() as f64)
}

/// One step's objective from raw logits and entropies: `Z = softmax(z)`,
/// `C = softmax(−E)`. Returns the loss and `dL/dz` (softmax Jacobian
/// included).
pub fn step_objective(logits: &[f64], entropy: &EntropyVector, kind: LossKind) -> Result<(f64, Vec<f64>)> {
    let probs = softmax(logits);
    let conf = confidence(entropy);
    let (loss, grad_probs) = kind.loss_grad(&probs, conf.as_slice())?;
    Ok((loss, softmax_backward(&probs, &grad_probs)))
}

/// Mean objective over a trajectory and the per-step logit gradients of that mean.
pub fn trajectory_objective(
    logits: &[Vec<f64>],
    entropies: &[EntropyVector],
    kind: LossKind,
) -> Result<(f64, Vec<f64>, Vec<Vec<f64>>)> {
    if logits.len() != entropies.len() {
        return Err(Error::Shape {
            what: "per-step entropies",
            expected: logits.len(),
            got: entropies.len(),
        });
    }
    let scale = 1.0 / logits.len().max(1) as f64;
    let mut losses = Vec::with_capacity(logits.len());
    let mut grads = Vec::with_capacity(logits.len());
    for (i, (z, e)) in logits.iter().zip(entropies).enumerate() {
        let (l, mut g) = step_objective(z, e, kind).map_err(|err| err.at_step(i + 1))?;
        g.iter_mut().for_each(|v| *v *= scale);
        losses.push(l);
        grads.push(g);
    }
    Ok((total_loss(&losses)?, losses, grads))
}
