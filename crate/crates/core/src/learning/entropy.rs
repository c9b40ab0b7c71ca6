use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::router::linalg::softmax;

/// Per-agent predictive entropy at one step (nats).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EntropyVector(Vec<f64>);

impl EntropyVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidArgument(format!(
                "entropy entry {i} = {} is not a finite non-negative value",
                values[i]
            )));
        }
        Ok(Self(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Probability vector `softmax(−E)`: lower entropy, higher confidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConfidenceVector(Vec<f64>);

impl ConfidenceVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Shannon entropy in nats with `0 ln 0 = 0`.
pub fn shannon_entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&v| v > 0.0).map(|v| v * v.ln()).sum::<f64>()
}

/// Mean per-token entropy over `M ≥ 1` token distributions.
pub fn predictive_entropy<P: AsRef<[f64]>>(token_distributions: &[P]) -> Result<f64> {
    if token_distributions.is_empty() {
        return Err(Error::InvalidArgument("no token distributions".into()));
    }
    let mut total = 0.0;
    for (j, dist) in token_distributions.iter().enumerate() {
        let p = dist.as_ref();
        let sum: f64 = p.iter().sum();
        if p.is_empty() || p.iter().any(|v| !v.is_finite() || *v < 0.0) || (sum - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidArgument(format!(
                "token {j} is not a probability distribution (sum {sum})"
            )));
        }
        total += shannon_entropy(p);
    }
    Ok(total / token_distributions.len() as f64)
}

pub fn confidence(entropy: &EntropyVector) -> ConfidenceVector {
    let neg: Vec<f64> = entropy.as_slice().iter().map(|e| -e).collect();
    ConfidenceVector(softmax(&neg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn point_masses_have_zero_entropy() {
        let toks = vec![vec![0.0, 1.0, 0.0]; 5];
        assert_eq!(predictive_entropy(&toks).unwrap(), 0.0);
    }

    #[test]
    fn uniform_over_four_is_ln4() {
        let toks = vec![vec![0.25; 4]; 3];
        let pe = predictive_entropy(&toks).unwrap();
        assert!((pe - 4f64.ln()).abs() < 1e-15);
        assert!((pe - 1.386294).abs() < 1e-6);
    }

    #[test]
    fn mixed_distributions_match_double_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let toks: Vec<Vec<f64>> = (0..7)
            .map(|t| {
                let mut w: Vec<f64> = (0..5).map(|_| rng.random_range(0.0..1.0)).collect();
                if t % 3 == 0 {
                    w[t % 5] = 0.0;
                }
                let s: f64 = w.iter().sum();
                w.into_iter().map(|v| v / s).collect()
            })
            .collect();
        let mut oracle = 0.0;
        for dist in &toks {
            for &p in dist {
                if p > 0.0 {
                    oracle -= p * p.ln();
                }
            }
        }
        oracle /= 7.0;
        assert!((predictive_entropy(&toks).unwrap() - oracle).abs() < 1e-12);
    }

    #[test]
    fn rejects_empty_and_invalid() {
        let empty: Vec<Vec<f64>> = vec![];
        assert!(predictive_entropy(&empty).is_err());
        assert!(predictive_entropy(&[vec![0.5, 0.4]]).is_err());
        assert!(predictive_entropy(&[vec![1.5, -0.5]]).is_err());
    }

    #[test]
    fn confidence_closed_forms() {
        let c = confidence(&EntropyVector::new(vec![1.0, 1.0, 1.0]).unwrap());
        for v in c.as_slice() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let c = confidence(&EntropyVector::new(vec![0.0, 1.0]).unwrap());
        let e = (-1f64).exp();
        assert!((c.as_slice()[0] - 1.0 / (1.0 + e)).abs() < 1e-15);
        assert!((c.as_slice()[1] - e / (1.0 + e)).abs() < 1e-15);
        assert!((c.as_slice()[0] - 0.73106).abs() < 1e-5);
    }

    #[test]
    fn confidence_is_shift_invariant_and_order_reversing() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..1000 {
            let e: Vec<f64> = (0..6).map(|_| rng.random_range(0.0..3.0)).collect();
            let c = confidence(&EntropyVector::new(e.clone()).unwrap());
            let shift = rng.random_range(0.0..5.0);
            let cs = confidence(&EntropyVector::new(e.iter().map(|v| v + shift).collect()).unwrap());
            for (a, b) in c.as_slice().iter().zip(cs.as_slice()) {
                assert!((a - b).abs() < 1e-12);
            }
            assert!((c.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-9);
            for a in 0..6 {
                for b in 0..6 {
                    assert_eq!(e[a] < e[b], c.as_slice()[a] > c.as_slice()[b]);
                }
            }
        }
    }

    #[test]
    fn entropy_vector_rejects_negative() {
        assert!(EntropyVector::new(vec![0.1, -0.1]).is_err());
        assert!(EntropyVector::new(vec![f64::INFINITY]).is_err());
    }
}
