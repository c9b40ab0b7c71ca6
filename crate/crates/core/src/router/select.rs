//! Linear head, adaptive-k counting, top-k selection and context aggregation.

use std::cmp::Ordering;

use super::linalg::softmax;
use super::params::RouterParams;
use crate::embed::EmbeddingVector;
use crate::error::{Error, Result};

/// Logits over the pool, `z = W_o o + b_o`.
pub fn head(o: &[f64], params: &RouterParams) -> Result<Vec<f64>> {
    if o.len() != params.dim() {
        return Err(Error::Shape {
            what: "head input",
            expected: params.dim(),
            got: o.len(),
        });
    }
    let mut z = params.b_o.clone();
    params.w_o.matvec_acc(o, &mut z);
    Ok(z)
}

/// Number of agents to route: `min(K, #{j : softmax(z/τ)_j ≥ 1/N})`.
///
/// `N` is the length of `z`. The maximum of a softmax over `N` entries is at
/// least `1/N`, so the result is never zero.
pub fn adaptive_k(z: &[f64], temperature: f64, max_route: usize) -> Result<usize> {
    if z.is_empty() {
        return Err(Error::InvalidArgument("empty logit vector".into()));
    }
    if temperature.is_nan() || temperature <= 0.0 {
        return Err(Error::InvalidArgument("temperature must be positive".into()));
    }
    if max_route < 1 {
        return Err(Error::InvalidArgument("max route must be at least 1".into()));
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("logits".into()));
    }
    let scaled: Vec<f64> = z.iter().map(|v| v / temperature).collect();
    let probs = softmax(&scaled);
    let threshold = 1.0 / z.len() as f64;
    let count = probs.iter().filter(|&&p| p >= threshold).count();
    // Rounding in the normalization can push every entry of a near-uniform
    // softmax just below 1/N; the argmax always qualifies.
    Ok(count.max(1).min(max_route))
}

/// Temperature-softmax probabilities used by the counting rule.
pub fn count_probs(z: &[f64], temperature: f64) -> Vec<f64> {
    let scaled: Vec<f64> = z.iter().map(|v| v / temperature).collect();
    softmax(&scaled)
}

/// Indices of the `k` largest logits, ordered by descending logit with ties
/// broken by ascending index.
pub fn keep_top_k(z: &[f64], k: usize) -> Result<Vec<usize>> {
    if k < 1 || k > z.len() {
        return Err(Error::InvalidArgument(format!("k = {k} outside 1..={}", z.len())));
    }
    let order =
        |a: &usize, b: &usize| -> Ordering { z[*b].partial_cmp(&z[*a]).unwrap_or(Ordering::Equal).then(a.cmp(b)) };
    let mut idx: Vec<usize> = (0..z.len()).collect();
    if k < idx.len() {
        idx.select_nth_unstable_by(k - 1, order);
        idx.truncate(k);
    }
    idx.sort_by(order);
    Ok(idx)
}

/// Aggregation weights `α = softmax(kept logits)` (no temperature) and the
/// next context `X = Σ α_j R̂_j`.
pub fn aggregate_context(
    kept_logits: &[f64],
    response_embeddings: &[&EmbeddingVector],
) -> Result<(Vec<f64>, EmbeddingVector)> {
    if kept_logits.is_empty() {
        return Err(Error::InvalidArgument("nothing to aggregate".into()));
    }
    if kept_logits.len() != response_embeddings.len() {
        return Err(Error::Shape {
            what: "aggregation inputs",
            expected: kept_logits.len(),
            got: response_embeddings.len(),
        });
    }
    let dim = response_embeddings[0].dim();
    if let Some(bad) = response_embeddings.iter().find(|e| e.dim() != dim) {
        return Err(Error::Shape {
            what: "response embedding",
            expected: dim,
            got: bad.dim(),
        });
    }
    let alpha = softmax(kept_logits);
    let mut x = vec![0.0; dim];
    for (a, e) in alpha.iter().zip(response_embeddings) {
        for (xi, ei) in x.iter_mut().zip(e.as_slice()) {
            *xi += a * ei;
        }
    }
    Ok((alpha, EmbeddingVector::new(x)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Independent counting rule in the log domain:
    /// `p_j ≥ 1/N  ⇔  z_j/τ − logsumexp(z/τ) ≥ −ln N`.
    fn brute_force_k(z: &[f64], tau: f64, max_route: usize) -> usize {
        let s: Vec<f64> = z.iter().map(|v| v / tau).collect();
        let m = s.iter().cloned().fold(f64::MIN, f64::max);
        let lse = m + s.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        let ln_n = (z.len() as f64).ln();
        let count = s.iter().filter(|&&v| v - lse >= -ln_n).count();
        count.min(max_route)
    }

    fn sort_oracle(z: &[f64], k: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..z.len()).collect();
        idx.sort_by(|&a, &b| z[b].total_cmp(&z[a]).then(a.cmp(&b)));
        idx.truncate(k);
        idx
    }

    #[test]
    fn head_with_zero_weight_is_bias() {
        let mut p = RouterParams::zeros(3, 2);
        p.b_o = vec![0.5, -1.5];
        assert_eq!(head(&[1.0, 2.0, 3.0], &p).unwrap(), vec![0.5, -1.5]);
        p.w_o.as_mut_slice().iter_mut().for_each(|v| *v = 0.7);
        assert_eq!(head(&[0.0; 3], &p).unwrap(), vec![0.5, -1.5]);
    }

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn head_matches_double_loop() {
        let p = RouterParams::init(12, 5, 7);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let o: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
        let z = head(&o, &p).unwrap();
        for r in 0..5 {
            let mut acc = p.b_o[r];
            for c in 0..12 {
                acc += p.w_o.get(r, c) * o[c];
            }
            assert!((z[r] - acc).abs() < 1e-15);
        }
    }

    #[test]
    fn uniform_logits_route_max() {
        for tau in [0.01, 0.1, 1.0, 10.0] {
            assert_eq!(adaptive_k(&[0.0; 5], tau, 3).unwrap(), 3);
        }
    }

    #[test]
    fn dominant_logit_routes_one() {
        let z = [1.0, 0.0, 0.0, 0.0, 0.0];
        let p = count_probs(&z, 0.1);
        assert!((p[0] - 0.99982).abs() < 1e-5);
        assert!((p[1] - 4.54e-5).abs() < 1e-7);
        assert_eq!(adaptive_k(&z, 0.1, 3).unwrap(), 1);
    }

    #[test]
    fn adaptive_k_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let z: Vec<f64> = (0..8).map(|_| rng.random_range(-0.3..0.3)).collect();
            let k = adaptive_k(&z, 0.1, 4).unwrap();
            assert_eq!(k, brute_force_k(&z, 0.1, 4));
            assert!((1..=4).contains(&k));
        }
    }

    #[test]
    fn adaptive_k_rejects_bad_input() {
        assert!(adaptive_k(&[f64::NAN, 0.0], 0.1, 1).is_err());
        assert!(adaptive_k(&[0.0], 0.0, 1).is_err());
        assert!(adaptive_k(&[], 0.1, 1).is_err());
    }

    #[test]
    fn top_k_orders_and_breaks_ties() {
        assert_eq!(keep_top_k(&[5.0, 1.0, 9.0], 2).unwrap(), vec![2, 0]);
        assert_eq!(keep_top_k(&[3.0; 4], 2).unwrap(), vec![0, 1]);
        assert!(keep_top_k(&[1.0, 2.0], 0).is_err());
        assert!(keep_top_k(&[1.0, 2.0], 3).is_err());
    }

    #[test]
    fn top_k_matches_sort_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            // Coarse grid so ties actually occur.
            let z: Vec<f64> = (0..10).map(|_| f64::from(rng.random_range(-3i32..3))).collect();
            for k in 1..=10 {
                assert_eq!(keep_top_k(&z, k).unwrap(), sort_oracle(&z, k));
            }
        }
    }

    #[test]
    fn aggregation_closed_forms() {
        let e1 = EmbeddingVector::new(vec![1.0, 0.0, 0.0]).unwrap();
        let e2 = EmbeddingVector::new(vec![0.0, 1.0, 0.0]).unwrap();
        let (a, x) = aggregate_context(&[0.0, 0.0], &[&e1, &e2]).unwrap();
        assert_eq!(a, vec![0.5, 0.5]);
        assert_eq!(x.as_slice(), &[0.5, 0.5, 0.0]);

        let (a, x) = aggregate_context(&[3.0], &[&e2]).unwrap();
        assert_eq!(a, vec![1.0]);
        assert_eq!(x, e2);

        let (a, x) = aggregate_context(&[3f64.ln(), 0.0], &[&e1, &e2]).unwrap();
        assert!((a[0] - 0.75).abs() < 1e-15 && (a[1] - 0.25).abs() < 1e-15);
        assert!((x.as_slice()[0] - 0.75).abs() < 1e-15);
        assert!((x.as_slice()[1] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn aggregation_shape_errors() {
        let e1 = EmbeddingVector::new(vec![1.0, 0.0]).unwrap();
        let e2 = EmbeddingVector::new(vec![1.0]).unwrap();
        assert!(aggregate_context(&[0.0, 0.0], &[&e1]).is_err());
        assert!(aggregate_context(&[0.0, 0.0], &[&e1, &e2]).is_err());
        assert!(aggregate_context(&[], &[]).is_err());
    }

    fn logits(n: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-2.0f64..2.0, n)
    }

    proptest! {
        #[test]
        fn k_is_always_in_range(z in logits(8), tau in 0.01f64..5.0, cap in 1usize..10) {
            let k = adaptive_k(&z, tau, cap).unwrap();
            prop_assert!(k >= 1 && k <= cap.min(8));
        }

        #[test]
        fn shift_invariance(z in logits(6), c in -50.0f64..50.0, k in 1usize..=6) {
            let shifted: Vec<f64> = z.iter().map(|v| v + c).collect();
            prop_assert_eq!(keep_top_k(&z, k).unwrap(), keep_top_k(&shifted, k).unwrap());
            // Shifting moves the count only when an entry sits within rounding of 1/N.
            let p = count_probs(&z, 0.1);
            let margin = p.iter().map(|v| (v - 1.0 / 6.0).abs()).fold(f64::MAX, f64::min);
            if margin > 1e-9 {
                prop_assert_eq!(adaptive_k(&z, 0.1, 4).unwrap(), adaptive_k(&shifted, 0.1, 4).unwrap());
            }
            let e = EmbeddingVector::new(vec![1.0, 2.0]).unwrap();
            let embs = vec![&e; k];
            let (a1, _) = aggregate_context(&z[..k], &embs).unwrap();
            let (a2, _) = aggregate_context(&shifted[..k], &embs).unwrap();
            for (x, y) in a1.iter().zip(&a2) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn permutation_equivariance(z in logits(7), k in 1usize..=7, rot in 0usize..7) {
            // Distinct logits so the tie rule does not interact with the permutation.
            let z: Vec<f64> = z.iter().enumerate().map(|(i, v)| v + i as f64 * 1e-9).collect();
            let perm: Vec<usize> = (0..7).map(|i| (i + rot) % 7).collect();
            let permuted: Vec<f64> = (0..7).map(|i| z[perm[i]]).collect();
            let sel = keep_top_k(&z, k).unwrap();
            let sel_p: Vec<usize> = keep_top_k(&permuted, k).unwrap().into_iter().map(|i| perm[i]).collect();
            prop_assert_eq!(sel, sel_p);
            prop_assert_eq!(adaptive_k(&z, 0.1, 7).unwrap(), adaptive_k(&permuted, 0.1, 7).unwrap());
        }

        #[test]
        fn alpha_is_probability_vector(kept in prop::collection::vec(-30.0f64..30.0, 1..8)) {
            let e = EmbeddingVector::new(vec![0.5; 3]).unwrap();
            let embs = vec![&e; kept.len()];
            let (a, _) = aggregate_context(&kept, &embs).unwrap();
            prop_assert!(a.iter().all(|v| *v >= 0.0));
            prop_assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}
