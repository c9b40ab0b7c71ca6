use super::linalg::{sigmoid, Matrix};
use super::params::RouterParams;
use crate::error::{Error, Result};

/// Hidden state carried between reasoning steps. Starts at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct RouterState {
    pub hidden: Vec<f64>,
}

impl RouterState {
    pub fn zeros(dim: usize) -> Self {
        Self { hidden: vec![0.0; dim] }
    }
}

/// Activations of one GRU step, kept for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct GruCache {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub reset: Vec<f64>,
    pub update: Vec<f64>,
    pub candidate: Vec<f64>,
    /// `U_n h + b_hn`, the recurrent candidate term before the reset gate.
    pub recurrent_candidate: Vec<f64>,
    pub h_next: Vec<f64>,
}

/// One GRU step. The cell output equals the new hidden state.
pub fn gru_step(x: &[f64], state: &RouterState, params: &RouterParams) -> Result<(RouterState, Vec<f64>)> {
    let cache = gru_forward(x, &state.hidden, params)?;
    let h = cache.h_next;
    Ok((RouterState { hidden: h.clone() }, h))
}

pub(crate) fn gru_forward(x: &[f64], h: &[f64], p: &RouterParams) -> Result<GruCache> {
    let d = p.dim();
    if x.len() != d {
        return Err(Error::Shape {
            what: "GRU input",
            expected: d,
            got: x.len(),
        });
    }
    if h.len() != d {
        return Err(Error::Shape {
            what: "GRU hidden state",
            expected: d,
            got: h.len(),
        });
    }

    let gate = |w: &Matrix, u: &Matrix, b: &[f64]| {
        let mut a = b.to_vec();
        w.matvec_acc(x, &mut a);
        u.matvec_acc(h, &mut a);
        a.iter_mut().for_each(|v| *v = sigmoid(*v));
        a
    };
    let reset = gate(&p.w_r, &p.u_r, &p.b_r);
    check_finite("reset gate", &reset)?;
    let update = gate(&p.w_u, &p.u_u, &p.b_u);
    check_finite("update gate", &update)?;

    let mut recurrent_candidate = p.b_hn.clone();
    p.u_n.matvec_acc(h, &mut recurrent_candidate);
    let mut candidate = p.b_in.clone();
    p.w_n.matvec_acc(x, &mut candidate);
    for ((c, r), m) in candidate.iter_mut().zip(&reset).zip(&recurrent_candidate) {
        *c = (*c + r * m).tanh();
    }
    check_finite("candidate", &candidate)?;

    let h_next: Vec<f64> = (0..d)
        .map(|j| (1.0 - update[j]) * candidate[j] + update[j] * h[j])
        .collect();
    check_finite("hidden state", &h_next)?;

    Ok(GruCache {
        x: x.to_vec(),
        h_prev: h.to_vec(),
        reset,
        update,
        candidate,
        recurrent_candidate,
        h_next,
    })
}

/// Backpropagates `dL/dh'` through one step. Parameter gradients are
/// accumulated into `grads`; returns `(dL/dx, dL/dh_prev)`.
pub(crate) fn gru_backward(
    cache: &GruCache,
    grad_h_next: &[f64],
    p: &RouterParams,
    grads: &mut RouterParams,
) -> (Vec<f64>, Vec<f64>) {
    let d = grad_h_next.len();
    let GruCache {
        x,
        h_prev,
        reset: r,
        update: u,
        candidate: n,
        recurrent_candidate: m,
        ..
    } = cache;

    let mut grad_x = vec![0.0; d];
    let mut grad_h: Vec<f64> = (0..d).map(|j| grad_h_next[j] * u[j]).collect();

    let mut ga_n = vec![0.0; d];
    let mut ga_u = vec![0.0; d];
    let mut ga_r = vec![0.0; d];
    let mut g_m = vec![0.0; d];
    for j in 0..d {
        let gn = grad_h_next[j] * (1.0 - u[j]);
        let gu = grad_h_next[j] * (h_prev[j] - n[j]);
        ga_n[j] = gn * (1.0 - n[j] * n[j]);
        let gr = ga_n[j] * m[j];
        g_m[j] = ga_n[j] * r[j];
        ga_u[j] = gu * u[j] * (1.0 - u[j]);
        ga_r[j] = gr * r[j] * (1.0 - r[j]);
    }

    grads.w_n.add_outer(&ga_n, x);
    add_into(&mut grads.b_in, &ga_n);
    p.w_n.matvec_t_acc(&ga_n, &mut grad_x);

    grads.u_n.add_outer(&g_m, h_prev);
    add_into(&mut grads.b_hn, &g_m);
    p.u_n.matvec_t_acc(&g_m, &mut grad_h);

    grads.w_u.add_outer(&ga_u, x);
    grads.u_u.add_outer(&ga_u, h_prev);
    add_into(&mut grads.b_u, &ga_u);
    p.w_u.matvec_t_acc(&ga_u, &mut grad_x);
    p.u_u.matvec_t_acc(&ga_u, &mut grad_h);

    grads.w_r.add_outer(&ga_r, x);
    grads.u_r.add_outer(&ga_r, h_prev);
    add_into(&mut grads.b_r, &ga_r);
    p.w_r.matvec_t_acc(&ga_r, &mut grad_x);
    p.u_r.matvec_t_acc(&ga_r, &mut grad_h);

    (grad_x, grad_h)
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(a, b)| *a += b);
}

fn check_finite(name: &str, v: &[f64]) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(format!("GRU {name}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Deterministic parameter fill shared with the scripted oracle:
    /// entry `k` (flattened in tensor order) is `0.5 * sin(0.37 k + 0.1)`.
    fn scripted_params(d: usize, n: usize) -> RouterParams {
        let mut p = RouterParams::zeros(d, n);
        let flat: Vec<f64> = (0..p.num_values())
            .map(|k| 0.5 * (0.37 * k as f64 + 0.1).sin())
            .collect();
        p.set_flat(&flat);
        p
    }

    #[test]
    fn zero_params_zero_state_is_fixed_point() {
        let p = RouterParams::zeros(5, 3);
        let (h, o) = gru_step(&[0.3, -1.0, 2.0, 0.0, 7.0], &RouterState::zeros(5), &p).unwrap();
        assert_eq!(h.hidden, vec![0.0; 5]);
        assert_eq!(o, h.hidden);
    }

    #[test]
    fn zero_params_halve_the_state() {
        let p = RouterParams::zeros(3, 2);
        let v = vec![0.8, -0.4, 2.0];
        let (h, _) = gru_step(&[1.0, 1.0, 1.0], &RouterState { hidden: v.clone() }, &p).unwrap();
        let want: Vec<f64> = v.iter().map(|x| 0.5 * x).collect();
        assert_eq!(h.hidden, want);
    }

    #[test]
    fn matches_scripted_formula_evaluation() {
        // Frozen from a Python evaluation of the four GRU formulas with the
        // same scripted parameters, x = (0.1, -0.2, 0.3, -0.4), h = (0.5, 0.25, -0.75, 0.05).
        let p = scripted_params(4, 2);
        let x = [0.1, -0.2, 0.3, -0.4];
        let h = RouterState {
            hidden: vec![0.5, 0.25, -0.75, 0.05],
        };
        let (next, _) = gru_step(&x, &h, &p).unwrap();
        for (a, b) in next.hidden.iter().zip(SCRIPTED_H_NEXT) {
            assert!((a - b).abs() < 1e-14, "{a} vs {b}");
        }
    }

    const SCRIPTED_H_NEXT: [f64; 4] = [
        0.42237506085408744,
        0.317008765513878,
        -0.19701313409245982,
        0.2273575210028429,
    ];

    #[test]
    fn shape_mismatch_is_reported() {
        let p = RouterParams::zeros(3, 2);
        assert!(gru_step(&[1.0], &RouterState::zeros(3), &p).is_err());
        assert!(gru_step(&[1.0; 3], &RouterState::zeros(2), &p).is_err());
    }

    #[test]
    fn non_finite_names_the_gate() {
        let mut p = RouterParams::zeros(2, 1);
        p.b_in[0] = f64::NAN;
        let err = gru_step(&[0.0, 0.0], &RouterState::zeros(2), &p).unwrap_err();
        assert!(err.to_string().contains("candidate"), "{err}");
    }
}
