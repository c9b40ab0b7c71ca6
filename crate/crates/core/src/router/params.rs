//! Trainable router tensors and their snapshot file format.
//!
//! Snapshot layout (UTF-8 text, one token per whitespace):
//!
//! ```text
//! agentroute-router-params
//! version 1
//! dim <d>
//! pool <N>
//! seed <seed>
//! tensor <name> <rows> <cols>
//! <rows*cols values, 17 significant digits, 8 per line>
//! ...
//! end
//! ```
//!
//! Seventeen significant digits round-trip every finite `f64` exactly, so
//! write → read is bitwise.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;

use super::linalg::Matrix;
use crate::error::{Error, Result};
use crate::seed::rng_for;

const MAGIC: &str = "agentroute-router-params";
const FORMAT_VERSION: u32 = 1;

/// GRU cell weights plus the linear head.
///
/// Gate convention: `r = σ(W_r x + U_r h + b_r)`, `u = σ(W_u x + U_u h + b_u)`,
/// `n = tanh(W_n x + b_in + r ⊙ (U_n h + b_hn))`, `h' = (1 − u) ⊙ n + u ⊙ h`,
/// logits `z = W_o h' + b_o`.
///
/// The same type doubles as the gradient container.
#[derive(Debug, Clone, PartialEq)]
pub struct RouterParams {
    pub w_r: Matrix,
    pub w_u: Matrix,
    pub w_n: Matrix,
    pub u_r: Matrix,
    pub u_u: Matrix,
    pub u_n: Matrix,
    pub b_r: Vec<f64>,
    pub b_u: Vec<f64>,
    pub b_in: Vec<f64>,
    pub b_hn: Vec<f64>,
    pub w_o: Matrix,
    pub b_o: Vec<f64>,
    /// Seed the parameters were initialized from (recorded in snapshots).
    pub seed: u64,
}

pub const TENSOR_NAMES: [&str; 12] = [
    "w_r", "w_u", "w_n", "u_r", "u_u", "u_n", "b_r", "b_u", "b_in", "b_hn", "w_o", "b_o",
];

impl RouterParams {
    pub fn zeros(dim: usize, pool: usize) -> Self {
        let sq = || Matrix::zeros(dim, dim);
        Self {
            w_r: sq(),
            w_u: sq(),
            w_n: sq(),
            u_r: sq(),
            u_u: sq(),
            u_n: sq(),
            b_r: vec![0.0; dim],
            b_u: vec![0.0; dim],
            b_in: vec![0.0; dim],
            b_hn: vec![0.0; dim],
            w_o: Matrix::zeros(pool, dim),
            b_o: vec![0.0; pool],
            seed: 0,
        }
    }

    /// Every entry (biases included) uniform in `(−1/√d, 1/√d)`, drawn from
    /// the `router/init` child stream of `seed`.
    pub fn init(dim: usize, pool: usize, seed: u64) -> Self {
        let mut params = Self::zeros(dim, pool);
        params.seed = seed;
        let bound = 1.0 / (dim as f64).sqrt();
        let mut rng = rng_for(seed, "router/init");
        for (_, t) in params.tensors_mut() {
            for v in t.iter_mut() {
                *v = rng.random_range(-bound..bound);
            }
        }
        params
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = Self::zeros(self.dim(), self.pool_size());
        z.seed = self.seed;
        z
    }

    pub fn dim(&self) -> usize {
        self.b_r.len()
    }

    pub fn pool_size(&self) -> usize {
        self.b_o.len()
    }

    pub fn tensors(&self) -> [(&'static str, &[f64]); 12] {
        [
            ("w_r", self.w_r.as_slice()),
            ("w_u", self.w_u.as_slice()),
            ("w_n", self.w_n.as_slice()),
            ("u_r", self.u_r.as_slice()),
            ("u_u", self.u_u.as_slice()),
            ("u_n", self.u_n.as_slice()),
            ("b_r", &self.b_r),
            ("b_u", &self.b_u),
            ("b_in", &self.b_in),
            ("b_hn", &self.b_hn),
            ("w_o", self.w_o.as_slice()),
            ("b_o", &self.b_o),
        ]
    }

    pub fn tensors_mut(&mut self) -> [(&'static str, &mut [f64]); 12] {
        [
            ("w_r", self.w_r.as_mut_slice()),
            ("w_u", self.w_u.as_mut_slice()),
            ("w_n", self.w_n.as_mut_slice()),
            ("u_r", self.u_r.as_mut_slice()),
            ("u_u", self.u_u.as_mut_slice()),
            ("u_n", self.u_n.as_mut_slice()),
            ("b_r", &mut self.b_r),
            ("b_u", &mut self.b_u),
            ("b_in", &mut self.b_in),
            ("b_hn", &mut self.b_hn),
            ("w_o", self.w_o.as_mut_slice()),
            ("b_o", &mut self.b_o),
        ]
    }

    fn shape_of(&self, name: &str) -> (usize, usize) {
        let (d, n) = (self.dim(), self.pool_size());
        match name {
            "w_o" => (n, d),
            "b_o" => (n, 1),
            n if n.starts_with('b') => (d, 1),
            _ => (d, d),
        }
    }

    pub fn num_values(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    /// Flattened copy in `TENSOR_NAMES` order.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_values());
        for (_, t) in self.tensors() {
            out.extend_from_slice(t);
        }
        out
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.num_values());
        let mut offset = 0;
        for (_, t) in self.tensors_mut() {
            t.copy_from_slice(&flat[offset..offset + t.len()]);
            offset += t.len();
        }
    }

    /// `self += scale · other`
    pub fn add_scaled(&mut self, other: &RouterParams, scale: f64) {
        for ((_, dst), (_, src)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (a, b) in dst.iter_mut().zip(src) {
                *a += scale * b;
            }
        }
    }

    /// Name of the first tensor holding a non-finite entry.
    pub fn first_non_finite(&self) -> Option<&'static str> {
        self.tensors()
            .into_iter()
            .find(|(_, t)| t.iter().any(|v| !v.is_finite()))
            .map(|(name, _)| name)
    }

    pub fn check_shapes(&self, dim: usize, pool: usize) -> Result<()> {
        if self.dim() != dim {
            return Err(Error::Shape {
                what: "router hidden dimension",
                expected: dim,
                got: self.dim(),
            });
        }
        if self.pool_size() != pool {
            return Err(Error::Shape {
                what: "router head rows",
                expected: pool,
                got: self.pool_size(),
            });
        }
        Ok(())
    }

    pub fn to_snapshot_string(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{MAGIC}");
        let _ = writeln!(s, "version {FORMAT_VERSION}");
        let _ = writeln!(s, "dim {}", self.dim());
        let _ = writeln!(s, "pool {}", self.pool_size());
        let _ = writeln!(s, "seed {}", self.seed);
        for (name, t) in self.tensors() {
            let (r, c) = self.shape_of(name);
            let _ = writeln!(s, "tensor {name} {r} {c}");
            for chunk in t.chunks(8) {
                let line: Vec<String> = chunk.iter().map(|v| fmt_f64(*v)).collect();
                let _ = writeln!(s, "{}", line.join(" "));
            }
        }
        s.push_str("end\n");
        s
    }

    pub fn from_snapshot_str(text: &str) -> Result<Self> {
        let mut tokens = text.split_whitespace();
        let mut next = |what: &str| {
            tokens
                .next()
                .ok_or_else(|| Error::Parse(format!("params snapshot truncated before {what}")))
        };
        if next("magic")? != MAGIC {
            return Err(Error::Parse("not a router params snapshot".into()));
        }
        let mut header = |key: &str| -> Result<u64> {
            let k = next(key)?;
            if k != key {
                return Err(Error::Parse(format!("expected `{key}`, found `{k}`")));
            }
            next(key)?
                .parse::<u64>()
                .map_err(|e| Error::Parse(format!("bad `{key}` value: {e}")))
        };
        let version = header("version")?;
        if version != u64::from(FORMAT_VERSION) {
            return Err(Error::Parse(format!("unsupported params format version {version}")));
        }
        let dim = header("dim")? as usize;
        let pool = header("pool")? as usize;
        let seed = header("seed")?;
        let mut params = Self::zeros(dim, pool);
        params.seed = seed;
        let shapes: Vec<(usize, usize)> = TENSOR_NAMES.iter().map(|n| params.shape_of(n)).collect();
        for ((name, dst), (rows, cols)) in params.tensors_mut().into_iter().zip(shapes) {
            let tag = next("tensor")?;
            let got_name = next("tensor name")?;
            let r: usize = next("rows")?.parse().map_err(|_| Error::Parse("bad rows".into()))?;
            let c: usize = next("cols")?.parse().map_err(|_| Error::Parse("bad cols".into()))?;
            if tag != "tensor" || got_name != name || (r, c) != (rows, cols) {
                return Err(Error::Parse(format!(
                    "expected tensor {name} {rows}x{cols}, found {tag} {got_name} {r}x{c}"
                )));
            }
            for v in dst.iter_mut() {
                let tok = next(name)?;
                *v = tok
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("tensor {name}: `{tok}`: {e}")))?;
            }
        }
        if next("end")? != "end" {
            return Err(Error::Parse("params snapshot has trailing data".into()));
        }
        if let Some(name) = params.first_non_finite() {
            return Err(Error::NonFinite(format!("snapshot tensor {name}")));
        }
        Ok(params)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_snapshot_string()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_snapshot_str(&text)
    }
}

/// Scientific notation with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}
