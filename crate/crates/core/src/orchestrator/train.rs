//! Dense training and test-time adaptation.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learning::{adamw_step, clip_gradients, AdamWConfig, LossKind, OptimizerState};
use crate::router::{fmt_f64, RouterParams};
use crate::trajectory::Trajectory;

use super::engine::{dense_gradient, infer, run_query, Mode, RunOptions, Runtime};
use super::metrics::selection_within_lowest;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainHyper {
    pub adamw: AdamWConfig,
    pub batch_size: usize,
    pub epochs: usize,
    pub loss: LossKind,
}

impl Default for TrainHyper {
    fn default() -> Self {
        Self {
            adamw: AdamWConfig::default(),
            batch_size: 8,
            epochs: 3,
            loss: LossKind::Ranking,
        }
    }
}

impl TrainHyper {
    pub fn validate(&self) -> Result<()> {
        let a = &self.adamw;
        if self.batch_size < 1 || self.epochs < 1 {
            return Err(Error::Config("batch size and epochs must be positive".into()));
        }
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(a.lr)
            || !positive(a.clip_norm)
            || !positive(a.epsilon)
            || !(positive(a.weight_decay) || a.weight_decay == 0.0)
        {
            return Err(Error::Config(
                "lr, clip norm and epsilon must be positive; weight decay non-negative".into(),
            ));
        }
        if !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) {
            return Err(Error::Config("AdamW betas must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchRecord {
    pub epoch: usize,
    pub batch: usize,
    pub loss: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epoch_mean_loss: Vec<f64>,
    pub batches: Vec<BatchRecord>,
    /// `step_loss[e][i]`: mean loss at step `i + 1` over epoch `e + 1`.
    pub step_loss: Vec<Vec<f64>>,
    /// Fraction of last-epoch steps whose selected set lies within the `k`
    /// lowest-entropy agents.
    pub agreement: f64,
    pub optimizer_steps: u64,
    /// Where the final parameters were written, if anywhere.
    pub params_path: Option<String>,
}

impl TrainReport {
    /// `epoch,batch,loss` rows followed by a `# summary` line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,batch,loss\n");
        for b in &self.batches {
            let _ = writeln!(out, "{},{},{}", b.epoch, b.batch, fmt_f64(b.loss));
        }
        let last = self.epoch_mean_loss.last().copied().unwrap_or(f64::NAN);
        let _ = writeln!(
            out,
            "# summary epochs={} optimizer_steps={} final_epoch_loss={} agreement={}",
            self.epoch_mean_loss.len(),
            self.optimizer_steps,
            fmt_f64(last),
            fmt_f64(self.agreement)
        );
        out
    }
}

/// Accumulates dense runs into one batch update.
struct BatchAccumulator {
    grads: RouterParams,
    loss: f64,
    count: usize,
}

impl BatchAccumulator {
    fn new(params: &RouterParams) -> Self {
        Self {
            grads: params.zeros_like(),
            loss: 0.0,
            count: 0,
        }
    }

    fn add(&mut self, loss: f64, grads: &RouterParams) {
        self.grads.add_scaled(grads, 1.0);
        self.loss += loss;
        self.count += 1;
    }

    /// Mean gradient → clip → one AdamW step. Returns (mean loss, pre-clip norm).
    fn apply(self, params: &mut RouterParams, state: &mut OptimizerState) -> Result<(f64, f64)> {
        let inv = 1.0 / self.count as f64;
        let mut grads = self.grads.zeros_like();
        grads.add_scaled(&self.grads, inv);
        let norm = clip_gradients(&mut grads, state.hyper.clip_norm);
        adamw_step(params, &grads, state)?;
        Ok((self.loss * inv, norm))
    }
}

/// Dense training over `queries` for `hyper.epochs` passes, one optimizer
/// step per batch of `hyper.batch_size` queries.
pub fn train(rt: &Runtime, params: &mut RouterParams, queries: &[String], hyper: &TrainHyper) -> Result<TrainReport> {
    hyper.validate()?;
    if queries.is_empty() {
        return Err(Error::InvalidArgument("no training queries".into()));
    }
    let mut state = OptimizerState::new(params, hyper.adamw);
    let steps = rt.config.train_steps;
    let mut report = TrainReport {
        epoch_mean_loss: Vec::new(),
        batches: Vec::new(),
        step_loss: Vec::new(),
        agreement: 0.0,
        optimizer_steps: 0,
        params_path: None,
    };

    for epoch in 0..hyper.epochs {
        let mut step_sums = vec![0.0; steps];
        let mut epoch_loss = 0.0;
        let (mut agree, mut seen) = (0usize, 0usize);
        for (b, chunk) in queries.chunks(hyper.batch_size).enumerate() {
            let mut acc = BatchAccumulator::new(params);
            for (j, query) in chunk.iter().enumerate() {
                let index = b * hyper.batch_size + j;
                let opts = RunOptions {
                    mode: Mode::Dense,
                    max_steps: steps,
                    summarize: false,
                    label: format!("train/e{epoch}/q{index}"),
                };
                let run = run_query(rt, params, query, &opts).map_err(|e| e.at_query(index))?;
                let (loss, per_step, grads) =
                    dense_gradient(params, &run, hyper.loss).map_err(|e| e.at_query(index))?;
                for (s, l) in step_sums.iter_mut().zip(&per_step) {
                    *s += l;
                }
                for (step, e) in run.trajectory.steps.iter().zip(&run.entropies) {
                    seen += 1;
                    agree += selection_within_lowest(&step.selected_ids, e.as_slice()) as usize;
                }
                acc.add(loss, &grads);
            }
            let (loss, grad_norm) = acc.apply(params, &mut state)?;
            epoch_loss += loss * chunk.len() as f64;
            report.batches.push(BatchRecord {
                epoch: epoch + 1,
                batch: b + 1,
                loss,
                grad_norm,
            });
        }
        report.epoch_mean_loss.push(epoch_loss / queries.len() as f64);
        report
            .step_loss
            .push(step_sums.iter().map(|s| s / queries.len() as f64).collect());
        report.agreement = if seen == 0 { 0.0 } else { agree as f64 / seen as f64 };
    }
    report.optimizer_steps = state.step_count;
    Ok(report)
}

pub const TTT_MAX_DENSE: usize = 30;
pub const TTT_RECOMMENDED_MIN_DENSE: usize = 10;

#[derive(Debug)]
pub struct TttOutcome {
    pub params: RouterParams,
    /// One trajectory per stream query, dense phase first.
    pub trajectories: Vec<Trajectory>,
    pub dense_losses: Vec<BatchRecord>,
    pub warnings: Vec<String>,
}

/// Test-time training: the first `t_dense` queries run densely (answered by
/// the summarizer, at most `train_steps` steps) and update the router batch
/// by batch; the rest are answered by sparse inference with the adapted
/// parameters.
pub fn test_time_train(
    rt: &Runtime,
    params: &RouterParams,
    stream: &[String],
    t_dense: usize,
    hyper: &TrainHyper,
) -> Result<TttOutcome> {
    hyper.validate()?;
    if t_dense == 0 || t_dense > TTT_MAX_DENSE {
        return Err(Error::Config(format!(
            "dense query count must be in 1..={TTT_MAX_DENSE}, got {t_dense}"
        )));
    }
    if stream.len() < t_dense {
        return Err(Error::InvalidArgument(format!(
            "stream has {} queries but {t_dense} are needed for the dense phase",
            stream.len()
        )));
    }
    let mut warnings = Vec::new();
    if t_dense < TTT_RECOMMENDED_MIN_DENSE {
        warnings.push(format!(
            "only {t_dense} dense queries; {TTT_RECOMMENDED_MIN_DENSE}-{TTT_MAX_DENSE} is the intended range"
        ));
    }
    let mut adapted = params.clone();
    let mut state = OptimizerState::new(&adapted, hyper.adamw);
    let mut trajectories = Vec::with_capacity(stream.len());
    let mut dense_losses = Vec::new();

    for (b, chunk) in stream[..t_dense].chunks(hyper.batch_size).enumerate() {
        let mut acc = BatchAccumulator::new(&adapted);
        for (j, query) in chunk.iter().enumerate() {
            let index = b * hyper.batch_size + j;
            let opts = RunOptions {
                mode: Mode::Dense,
                max_steps: rt.config.train_steps,
                summarize: true,
                label: format!("ttt/q{index}"),
            };
            let run = run_query(rt, &adapted, query, &opts).map_err(|e| e.at_query(index))?;
            let (loss, _, grads) = dense_gradient(&adapted, &run, hyper.loss).map_err(|e| e.at_query(index))?;
            acc.add(loss, &grads);
            trajectories.push(run.trajectory);
        }
        let (loss, grad_norm) = acc.apply(&mut adapted, &mut state)?;
        dense_losses.push(BatchRecord {
            epoch: 1,
            batch: b + 1,
            loss,
            grad_norm,
        });
    }
    for (index, query) in stream.iter().enumerate().skip(t_dense) {
        let t = infer(rt, &adapted, query, &format!("ttt/q{index}")).map_err(|e| e.at_query(index))?;
        trajectories.push(t);
    }
    Ok(TttOutcome {
        params: adapted,
        trajectories,
        dense_losses,
        warnings,
    })
}
