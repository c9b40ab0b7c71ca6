//! Subcommand implementations. Each writes its human-readable report to
//! `out` and its artifacts to the paths named in the config.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use agentroute_core::gradcheck::{gradcheck, GradCheckReport, GradCheckSetup};
use agentroute_core::orchestrator::{
    infer_all, simulate, synthetic_queries, test_time_train, train, verify_topology, Topology, TrainReport,
};
use agentroute_core::router::fmt_f64;
use agentroute_core::trajectory::write_jsonl;
use agentroute_core::{Error, Result, RouterParams, Trajectory};

use crate::config::RunConfig;

/// Gradient checks above this relative error fail.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| Error::io(path, e)
}

/// Non-empty, trimmed lines of a query file.
pub fn read_queries(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let queries: Vec<String> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_owned)
        .collect();
    if queries.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "{} contains no queries",
            path.display()
        )));
    }
    Ok(queries)
}

fn fresh_params(cfg: &RunConfig) -> RouterParams {
    RouterParams::init(cfg.router.embed_dim, cfg.router.pool_size, cfg.router.seed)
}

fn initial_params(cfg: &RunConfig, out: &mut dyn Write) -> Result<RouterParams> {
    let (d, n) = (cfg.router.embed_dim, cfg.router.pool_size);
    let params = match &cfg.paths.params_in {
        Some(p) => RouterParams::load(&cfg.resolve(p))?,
        None => {
            let _ = writeln!(out, "params: fresh init (seed {})", cfg.router.seed);
            fresh_params(cfg)
        }
    };
    if params.dim() != d || params.pool_size() != n {
        return Err(Error::Config(format!(
            "parameters are for d={}, N={} but the config has d={d}, N={n}",
            params.dim(),
            params.pool_size()
        )));
    }
    Ok(params)
}

/// Resolves an output path and creates its parent directory.
fn output_path(cfg: &RunConfig, p: &Path) -> Result<PathBuf> {
    let path = cfg.resolve(p);
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    Ok(path)
}

fn save_params(cfg: &RunConfig, params: &RouterParams, out: &mut dyn Write) -> Result<Option<PathBuf>> {
    let Some(p) = &cfg.paths.params_out else {
        return Ok(None);
    };
    let path = output_path(cfg, p)?;
    params.save(&path)?;
    let _ = writeln!(out, "params written to {}", path.display());
    Ok(Some(path))
}

fn save_traces(cfg: &RunConfig, trajectories: &[Trajectory], out: &mut dyn Write) -> Result<()> {
    let Some(p) = &cfg.paths.trace_out else {
        return Ok(());
    };
    let path = output_path(cfg, p)?;
    let file = File::create(&path).map_err(io_err(&path))?;
    let mut w = BufWriter::new(file);
    write_jsonl(&mut w, trajectories).map_err(io_err(&path))?;
    w.flush().map_err(io_err(&path))?;
    let _ = writeln!(out, "{} trajectories written to {}", trajectories.len(), path.display());
    Ok(())
}

fn training_queries(cfg: &RunConfig) -> Result<Vec<String>> {
    if let Some(p) = &cfg.training.queries {
        return read_queries(&cfg.resolve(p));
    }
    let synthetic = cfg
        .synthetic
        .as_ref()
        .ok_or_else(|| Error::Config("set training.queries or a [synthetic] section".into()))?;
    let tags: Vec<&str> = synthetic.tags.iter().map(String::as_str).collect();
    let queries = synthetic_queries(&tags, synthetic.train_queries, cfg.router.seed, "train");
    if queries.is_empty() {
        return Err(Error::Config("[synthetic] generated no queries".into()));
    }
    Ok(queries)
}

pub fn cmd_train(cfg: &RunConfig, out: &mut dyn Write) -> Result<TrainReport> {
    let rt = cfg.runtime()?;
    let mut params = fresh_params(cfg);
    let queries = training_queries(cfg)?;
    let hyper = cfg.training.hyper();
    let _ = writeln!(
        out,
        "training on {} queries: {} epochs, batch {}, loss {}",
        queries.len(),
        hyper.epochs,
        hyper.batch_size,
        hyper.loss
    );
    let mut report = train(&rt, &mut params, &queries, &hyper)?;
    for (e, loss) in report.epoch_mean_loss.iter().enumerate() {
        let _ = writeln!(out, "epoch {}: mean loss {}", e + 1, fmt_f64(*loss));
    }
    let _ = writeln!(
        out,
        "optimizer steps: {}; last-epoch routed-within-lowest: {:.3}",
        report.optimizer_steps, report.agreement
    );
    if let Some(p) = &cfg.paths.metrics_out {
        let path = output_path(cfg, p)?;
        std::fs::write(&path, report.to_csv()).map_err(io_err(&path))?;
        let _ = writeln!(out, "loss curve written to {}", path.display());
    }
    report.params_path = save_params(cfg, &params, out)?.map(|p| p.display().to_string());
    Ok(report)
}

/// Calls and tokens of a batch of runs, against what dense execution of
/// the same steps would have cost.
pub fn accounting_line(trajectories: &[Trajectory], pool_size: usize) -> String {
    let calls: usize = trajectories.iter().map(|t| t.total_agent_calls).sum();
    let tokens: usize = trajectories.iter().map(|t| t.total_tokens).sum();
    let dense: usize = trajectories.iter().map(|t| pool_size * t.steps.len()).sum();
    let ratio = if dense == 0 { 0.0 } else { calls as f64 / dense as f64 };
    format!("agent calls {calls} (dense equivalent {dense}, ratio {ratio:.3}); tokens {tokens}")
}

fn report_runs(trajectories: &[Trajectory], offset: usize, out: &mut dyn Write) {
    for (i, t) in trajectories.iter().enumerate() {
        let term = t
            .terminated_by
            .map_or("none".to_owned(), |x| format!("{x:?}").to_lowercase());
        let ks: Vec<String> = t.steps.iter().map(|s| s.k.to_string()).collect();
        let _ = writeln!(
            out,
            "[{}] steps {} k=[{}] calls {} tokens {} ({term})",
            i + offset,
            t.steps.len(),
            ks.join(","),
            t.total_agent_calls,
            t.total_tokens
        );
        let _ = writeln!(out, "answer: {}", t.final_answer.as_deref().unwrap_or(""));
    }
}

pub fn cmd_infer(cfg: &RunConfig, queries: &[String], out: &mut dyn Write) -> Result<Vec<Trajectory>> {
    let rt = cfg.runtime()?;
    let params = initial_params(cfg, out)?;
    let trajectories = infer_all(&rt, &params, queries)?;
    report_runs(&trajectories, 0, out);
    let _ = writeln!(out, "total: {}", accounting_line(&trajectories, cfg.router.pool_size));
    save_traces(cfg, &trajectories, out)?;
    Ok(trajectories)
}

pub fn cmd_ttt(cfg: &RunConfig, stream: &[String], t_dense: usize, out: &mut dyn Write) -> Result<Vec<Trajectory>> {
    let rt = cfg.runtime()?;
    let params = initial_params(cfg, out)?;
    let outcome = test_time_train(&rt, &params, stream, t_dense, &cfg.training.hyper())?;
    for w in &outcome.warnings {
        eprintln!("warning: {w}");
    }
    for b in &outcome.dense_losses {
        let _ = writeln!(out, "dense batch {}: loss {}", b.batch, fmt_f64(b.loss));
    }
    let (dense, sparse) = outcome.trajectories.split_at(t_dense);
    let _ = writeln!(out, "dense phase: {}", accounting_line(dense, cfg.router.pool_size));
    report_runs(sparse, t_dense, out);
    let _ = writeln!(out, "sparse phase: {}", accounting_line(sparse, cfg.router.pool_size));
    save_params(cfg, &outcome.params, out)?;
    save_traces(cfg, &outcome.trajectories, out)?;
    Ok(outcome.trajectories)
}

pub fn cmd_gradcheck(seed: u64, corrupt: bool, out: &mut dyn Write) -> Result<GradCheckReport> {
    let setup = GradCheckSetup::default();
    let r = gradcheck(seed, &setup, corrupt)?;
    let _ = writeln!(
        out,
        "gradcheck seed {seed}: N={} K={} d={} L={} loss {}; {} entries, routed per step {:?}",
        setup.pool_size, setup.max_route, setup.dim, setup.steps, setup.loss, r.checked, r.routed
    );
    let _ = writeln!(
        out,
        "max relative error {:.3e} (at {}[{}]), max absolute error {:.3e}",
        r.max_rel_error, r.worst_tensor, r.worst_index, r.max_abs_error
    );
    let verdict = if r.max_rel_error <= GRADCHECK_TOLERANCE {
        "PASS"
    } else {
        "FAIL"
    };
    let _ = writeln!(out, "{verdict} (tolerance {GRADCHECK_TOLERANCE:e})");
    Ok(r)
}

pub fn cmd_simulate(
    cfg: &RunConfig,
    topology: Topology,
    steps: usize,
    query: &str,
    out: &mut dyn Write,
) -> Result<Trajectory> {
    let rt = cfg.runtime()?;
    let t = simulate(&rt, query, topology, steps)?;
    verify_topology(&t, topology, rt.config.pool_size, |s| rt.embedder.embed(s))?;
    for s in &t.steps {
        let _ = writeln!(out, "step {}: agents {:?}", s.step_index, s.selected_ids);
    }
    let _ = writeln!(
        out,
        "{topology}: structure verified; {}",
        accounting_line(std::slice::from_ref(&t), cfg.router.pool_size)
    );
    save_traces(cfg, std::slice::from_ref(&t), out)?;
    Ok(t)
}
