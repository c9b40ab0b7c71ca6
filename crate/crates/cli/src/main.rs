use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use agentroute_cli::{
    cmd_gradcheck, cmd_infer, cmd_simulate, cmd_train, cmd_ttt, load_config, read_queries, RunConfig,
    GRADCHECK_TOLERANCE,
};
use agentroute_core::orchestrator::Topology;
use agentroute_core::{Error, Result};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "agentroute", version, about = "Step-wise routed mixture of agents")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides `router.seed`.
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = load_config(&self.config)?;
        if let Some(seed) = self.seed {
            cfg.router.seed = seed;
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Dense training over the configured query set.
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Sparse inference with summarizer termination.
    Infer {
        #[command(flatten)]
        common: Common,
        #[arg(long, conflicts_with = "queries", required_unless_present = "queries")]
        query: Option<String>,
        /// File with one query per line.
        #[arg(long)]
        queries: Option<PathBuf>,
    },
    /// Adapt on the first queries of a stream, then answer the rest sparsely.
    Ttt {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        queries: PathBuf,
        /// Number of dense adaptation queries (1..=30).
        #[arg(long)]
        t_dense: usize,
    },
    /// Finite-difference check of the router gradient.
    Gradcheck {
        /// Seed of the random check problem; `router.seed` when omitted.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Perturb one analytic gradient entry (negative control).
        #[arg(long, hide = true)]
        corrupt_gradient: bool,
    },
    /// Replay a fixed communication topology through the routing machinery.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// chain, star, complete or moa.
        #[arg(long)]
        topology: Topology,
        #[arg(long, default_value_t = 4)]
        steps: usize,
        #[arg(long, default_value = "Plan the task, solve it, and check the result.")]
        query: String,
    },
}

fn run(cli: Cli, out: &mut dyn Write) -> Result<bool> {
    match cli.command {
        Command::Train { common } => {
            cmd_train(&common.load()?, out)?;
        }
        Command::Infer { common, query, queries } => {
            let cfg = common.load()?;
            let queries = match (query, queries) {
                (Some(q), _) => vec![q],
                (None, Some(path)) => read_queries(&path)?,
                (None, None) => return Err(Error::InvalidArgument("pass --query or --queries".into())),
            };
            cmd_infer(&cfg, &queries, out)?;
        }
        Command::Ttt {
            common,
            queries,
            t_dense,
        } => {
            cmd_ttt(&common.load()?, &read_queries(&queries)?, t_dense, out)?;
        }
        Command::Gradcheck {
            seed,
            config,
            corrupt_gradient,
        } => {
            let seed = match (seed, config) {
                (Some(s), _) => s,
                (None, Some(path)) => load_config(&path)?.router.seed,
                (None, None) => 1,
            };
            let report = cmd_gradcheck(seed, corrupt_gradient, out)?;
            return Ok(report.max_rel_error <= GRADCHECK_TOLERANCE);
        }
        Command::Simulate {
            common,
            topology,
            steps,
            query,
        } => {
            cmd_simulate(&common.load()?, topology, steps, &query, out)?;
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match run(cli, &mut out) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            let _ = out.flush();
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
