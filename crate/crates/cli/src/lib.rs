//! Config loading and subcommands behind the `agentroute` binary.

pub mod commands;
pub mod config;

pub use commands::{cmd_gradcheck, cmd_infer, cmd_simulate, cmd_train, cmd_ttt, read_queries, GRADCHECK_TOLERANCE};
pub use config::{load_config, RunConfig};
