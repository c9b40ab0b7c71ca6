//! Training, sparse inference, test-time adaptation and topology
//! simulation loops.

mod engine;
mod metrics;
mod simulate;
mod synthetic;
mod train;

pub use engine::{dense_gradient, infer, infer_all, run_query, AgentFailure, Mode, QueryRun, RunOptions, Runtime};
pub use metrics::{argmin_agreement, evaluate_routing, lowest_m_recovered, selection_within_lowest, RoutingEval};
pub use simulate::{schedule, simulate, verify_topology, Topology};
pub use synthetic::{synthetic_queries, SyntheticFamily};
pub use train::{
    test_time_train, train, BatchRecord, TrainHyper, TrainReport, TttOutcome, TTT_MAX_DENSE, TTT_RECOMMENDED_MIN_DENSE,
};
