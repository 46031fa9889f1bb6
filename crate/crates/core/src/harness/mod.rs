//! Seeded Monte Carlo runs of the urn process and the statistics applied to
//! them.

pub mod census;
pub mod ensemble;
pub mod monitor;
pub mod replication;
pub mod stats;

pub use census::{limit_graph_census, signaling_system_edges, Census, CensusClass, IsomorphismClass};
pub use ensemble::{run_ensemble, run_ensemble_with, write_trace_csv, EnsembleStats, MonitorSummary, TraceSummary};
pub use monitor::{
    first_monitor_step, monitor_stable_config, run_retention_ensemble, MonitorOutcome, MonitorSnapshot,
    RetentionStats, StableConfigMonitor,
};
pub use replication::{run_replication, run_replication_with, sample_grid, ReplicationOptions, ReplicationResult};
pub use stats::{
    azuma_bound, azuma_check, frozen_replay_success, submartingale_test, wilson_lower_bound, AzumaCheck,
    SubmartingaleReport,
};

use crate::error::{Error, Result};

pub(crate) fn thread_pool(parallelism: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| Error::Internal(format!("thread pool: {e}")))
}
