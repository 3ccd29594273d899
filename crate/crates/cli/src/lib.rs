//! Config-driven runner for the multiplexed entangled-source experiments.
//!
//! Each subcommand of the `entangle-sim` binary maps to one `cmd_*` function
//! here, which simulates (or reads) count records, analyzes them and returns
//! the output files in memory.

pub mod config;
pub mod experiments;
pub mod output;
pub mod validate;

pub use config::{ConfigError, ExperimentConfig, Resolved};
pub use experiments::{
    cmd_car_sweep, cmd_chsh, cmd_fringe, cmd_multiplex_table, cmd_tomo, FringeRequest, Kind,
    RunContext, SweepVar,
};
pub use output::{Artifacts, Provenance, FORMAT_VERSION};
pub use validate::cmd_validate;
