//! Command-line runner for episodic few-shot evaluation grids over stored
//! embeddings. The binary is a thin wrapper around [`commands`].

pub mod commands;
pub mod config;
mod error;
pub mod output;

pub use commands::{
    cmd_cross, cmd_eval, cmd_export_csv, cmd_inspect, cmd_plotdata, cmd_synth, Outcome,
};
pub use config::{EmbeddingSource, GridOverrides, RunConfig};
pub use error::{CliError, CliResult, EXIT_CONFIG, EXIT_DATA, EXIT_INFEASIBLE};
