//! Command-line layer over [`viraldyn`]: strict JSON configuration,
//! subcommand execution and CSV/JSON artifacts.

pub mod commands;
pub mod config;
pub mod output;

pub use commands::{execute, Command};
pub use config::{load_config, parse_config, ConfigError, RunConfig};
pub use output::write_trajectory_csv;
