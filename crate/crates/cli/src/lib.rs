//! Command-line front end for the `lma-gp` library: CSV input, run
//! configuration, the `predict`, `toy` and `bench` commands and their reports.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod metrics;

pub use commands::{cmd_bench, cmd_predict, cmd_toy, run_bench, run_method, run_toy};
pub use config::{Method, RunConfig};
pub use error::{CliError, CliResult};
pub use io::load_csv;
pub use metrics::{rmse, MetricsReport};
