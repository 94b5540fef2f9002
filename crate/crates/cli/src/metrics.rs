//! Error metrics and the key-value run report.

use std::fmt::Write as _;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

/// Root mean square error between predictions and observed outputs.
pub fn rmse(pred: &[f64], truth: &[f64]) -> CliResult<f64> {
    if pred.len() != truth.len() {
        return Err(CliError::usage(format!(
            "rmse needs equal lengths, got {} predictions and {} targets",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(CliError::usage("rmse needs at least one point"));
    }
    let ss: f64 = pred.iter().zip(truth).map(|(p, t)| (t - p).powi(2)).sum();
    Ok((ss / pred.len() as f64).sqrt())
}

/// Outcome of one command, written as `key=value` lines after the config echo.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsReport {
    pub config: Vec<String>,
    pub rmse: Option<f64>,
    pub n_train: usize,
    pub n_test: usize,
    pub wall_time_s: f64,
    /// `(phase, seconds)` in execution order.
    pub phase_times: Vec<(String, f64)>,
    pub jitter: f64,
    pub messages: Option<usize>,
    pub bytes: Option<usize>,
    pub threads: Option<usize>,
    pub extra: Vec<(String, String)>,
}

impl MetricsReport {
    pub fn new(config: &RunConfig) -> Self {
        MetricsReport {
            config: config.echo(),
            ..MetricsReport::default()
        }
    }

    pub fn push(&mut self, key: impl Into<String>, value: impl ToString) {
        self.extra.push((key.into(), value.to_string()));
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for line in &self.config {
            writeln!(s, "config.{line}").unwrap();
        }
        if let Some(r) = self.rmse {
            writeln!(s, "rmse={r:?}").unwrap();
        }
        writeln!(s, "n_train={}", self.n_train).unwrap();
        writeln!(s, "n_test={}", self.n_test).unwrap();
        writeln!(s, "wall_time_s={:?}", self.wall_time_s).unwrap();
        for (name, t) in &self.phase_times {
            writeln!(s, "phase_time_s.{name}={t:?}").unwrap();
        }
        writeln!(s, "jitter={:e}", self.jitter).unwrap();
        if let Some(m) = self.messages {
            writeln!(s, "messages={m}").unwrap();
        }
        if let Some(b) = self.bytes {
            writeln!(s, "bytes={b}").unwrap();
        }
        if let Some(t) = self.threads {
            writeln!(s, "threads={t}").unwrap();
        }
        for (k, v) in &self.extra {
            writeln!(s, "{k}={v}").unwrap();
        }
        s
    }
}
