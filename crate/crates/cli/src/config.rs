//! Run configuration: a flat `key = value` file overlaid by command-line flags.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use lma_gp::{Hyperparams, LmaConfig};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Fgp,
    Pic,
    Lma,
}

impl FromStr for Method {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        match s {
            "fgp" => Ok(Method::Fgp),
            "pic" => Ok(Method::Pic),
            "lma" => Ok(Method::Lma),
            _ => Err(CliError::usage(format!(
                "unknown method `{s}` (expected fgp, pic or lma)"
            ))),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Fgp => "fgp",
            Method::Pic => "pic",
            Method::Lma => "lma",
        })
    }
}

/// Every knob a command can read. Keys in the config file match the field
/// names; flags use the same names with dashes.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub method: Method,
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub markov_order: usize,
    pub support_size: usize,
    pub blocks: usize,
    /// Physical threads for the parallel protocol; 0 runs centralized.
    pub workers: usize,
    pub seed: u64,
    pub want_cov: bool,
    pub trace: bool,
    pub signal_var: f64,
    pub noise_var: f64,
    /// One value per input dimension, or a single value used for all of them.
    pub lengthscales: Vec<f64>,
    pub prior_mean: f64,
    pub sizes: Vec<usize>,
    pub n_test: usize,
    pub dim: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            method: Method::Lma,
            train: None,
            test: None,
            out: None,
            markov_order: 1,
            support_size: 64,
            blocks: 8,
            workers: 0,
            seed: 0,
            want_cov: false,
            trace: false,
            signal_var: 1.0,
            noise_var: 0.01,
            lengthscales: vec![1.0],
            prior_mean: 0.0,
            sizes: vec![500, 1000, 2000],
            n_test: 200,
            dim: 2,
        }
    }
}

pub const KEYS: [&str; 18] = [
    "method",
    "train",
    "test",
    "out",
    "markov_order",
    "support_size",
    "blocks",
    "workers",
    "seed",
    "want_cov",
    "trace",
    "signal_var",
    "noise_var",
    "lengthscales",
    "prior_mean",
    "sizes",
    "n_test",
    "dim",
];

fn parse<T: FromStr>(key: &str, value: &str) -> CliResult<T> {
    value
        .parse()
        .map_err(|_| CliError::usage(format!("invalid value `{value}` for `{key}`")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> CliResult<Vec<T>> {
    let items = value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect::<CliResult<Vec<T>>>()?;
    if items.is_empty() {
        return Err(CliError::usage(format!("`{key}` needs at least one value")));
    }
    Ok(items)
}

fn parse_bool(key: &str, value: &str) -> CliResult<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(CliError::usage(format!(
            "invalid value `{value}` for `{key}` (expected true or false)"
        ))),
    }
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn path_str(p: &Option<PathBuf>) -> String {
    p.as_ref()
        .map_or(String::new(), |p| p.display().to_string())
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> CliResult<()> {
        let value = value.trim();
        let path = || (!value.is_empty()).then(|| PathBuf::from(value));
        match key {
            "method" => self.method = value.parse()?,
            "train" => self.train = path(),
            "test" => self.test = path(),
            "out" => self.out = path(),
            "markov_order" => self.markov_order = parse(key, value)?,
            "support_size" => self.support_size = parse(key, value)?,
            "blocks" => self.blocks = parse(key, value)?,
            "workers" => self.workers = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "want_cov" => self.want_cov = parse_bool(key, value)?,
            "trace" => self.trace = parse_bool(key, value)?,
            "signal_var" => self.signal_var = parse(key, value)?,
            "noise_var" => self.noise_var = parse(key, value)?,
            "lengthscales" => self.lengthscales = parse_list(key, value)?,
            "prior_mean" => self.prior_mean = parse(key, value)?,
            "sizes" => self.sizes = parse_list(key, value)?,
            "n_test" => self.n_test = parse(key, value)?,
            "dim" => self.dim = parse(key, value)?,
            _ => {
                return Err(CliError::usage(format!(
                    "unknown configuration key `{key}`"
                )))
            }
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "method" => self.method.to_string(),
            "train" => path_str(&self.train),
            "test" => path_str(&self.test),
            "out" => path_str(&self.out),
            "markov_order" => self.markov_order.to_string(),
            "support_size" => self.support_size.to_string(),
            "blocks" => self.blocks.to_string(),
            "workers" => self.workers.to_string(),
            "seed" => self.seed.to_string(),
            "want_cov" => self.want_cov.to_string(),
            "trace" => self.trace.to_string(),
            "signal_var" => format!("{:?}", self.signal_var),
            "noise_var" => format!("{:?}", self.noise_var),
            "lengthscales" => self
                .lengthscales
                .iter()
                .map(|l| format!("{l:?}"))
                .collect::<Vec<_>>()
                .join(","),
            "prior_mean" => format!("{:?}", self.prior_mean),
            "sizes" => join(&self.sizes),
            "n_test" => self.n_test.to_string(),
            "dim" => self.dim.to_string(),
            _ => return None,
        })
    }

    /// Applies `key = value` lines. Blank lines and lines starting with `#` are
    /// skipped.
    pub fn apply_text(&mut self, text: &str, origin: &Path) -> CliResult<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| CliError::Data {
                path: origin.to_path_buf(),
                line: i as u64 + 1,
                msg: format!("expected `key = value`, found `{line}`"),
            })?;
            self.set(k.trim(), v).map_err(|e| CliError::Data {
                path: origin.to_path_buf(),
                line: i as u64 + 1,
                msg: e.to_string(),
            })?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> CliResult<()> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        self.apply_text(&text, path)
    }

    /// `key=value` lines for every key, in a fixed order.
    pub fn echo(&self) -> Vec<String> {
        KEYS.iter()
            .map(|k| format!("{k}={}", self.get(k).expect("known key")))
            .collect()
    }

    pub fn lma_config(&self) -> CliResult<LmaConfig> {
        LmaConfig::new(self.markov_order, self.support_size, self.blocks, self.seed)
            .map_err(|e| CliError::usage(e.to_string()))
    }

    /// Hyperparameters for inputs of dimension `dim`; a single length-scale is
    /// broadcast.
    pub fn hyperparams(&self, dim: usize) -> CliResult<Hyperparams> {
        let ls = match self.lengthscales.len() {
            1 => vec![self.lengthscales[0]; dim],
            n if n == dim => self.lengthscales.clone(),
            n => {
                return Err(CliError::usage(format!(
                    "{n} length-scales given for {dim}-dimensional inputs"
                )))
            }
        };
        Hyperparams::new(self.signal_var, self.noise_var, ls, self.prior_mean)
            .map_err(|e| CliError::usage(e.to_string()))
    }

    pub fn require_train(&self) -> CliResult<&Path> {
        self.train.as_deref().ok_or_else(|| {
            CliError::usage("missing required flag --train (or `train` in the config file)")
        })
    }

    pub fn require_out(&self) -> CliResult<&Path> {
        self.out.as_deref().ok_or_else(|| {
            CliError::usage("missing required flag --out (or `out` in the config file)")
        })
    }

    /// Combinations the commands cannot run.
    pub fn check_flags(&self) -> CliResult<()> {
        if self.workers > 0 && self.want_cov {
            return Err(CliError::usage(
                "--want-cov is not available with --workers",
            ));
        }
        if self.trace && self.workers == 0 {
            return Err(CliError::usage("--trace needs --workers"));
        }
        if self.workers > 0 && self.method != Method::Lma {
            return Err(CliError::usage(
                "--workers runs the parallel LMA protocol and needs --method lma",
            ));
        }
        Ok(())
    }
}
