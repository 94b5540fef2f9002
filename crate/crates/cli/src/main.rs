use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lma_cli::commands::{cmd_bench, cmd_predict, cmd_toy};
use lma_cli::{CliResult, RunConfig};

#[derive(Parser)]
#[command(
    name = "lma",
    version,
    about = "Gaussian process regression with the low-rank-cum-Markov approximation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Predict test outputs from a training CSV.
    Predict(Flags),
    /// Generate the one-dimensional toy problem and its prediction curves.
    Toy(Flags),
    /// Benchmark the predictors on GP-sampled data.
    Bench(Flags),
}

/// Every flag mirrors a configuration key; flags override the config file.
#[derive(Args)]
struct Flags {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// fgp, pic or lma.
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    train: Option<String>,
    #[arg(long)]
    test: Option<String>,
    /// Predictions file (predict, bench) or output directory (toy).
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    markov_order: Option<String>,
    #[arg(long)]
    support_size: Option<String>,
    #[arg(long)]
    blocks: Option<String>,
    /// Threads for the parallel protocol; 0 runs centralized.
    #[arg(long)]
    workers: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    want_cov: bool,
    /// Write the message trace (needs --workers).
    #[arg(long)]
    trace: bool,
    #[arg(long)]
    signal_var: Option<String>,
    #[arg(long)]
    noise_var: Option<String>,
    /// Comma-separated; one value is used for every dimension.
    #[arg(long)]
    lengthscales: Option<String>,
    #[arg(long)]
    prior_mean: Option<String>,
    /// Comma-separated training sizes for bench.
    #[arg(long)]
    sizes: Option<String>,
    #[arg(long)]
    n_test: Option<String>,
    #[arg(long)]
    dim: Option<String>,
}

impl Flags {
    fn resolve(&self) -> CliResult<RunConfig> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &self.config {
            cfg.apply_file(path)?;
        }
        let values = [
            ("method", &self.method),
            ("train", &self.train),
            ("test", &self.test),
            ("out", &self.out),
            ("markov_order", &self.markov_order),
            ("support_size", &self.support_size),
            ("blocks", &self.blocks),
            ("workers", &self.workers),
            ("seed", &self.seed),
            ("signal_var", &self.signal_var),
            ("noise_var", &self.noise_var),
            ("lengthscales", &self.lengthscales),
            ("prior_mean", &self.prior_mean),
            ("sizes", &self.sizes),
            ("n_test", &self.n_test),
            ("dim", &self.dim),
        ];
        for (key, value) in values {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        if self.want_cov {
            cfg.want_cov = true;
        }
        if self.trace {
            cfg.trace = true;
        }
        Ok(cfg)
    }
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Predict(f) => {
            let report = cmd_predict(&f.resolve()?)?;
            if let Some(r) = report.rmse {
                println!("rmse={r:?}");
            }
            println!("wall_time_s={:?}", report.wall_time_s);
        }
        Command::Toy(f) => {
            let (res, _) = cmd_toy(&f.resolve()?)?;
            println!("lma.boundary_jump={:e}", res.lma_continuity.jump);
            println!("lma.interior_increment={:e}", res.lma_continuity.interior);
            println!("local.boundary_jump={:e}", res.local_continuity.jump);
            println!("lma_vs_fgp_rmse={:e}", res.lma_vs_fgp_rmse);
        }
        Command::Bench(f) => {
            let (rows, _) = cmd_bench(&f.resolve()?)?;
            for r in rows {
                println!(
                    "{:<13} n={:<6} rmse={:.6} time_s={:.3}{}",
                    r.method,
                    r.n,
                    r.rmse,
                    r.time_s,
                    r.speedup
                        .map_or(String::new(), |s| format!(" speedup={s:.3}"))
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
