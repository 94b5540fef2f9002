//! The `predict`, `toy` and `bench` commands.

use std::path::{Path, PathBuf};
use std::time::Instant;

use lma_gp::lma::{predict_summary_with_setup, LmaSetup, COMPLEXITY_NOTE};
use lma_gp::parallel::{run_parallel_lma, ParallelOptions, RunStats};
use lma_gp::synthetic::{
    gp_dataset, toy_dataset, toy_function, toy_hyperparams, toy_partition, TOY_BOUNDARIES,
};
use lma_gp::{
    fgp_predict, lma_predict_summary, partition_inputs, pic_predict, select_support, Dataset,
    Hyperparams, Inputs, Prediction,
};

use crate::config::{Method, RunConfig};
use crate::error::{CliError, CliResult};
use crate::io::{input_header, load_csv, write_dataset, write_matrix, write_rows, write_text};
use crate::metrics::{rmse, MetricsReport};

/// Result of a centralized or parallel prediction run.
pub struct RunOutcome {
    pub prediction: Prediction,
    pub stats: Option<RunStats>,
}

/// Runs the configured method on in-memory data.
pub fn run_method(
    cfg: &RunConfig,
    train: &Dataset,
    test: &Inputs,
    h: &Hyperparams,
) -> CliResult<RunOutcome> {
    cfg.check_flags()?;
    let prediction = match cfg.method {
        Method::Fgp => fgp_predict(train, test, h, cfg.want_cov)?,
        Method::Pic => {
            let lma = cfg.lma_config()?;
            let partition = partition_inputs(&train.inputs, test, lma.blocks)?;
            let support = select_support(&train.inputs, lma.support_size, lma.support_seed)?;
            pic_predict(train, test, h, &support, &partition, cfg.want_cov)?
        }
        Method::Lma if cfg.workers > 0 => {
            let opts = ParallelOptions::with_threads(cfg.workers);
            let (p, stats) = run_parallel_lma(train, test, h, &cfg.lma_config()?, &opts)?;
            return Ok(RunOutcome {
                prediction: p,
                stats: Some(stats),
            });
        }
        Method::Lma => lma_predict_summary(train, test, h, &cfg.lma_config()?, cfg.want_cov)?,
    };
    Ok(RunOutcome {
        prediction,
        stats: None,
    })
}

/// Side files written next to the predictions file.
pub fn sidecar(out: &Path, suffix: &str) -> PathBuf {
    out.with_extension(suffix)
}

/// Loads the data, predicts, and writes `x1..xd,mean,var` rows in test order
/// plus a metrics report (and the covariance and trace when asked for).
pub fn cmd_predict(cfg: &RunConfig) -> CliResult<MetricsReport> {
    cfg.check_flags()?;
    let train_path = cfg.require_train()?;
    let test_path = cfg.test.as_deref().ok_or_else(|| {
        CliError::usage("missing required flag --test (or `test` in the config file)")
    })?;
    let out = cfg.require_out()?;
    let train = load_csv(train_path)?.into_dataset(train_path)?;
    let test = load_csv(test_path)?;
    if test.inputs.dim() != train.dim() {
        return Err(CliError::usage(format!(
            "training inputs have {} columns but test inputs have {}",
            train.dim(),
            test.inputs.dim()
        )));
    }
    let h = cfg.hyperparams(train.dim())?;

    let t0 = Instant::now();
    let run = run_method(cfg, &train, &test.inputs, &h)?;
    let wall = t0.elapsed().as_secs_f64();
    let pred = &run.prediction;

    let mut header = input_header(train.dim());
    header.extend(["mean".to_string(), "var".to_string()]);
    let var = pred.variance();
    let rows = (0..pred.len()).map(|j| {
        let mut r = test.inputs.row(j).to_vec();
        r.extend([pred.mean[j], var[j]]);
        r
    });
    write_rows(out, &header, rows)?;
    if let Some(c) = pred.full_cov() {
        write_matrix(&sidecar(out, "cov.csv"), c)?;
    }

    let mut report = MetricsReport::new(cfg);
    report.n_train = train.len();
    report.n_test = test.inputs.len();
    report.wall_time_s = wall;
    report.jitter = pred.jitter;
    if let Some(y) = &test.outputs {
        report.rmse = Some(rmse(pred.mean.as_slice(), y)?);
    }
    if cfg.method == Method::Lma {
        report.push("complexity", COMPLEXITY_NOTE);
    }
    if let Some(stats) = &run.stats {
        add_stats(&mut report, stats);
        if cfg.trace {
            write_text(&sidecar(out, "trace.csv"), &stats.trace_csv())?;
        }
    }
    write_text(&sidecar(out, "metrics.txt"), &report.render())?;
    Ok(report)
}

fn add_stats(report: &mut MetricsReport, stats: &RunStats) {
    report.phase_times = stats
        .phases
        .iter()
        .map(|p| (p.name.clone(), p.time.as_secs_f64()))
        .collect();
    report.messages = Some(stats.messages);
    report.bytes = Some(stats.bytes);
    report.threads = Some(stats.threads);
}

/// Grid spacing of the toy curves.
pub const TOY_GRID_STEP: f64 = 1e-3;
const TOY_GRID_HALF: i64 = 5000;
pub const TOY_SUPPORT: usize = 16;
pub const TOY_MARKOV_ORDER: usize = 1;

/// Grid points `-5, -4.999, ..., 5`. Each is computed from an integer so the
/// block boundaries land on the grid exactly.
pub fn toy_grid() -> Vec<f64> {
    (-TOY_GRID_HALF..=TOY_GRID_HALF)
        .map(|i| i as f64 / 1000.0)
        .collect()
}

/// Boundary jump and interior increment of a mean curve on the toy grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Continuity {
    /// Largest `|mu(b) - mu(b - step)|` over the block boundaries `b`.
    pub jump: f64,
    /// Largest step between neighbouring grid points of the same block.
    pub interior: f64,
}

pub fn continuity(grid: &[f64], mean: &[f64]) -> Continuity {
    let boundary = |i: usize| TOY_BOUNDARIES.iter().any(|&b| grid[i] == b);
    let mut c = Continuity {
        jump: 0.0,
        interior: 0.0,
    };
    for i in 1..grid.len() {
        let step = (mean[i] - mean[i - 1]).abs();
        if boundary(i) {
            c.jump = c.jump.max(step);
        } else {
            c.interior = c.interior.max(step);
        }
    }
    c
}

/// Everything the toy command computes.
pub struct ToyResult {
    pub train: Dataset,
    pub grid: Vec<f64>,
    pub lma: Prediction,
    pub fgp: Prediction,
    pub local: Prediction,
    pub lma_continuity: Continuity,
    pub local_continuity: Continuity,
    pub fgp_continuity: Continuity,
    /// RMSE of the LMA grid mean against the FGP grid mean.
    pub lma_vs_fgp_rmse: f64,
    pub wall_time_s: f64,
}

/// LMA (M = 4, B = 1, |S| = 16), FGP and block-local GPs on the toy problem.
pub fn run_toy(seed: u64) -> CliResult<ToyResult> {
    let t0 = Instant::now();
    let h = toy_hyperparams();
    let train = toy_dataset(seed);
    let grid = toy_grid();
    let grid_inputs = Inputs::from_scalars(&grid)?;

    let partition = toy_partition(&train.inputs, &grid_inputs)?;
    let support = select_support(&train.inputs, TOY_SUPPORT, seed)?;
    let setup = LmaSetup::with_parts(
        &train,
        &grid_inputs,
        &h,
        partition.clone(),
        &support,
        TOY_MARKOV_ORDER,
    )?;
    let lma = predict_summary_with_setup(&setup, false)?;
    let fgp = fgp_predict(&train, &grid_inputs, &h, false)?;

    let mut local_mean = vec![0.0; grid.len()];
    let mut local_var = vec![0.0; grid.len()];
    for m in 0..partition.num_blocks() {
        let block_train = train.select(partition.train_block(m));
        let idx = partition.test_block(m);
        let p = fgp_predict(&block_train, &grid_inputs.select(idx), &h, false)?;
        let v = p.variance();
        for (pos, &j) in idx.iter().enumerate() {
            local_mean[j] = p.mean[pos];
            local_var[j] = v[pos];
        }
    }
    let local = Prediction {
        mean: local_mean.into(),
        cov: lma_gp::Covariance::Diagonal(local_var.into()),
        jitter: 0.0,
    };

    let lma_continuity = continuity(&grid, lma.mean.as_slice());
    let local_continuity = continuity(&grid, local.mean.as_slice());
    let fgp_continuity = continuity(&grid, fgp.mean.as_slice());
    let lma_vs_fgp_rmse = rmse(lma.mean.as_slice(), fgp.mean.as_slice())?;
    Ok(ToyResult {
        train,
        grid,
        lma,
        fgp,
        local,
        lma_continuity,
        local_continuity,
        fgp_continuity,
        lma_vs_fgp_rmse,
        wall_time_s: t0.elapsed().as_secs_f64(),
    })
}

/// Writes `toy_train.csv`, `toy_curves.csv` and `toy_metrics.txt` into the
/// `out` directory.
pub fn cmd_toy(cfg: &RunConfig) -> CliResult<(ToyResult, MetricsReport)> {
    let dir = cfg.require_out()?;
    let res = run_toy(cfg.seed)?;
    write_dataset(&dir.join("toy_train.csv"), &res.train)?;

    let mut header = vec!["x".to_string()];
    for name in ["lma", "fgp", "local"] {
        for col in ["mean", "lo", "hi"] {
            header.push(format!("{name}_{col}"));
        }
    }
    header.push("truth".into());
    let bands: Vec<(Vec<f64>, Vec<f64>)> = [&res.lma, &res.fgp, &res.local]
        .iter()
        .map(|p| (p.mean.as_slice().to_vec(), p.variance().as_slice().to_vec()))
        .collect();
    let rows = res.grid.iter().enumerate().map(|(i, &x)| {
        let mut r = vec![x];
        for (mean, var) in &bands {
            let half = 1.96 * var[i].max(0.0).sqrt();
            r.extend([mean[i], mean[i] - half, mean[i] + half]);
        }
        r.push(toy_function(x));
        r
    });
    write_rows(&dir.join("toy_curves.csv"), &header, rows)?;

    let mut report = MetricsReport::new(cfg);
    report.n_train = res.train.len();
    report.n_test = res.grid.len();
    report.wall_time_s = res.wall_time_s;
    report.jitter = res.lma.jitter;
    let h = toy_hyperparams();
    report.push("toy.signal_var", format!("{:?}", h.signal_var));
    report.push("toy.noise_var", format!("{:?}", h.noise_var));
    report.push("toy.lengthscale", format!("{:?}", h.lengthscales[0]));
    report.push("toy.prior_mean", format!("{:?}", h.prior_mean));
    report.push("toy.blocks", TOY_BOUNDARIES.len() + 1);
    report.push("toy.markov_order", TOY_MARKOV_ORDER);
    report.push("toy.support_size", TOY_SUPPORT);
    for (name, c) in [
        ("lma", res.lma_continuity),
        ("fgp", res.fgp_continuity),
        ("local", res.local_continuity),
    ] {
        report.push(format!("{name}.boundary_jump"), format!("{:e}", c.jump));
        report.push(
            format!("{name}.interior_increment"),
            format!("{:e}", c.interior),
        );
    }
    report.push("lma_vs_fgp_rmse", format!("{:e}", res.lma_vs_fgp_rmse));
    write_text(&dir.join("toy_metrics.txt"), &report.render())?;
    Ok((res, report))
}

/// Largest training size FGP is run at in the benchmark.
pub const BENCH_FGP_LIMIT: usize = 2000;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub method: String,
    pub n: usize,
    pub blocks: usize,
    pub markov_order: usize,
    pub support_size: usize,
    pub rmse: f64,
    pub time_s: f64,
    /// Centralized LMA time over parallel LMA time; parallel rows only.
    pub speedup: Option<f64>,
}

pub const BENCH_HEADER: [&str; 8] = ["method", "n", "M", "B", "S", "rmse", "time_s", "speedup"];

fn timed<T>(f: impl FnOnce() -> CliResult<T>) -> CliResult<(T, f64)> {
    let t0 = Instant::now();
    let v = f()?;
    Ok((v, t0.elapsed().as_secs_f64()))
}

/// GP-sampled data at each size in `cfg.sizes`; FGP up to [`BENCH_FGP_LIMIT`],
/// PIC and LMA always, parallel LMA when `workers > 0`. Rows come sorted by
/// (method, n).
pub fn run_bench(cfg: &RunConfig) -> CliResult<Vec<BenchRow>> {
    let h = cfg.hyperparams(cfg.dim)?;
    let lma = cfg.lma_config()?;
    let mut rows = Vec::new();
    for &n in &cfg.sizes {
        let (train, test) = gp_dataset(n, cfg.n_test, &h, cfg.seed)?;
        let row = |method: &str,
                   b: usize,
                   p: &Prediction,
                   t: f64,
                   speedup: Option<f64>|
         -> CliResult<BenchRow> {
            Ok(BenchRow {
                method: method.into(),
                n,
                blocks: lma.blocks,
                markov_order: b,
                support_size: lma.support_size,
                rmse: rmse(p.mean.as_slice(), &test.outputs)?,
                time_s: t,
                speedup,
            })
        };
        if n <= BENCH_FGP_LIMIT {
            let (p, t) = timed(|| Ok(fgp_predict(&train, &test.inputs, &h, false)?))?;
            rows.push(row("fgp", 0, &p, t, None)?);
        }
        let (p, t) = timed(|| {
            let partition = partition_inputs(&train.inputs, &test.inputs, lma.blocks)?;
            let support = select_support(&train.inputs, lma.support_size, lma.support_seed)?;
            Ok(pic_predict(
                &train,
                &test.inputs,
                &h,
                &support,
                &partition,
                false,
            )?)
        })?;
        rows.push(row("pic", 0, &p, t, None)?);
        let (p, t_lma) = timed(|| Ok(lma_predict_summary(&train, &test.inputs, &h, &lma, false)?))?;
        rows.push(row("lma", lma.markov_order, &p, t_lma, None)?);
        if cfg.workers > 0 {
            let opts = ParallelOptions::with_threads(cfg.workers);
            let ((p, _), t) =
                timed(|| Ok(run_parallel_lma(&train, &test.inputs, &h, &lma, &opts)?))?;
            rows.push(row(
                "lma-parallel",
                lma.markov_order,
                &p,
                t,
                Some(t_lma / t.max(f64::MIN_POSITIVE)),
            )?);
        }
    }
    rows.sort_by(|a, b| a.method.cmp(&b.method).then(a.n.cmp(&b.n)));
    Ok(rows)
}

pub fn write_bench(path: &Path, rows: &[BenchRow]) -> CliResult<()> {
    let mut text = BENCH_HEADER.join(",");
    text.push('\n');
    for r in rows {
        text.push_str(&format!(
            "{},{},{},{},{},{:?},{:?},{}\n",
            r.method,
            r.n,
            r.blocks,
            r.markov_order,
            r.support_size,
            r.rmse,
            r.time_s,
            r.speedup.map_or(String::new(), |s| format!("{s:?}"))
        ));
    }
    write_text(path, &text)
}

/// Writes the benchmark table to `out` and the report next to it.
pub fn cmd_bench(cfg: &RunConfig) -> CliResult<(Vec<BenchRow>, MetricsReport)> {
    let out = cfg.require_out()?;
    if cfg.want_cov || cfg.trace {
        return Err(CliError::usage(
            "bench takes neither --want-cov nor --trace",
        ));
    }
    let t0 = Instant::now();
    let rows = run_bench(cfg)?;
    write_bench(out, &rows)?;
    let mut report = MetricsReport::new(cfg);
    report.n_test = cfg.n_test;
    report.wall_time_s = t0.elapsed().as_secs_f64();
    report.push("rows", rows.len());
    report.push("complexity", COMPLEXITY_NOTE);
    write_text(&sidecar(out, "metrics.txt"), &report.render())?;
    Ok((rows, report))
}
