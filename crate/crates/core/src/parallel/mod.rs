//! Message-passing execution of the summary predictor.
//!
//! There is one logical worker per block and a dedicated master. Worker `m`
//! holds `D_m ∪ D^B_m` with its outputs, every test input and a copy of the
//! support set. A run goes through these phases:
//!
//! 1. `band`: each worker computes the residual blocks inside the band of its
//!    rows and ships the in-band training-training blocks the transpose path needs;
//! 2. `upper-i` for `i = 1 .. M-1-B`: worker `k` computes `Rbar_{D_k U_{k+B+i}}`
//!    from its band rows and sends it to the workers whose band contains `k`;
//! 3. `dd-d`: off-band training-training blocks, by increasing offset;
//! 4. `lower`: worker `n` computes `Rbar_{U_n D_k}` for `k > n + B` and sends the
//!    transpose to the workers holding row `k`;
//! 5. `local`: local summary terms go to the master;
//! 6. `reduce`: the master adds them in block order and scatters each worker's
//!    slice of the global summary;
//! 7. `predict` and `gather`: every worker predicts its test block.
//!
//! Phases run bulk-synchronously on a thread pool of any size. Messages are
//! delivered in (sender, emission) order and all sums run in block order, so
//! the result does not depend on the thread count.

pub mod executor;
pub mod message;
pub mod plan;
pub mod worker;

use std::time::{Duration, Instant};

use nalgebra::DVector;

pub use executor::{Outgoing, PhaseTime, RunStats};
pub use message::{BlockCoord, Endpoint, Message, MessageKind, Payload, TraceEntry, TRACE_HEADER};
pub use plan::expected_message_count;
pub use worker::WorkerShard;

use crate::baselines::{Covariance, Prediction};
use crate::data::{Dataset, Inputs};
use crate::error::{GpError, Result};
use crate::kernel::{gram, Hyperparams, PointSet};
use crate::lma::{lma_predict_summary, CrossBlocks, GlobalSummary, LmaConfig, SummaryTerms};
use crate::partition::{partition_inputs, select_support, BlockPartition, SupportSet};
use crate::synthetic::gp_dataset;
use executor::Executor;
use worker::{global_slice, Slot, Worker};

#[derive(Debug, Clone, PartialEq)]
pub struct ParallelOptions {
    /// Physical threads the logical workers are multiplexed onto.
    pub threads: usize,
    /// Longest a single phase may take before the run is aborted.
    pub phase_timeout: Duration,
}

impl ParallelOptions {
    pub fn with_threads(threads: usize) -> Self {
        ParallelOptions {
            threads,
            ..ParallelOptions::default()
        }
    }
}

impl Default for ParallelOptions {
    fn default() -> Self {
        ParallelOptions {
            threads: std::thread::available_parallelism().map_or(1, |n| n.get()),
            phase_timeout: Duration::from_secs(600),
        }
    }
}

fn check(partition: &BlockPartition, bandwidth: usize) -> Result<()> {
    let m = partition.num_blocks();
    if bandwidth == 0 || bandwidth >= m {
        return Err(GpError::invalid(format!(
            "the parallel protocol needs 1 <= B < M (got B = {bandwidth}, M = {m})"
        )));
    }
    Ok(())
}

fn shards(
    train: &Dataset,
    test: &Inputs,
    h: &Hyperparams,
    partition: &BlockPartition,
    support: &SupportSet,
    bandwidth: usize,
) -> Result<Vec<Slot>> {
    if train.is_empty() {
        return Err(GpError::invalid("training set is empty"));
    }
    h.check_dim(train.dim())?;
    if !test.is_empty() {
        h.check_dim(test.dim())?;
    }
    if partition.num_train() != train.len() || partition.num_test() != test.len() {
        return Err(GpError::invalid("partition does not match the data"));
    }
    Ok((0..partition.num_blocks())
        .map(|m| {
            Slot::new(WorkerShard::build(
                train, test, partition, support, m, bandwidth,
            ))
        })
        .collect())
}

/// Phases 1-4: every worker ends up with the rows `Rbar_{D_k U}` it needs.
fn cross_phases(
    exec: &mut Executor,
    slots: &mut [Slot],
    h: &Hyperparams,
    bandwidth: usize,
) -> Result<()> {
    let m_blocks = slots.len();
    exec.run_phase("band", slots, |slot, _inbox| {
        let shard = slot.shard.take().expect("fresh shard");
        let mut w = Worker::setup(shard, h, bandwidth)?;
        let out = w.send_dd_band();
        slot.worker = Some(w);
        Ok(out)
    })?;
    for i in 1..=plan::upper_steps(m_blocks, bandwidth) {
        let phase = format!("upper-{i}");
        exec.run_phase(&phase, slots, |slot, inbox| {
            let w = slot.worker();
            w.absorb(&phase, inbox)?;
            w.upper_step(&phase, i)
        })?;
    }
    for d in plan::dd_offsets(m_blocks, bandwidth) {
        let phase = format!("dd-{d}");
        exec.run_phase(&phase, slots, |slot, inbox| {
            let w = slot.worker();
            w.absorb(&phase, inbox)?;
            w.dd_step(&phase, d)
        })?;
    }
    exec.run_phase("lower", slots, |slot, inbox| {
        let w = slot.worker();
        w.absorb("lower", inbox)?;
        w.lower_step("lower")
    })?;
    Ok(())
}

/// Runs the residual cross-block phases and returns row `m` of `Rbar_{DU}` as
/// held by worker `m`.
pub fn compute_rbar_cross_parallel(
    train: &Dataset,
    test: &Inputs,
    h: &Hyperparams,
    partition: &BlockPartition,
    support: &SupportSet,
    bandwidth: usize,
    opts: &ParallelOptions,
) -> Result<(CrossBlocks, RunStats)> {
    check(partition, bandwidth)?;
    let mut slots = shards(train, test, h, partition, support, bandwidth)?;
    let mut exec = Executor::new(slots.len(), opts.threads, opts.phase_timeout)?;
    cross_phases(&mut exec, &mut slots, h, bandwidth)?;
    exec.run_phase("collect", &mut slots, |slot, inbox| {
        slot.worker().absorb("collect", inbox)?;
        Ok(Vec::new())
    })?;
    let rows = slots
        .iter_mut()
        .enumerate()
        .map(|(m, s)| s.worker().rbar_row("collect", m))
        .collect::<Result<Vec<_>>>()?;
    Ok((CrossBlocks::from_blocks(rows)?, exec.finish()))
}

/// Parallel LMA with the support set and partition drawn as in
/// [`lma_predict_summary`]. Returns predictive means and variances.
pub fn run_parallel_lma(
    train: &Dataset,
    test: &Inputs,
    h: &Hyperparams,
    config: &LmaConfig,
    opts: &ParallelOptions,
) -> Result<(Prediction, RunStats)> {
    config.validate()?;
    if config.markov_order == 0 {
        return Err(GpError::invalid(
            "the parallel protocol needs Markov order at least 1",
        ));
    }
    let partition = partition_inputs(&train.inputs, test, config.blocks)?;
    let support = select_support(&train.inputs, config.support_size, config.support_seed)?;
    run_parallel_with_parts(
        train,
        test,
        h,
        &partition,
        &support,
        config.markov_order,
        opts,
    )
}

pub fn run_parallel_with_parts(
    train: &Dataset,
    test: &Inputs,
    h: &Hyperparams,
    partition: &BlockPartition,
    support: &SupportSet,
    bandwidth: usize,
    opts: &ParallelOptions,
) -> Result<(Prediction, RunStats)> {
    check(partition, bandwidth)?;
    let m_blocks = partition.num_blocks();
    let mut slots = shards(train, test, h, partition, support, bandwidth)?;
    let mut exec = Executor::new(m_blocks, opts.threads, opts.phase_timeout)?;
    cross_phases(&mut exec, &mut slots, h, bandwidth)?;

    exec.run_phase("local", &mut slots, |slot, inbox| {
        let w = slot.worker();
        w.absorb("local", inbox)?;
        w.local_terms("local")
    })?;

    let offsets = partition.test_offsets();
    let support_points = PointSet::support(&train.inputs, &support.indices);
    let mut jitter = 0.0f64;
    exec.master_phase("reduce", |inbox| {
        let mut terms: Vec<Option<SummaryTerms>> = vec![None; m_blocks];
        for msg in inbox {
            match (msg.src, msg.payload) {
                (
                    Endpoint::Worker(m),
                    Payload::Local {
                        terms: t,
                        jitter: j,
                    },
                ) if terms[m].is_none() => {
                    terms[m] = Some(t);
                    jitter = jitter.max(j);
                }
                (src, p) => {
                    return Err(GpError::Protocol {
                        phase: "reduce".into(),
                        detail: format!("master got unexpected {} from {src}", p.kind().as_str()),
                    })
                }
            }
        }
        let terms = terms
            .into_iter()
            .enumerate()
            .map(|(m, t)| {
                t.ok_or_else(|| GpError::Protocol {
                    phase: "reduce".into(),
                    detail: format!("no local summary from w{m}"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let sigma_ss = gram(&support_points, &support_points, h)?;
        let global = GlobalSummary::reduce(&sigma_ss, &terms)?;
        (0..m_blocks)
            .map(|m| Ok(Outgoing::to_worker(m, global_slice(&global, &offsets, m)?)))
            .collect()
    })?;

    exec.run_phase("predict", &mut slots, |slot, inbox| {
        let w = slot.worker();
        w.absorb("predict", inbox)?;
        w.predict("predict")
    })?;

    let n_u = partition.num_test();
    let mut mean = DVector::zeros(n_u);
    let mut var = DVector::zeros(n_u);
    exec.master_phase("gather", |inbox| {
        let mut seen = vec![false; m_blocks];
        for msg in inbox {
            match (msg.src, msg.payload) {
                (
                    Endpoint::Worker(m),
                    Payload::Prediction {
                        mean: mu,
                        var: v,
                        jitter: j,
                    },
                ) if !seen[m] && mu.len() == offsets[m + 1] - offsets[m] && v.len() == mu.len() => {
                    mean.rows_mut(offsets[m], mu.len()).copy_from(&mu);
                    var.rows_mut(offsets[m], v.len()).copy_from(&v);
                    jitter = jitter.max(j);
                    seen[m] = true;
                }
                (src, p) => {
                    return Err(GpError::Protocol {
                        phase: "gather".into(),
                        detail: format!(
                            "master got unexpected or malformed {} from {src}",
                            p.kind().as_str()
                        ),
                    })
                }
            }
        }
        if let Some(m) = seen.iter().position(|s| !s) {
            return Err(GpError::Protocol {
                phase: "gather".into(),
                detail: format!("no prediction from w{m}"),
            });
        }
        Ok(Vec::new())
    })?;
    let stats = exec.finish();
    let pred = Prediction::from_block_order(
        mean,
        Covariance::Diagonal(var),
        jitter,
        &partition.test_order(),
    );
    Ok((pred, stats))
}

/// One row of [`speedup_report`].
#[derive(Debug, Clone, PartialEq)]
pub struct SpeedupRow {
    pub n: usize,
    pub t_centralized_s: f64,
    pub t_parallel_s: f64,
    /// `t_centralized / t_parallel`
    pub speedup: f64,
    /// Largest difference between the two predictions (means and variances).
    pub max_abs_diff: f64,
}

/// Times centralized and parallel LMA on GP samples of each training size.
pub fn speedup_report(
    sizes: &[usize],
    n_test: usize,
    h: &Hyperparams,
    config: &LmaConfig,
    opts: &ParallelOptions,
    seed: u64,
) -> Result<Vec<SpeedupRow>> {
    let mut rows = Vec::with_capacity(sizes.len());
    for &n in sizes {
        let (train, test) = gp_dataset(n, n_test, h, seed)?;
        let t0 = Instant::now();
        let c = lma_predict_summary(&train, &test.inputs, h, config, false)?;
        let t_c = t0.elapsed().as_secs_f64();
        let t0 = Instant::now();
        let (p, _) = run_parallel_lma(&train, &test.inputs, h, config, opts)?;
        let t_p = t0.elapsed().as_secs_f64();
        let diff = (&c.mean - &p.mean)
            .amax()
            .max((c.variance() - p.variance()).amax());
        rows.push(SpeedupRow {
            n,
            t_centralized_s: t_c,
            t_parallel_s: t_p,
            speedup: t_c / t_p.max(f64::MIN_POSITIVE),
            max_abs_diff: diff,
        });
    }
    Ok(rows)
}
