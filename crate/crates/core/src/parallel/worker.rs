//! Worker shards and the per-phase work of one worker.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use super::executor::Outgoing;
use super::message::{BlockCoord, Message, Payload};
use super::plan;
use crate::baselines::{centered, Covariance};
use crate::blockmat::{
    block_conditional, cholesky_jittered_with_context, residual, BlockConditional, ProjectedSet,
    Support,
};
use crate::data::{Dataset, Inputs};
use crate::error::{GpError, Result};
use crate::kernel::{Hyperparams, PointSet};
use crate::lma::cross::{hstack, markov_step, vstack};
use crate::lma::{local_summary_from_parts, posterior_from_summary, BlockData, UuMode, UuTerm};
use crate::partition::{BlockPartition, SupportSet};

/// The data handed to worker `m`: its own block, the `B` blocks after it, all
/// test inputs (grouped by block) and a copy of the support set.
#[derive(Debug, Clone)]
pub struct WorkerShard {
    pub m: usize,
    /// `(k, points, y)` for `k = m, m+1, ..., m+B`.
    pub blocks: Vec<(usize, PointSet, Vec<f64>)>,
    pub test_blocks: Vec<PointSet>,
    pub support: PointSet,
    /// `|D_k|` for every block; shape metadata only.
    pub train_sizes: Vec<usize>,
}

impl WorkerShard {
    pub fn build(
        train: &Dataset,
        test: &Inputs,
        partition: &BlockPartition,
        support: &SupportSet,
        m: usize,
        bandwidth: usize,
    ) -> WorkerShard {
        let m_blocks = partition.num_blocks();
        let blocks = std::iter::once(m)
            .chain(plan::band(m, bandwidth, m_blocks))
            .map(|k| {
                let idx = partition.train_block(k);
                let y = idx.iter().map(|&i| train.outputs[i]).collect();
                (k, PointSet::train(&train.inputs, idx), y)
            })
            .collect();
        WorkerShard {
            m,
            blocks,
            test_blocks: partition
                .test_blocks()
                .iter()
                .map(|b| PointSet::test(test, b))
                .collect(),
            support: PointSet::support(&train.inputs, &support.indices),
            train_sizes: partition.train_blocks().iter().map(Vec::len).collect(),
        }
    }

    /// Global training indices held by this shard.
    pub fn train_indices(&self) -> Vec<usize> {
        self.blocks
            .iter()
            .flat_map(|(_, p, _)| {
                p.ids().iter().filter_map(|id| match id {
                    crate::kernel::PointId::Train(i) => Some(*i),
                    _ => None,
                })
            })
            .collect()
    }
}

pub(crate) struct Worker {
    m: usize,
    bandwidth: usize,
    m_blocks: usize,
    h: Hyperparams,
    support: Support,
    /// Projected `D_k` for `k = m ..= m+B`, own block first.
    held: Vec<(usize, ProjectedSet)>,
    band: ProjectedSet,
    y_own: DVector<f64>,
    y_band: DVector<f64>,
    tests: Vec<ProjectedSet>,
    all_u: ProjectedSet,
    train_sizes: Vec<usize>,
    test_offsets: Vec<usize>,
    cond: BlockConditional,
    /// `Rbar_{D_k U_n}` for held rows `k`.
    rbar: BTreeMap<(usize, usize), DMatrix<f64>>,
    /// `Rbar_{D_j D_k}` on the transpose path.
    dd: BTreeMap<(usize, usize), DMatrix<f64>>,
    global: Option<Payload>,
    jitter: f64,
}

/// A worker slot: the shard until setup, then the live state.
pub(crate) struct Slot {
    pub shard: Option<WorkerShard>,
    pub worker: Option<Worker>,
}

impl Slot {
    pub fn new(shard: WorkerShard) -> Slot {
        Slot {
            shard: Some(shard),
            worker: None,
        }
    }

    pub fn worker(&mut self) -> &mut Worker {
        self.worker.as_mut().expect("setup phase ran")
    }
}

fn protocol(phase: &str, detail: String) -> GpError {
    GpError::Protocol {
        phase: phase.to_string(),
        detail,
    }
}

impl Worker {
    /// Projects the shard onto the support set, forms the block conditional
    /// and computes every residual block inside the band of its held rows.
    pub fn setup(shard: WorkerShard, h: &Hyperparams, bandwidth: usize) -> Result<Worker> {
        let dim = shard.support.dim();
        let m_blocks = shard.train_sizes.len();
        let support = Support::new(shard.support, h)?;
        let s = support.len();
        let mut held = Vec::with_capacity(shard.blocks.len());
        let mut ys = Vec::with_capacity(shard.blocks.len());
        for (k, pts, y) in shard.blocks {
            held.push((k, support.project(pts, h)?));
            ys.push(centered(&y, h.prior_mean));
        }
        let tests: Vec<ProjectedSet> = shard
            .test_blocks
            .into_iter()
            .map(|p| support.project(p, h))
            .collect::<Result<_>>()?;
        let all_u = ProjectedSet::concat(&tests, dim, s);
        let band = ProjectedSet::concat(held[1..].iter().map(|(_, p)| p), dim, s);
        let y_band = DVector::from_vec(ys[1..].iter().flat_map(|y| y.iter().copied()).collect());
        let cond = block_conditional(&held[0].1, &band, h)?;
        let mut test_offsets = vec![0];
        for t in &tests {
            test_offsets.push(test_offsets.last().unwrap() + t.len());
        }
        let mut w = Worker {
            m: held[0].0,
            bandwidth,
            m_blocks,
            h: h.clone(),
            jitter: support.jitter().max(cond.max_jitter()),
            support,
            band,
            y_own: ys.swap_remove(0),
            y_band,
            tests,
            all_u,
            train_sizes: shard.train_sizes,
            test_offsets,
            cond,
            held,
            rbar: BTreeMap::new(),
            dd: BTreeMap::new(),
            global: None,
        };
        for (k, d_k) in &w.held {
            for n in k.saturating_sub(bandwidth)..(k + bandwidth + 1).min(m_blocks) {
                w.rbar.insert((*k, n), residual(d_k, &w.tests[n], h));
            }
        }
        Ok(w)
    }

    fn held_set(&self, k: usize) -> Option<&ProjectedSet> {
        self.held.iter().find(|(j, _)| *j == k).map(|(_, p)| p)
    }

    /// Stores incoming messages after checking their shapes.
    pub fn absorb(&mut self, phase: &str, inbox: Vec<Message>) -> Result<()> {
        for msg in inbox {
            let bad = |what: String| {
                protocol(
                    phase,
                    format!(
                        "message {} from {} to w{}: {what}",
                        msg.seq, msg.src, self.m
                    ),
                )
            };
            match msg.payload {
                Payload::Rbar { coord, block } => {
                    let expect = match coord {
                        BlockCoord::TrainTest { k, n } => {
                            (self.train_sizes[k], self.tests[n].len())
                        }
                        BlockCoord::TrainTrain { j, k } => {
                            (self.train_sizes[j], self.train_sizes[k])
                        }
                    };
                    if block.shape() != expect {
                        return Err(bad(format!(
                            "{coord:?} has shape {:?}, expected {expect:?}",
                            block.shape()
                        )));
                    }
                    match coord {
                        BlockCoord::TrainTest { k, n } => self.rbar.insert((k, n), block),
                        BlockCoord::TrainTrain { j, k } => self.dd.insert((j, k), block),
                    };
                }
                p @ Payload::Global { .. } => self.global = Some(p),
                other => return Err(bad(format!("unexpected {}", other.kind().as_str()))),
            }
        }
        Ok(())
    }

    fn rbar_block(&self, phase: &str, k: usize, n: usize) -> Result<&DMatrix<f64>> {
        self.rbar
            .get(&(k, n))
            .ok_or_else(|| protocol(phase, format!("w{} is missing Rbar(D{k},U{n})", self.m)))
    }

    fn dd_block(&self, phase: &str, j: usize, k: usize) -> Result<&DMatrix<f64>> {
        self.dd
            .get(&(j, k))
            .ok_or_else(|| protocol(phase, format!("w{} is missing Rbar(D{j},D{k})", self.m)))
    }

    fn band_range(&self) -> std::ops::Range<usize> {
        plan::band(self.m, self.bandwidth, self.m_blocks)
    }

    /// In-band training-training blocks owned by this worker that others need.
    pub fn send_dd_band(&mut self) -> Vec<Outgoing> {
        let (m, b) = (self.m, self.bandwidth);
        let mut out = Vec::new();
        for k in self.band_range() {
            if !crate::lma::cross::dd_block_needed(m, k, b) {
                continue;
            }
            let block = residual(
                &self.held[0].1,
                self.held_set(k).expect("band block held"),
                &self.h,
            );
            for w in plan::dd_recipients(m, k, b) {
                out.push(Outgoing::to_worker(
                    w,
                    Payload::Rbar {
                        coord: BlockCoord::TrainTrain { j: m, k },
                        block: block.clone(),
                    },
                ));
            }
            self.dd.insert((m, k), block);
        }
        out
    }

    /// Upper recursive step `i`: `Rbar_{D_m U_{m+B+i}}` from the band rows.
    pub fn upper_step(&mut self, phase: &str, i: usize) -> Result<Vec<Outgoing>> {
        let n = self.m + self.bandwidth + i;
        if n >= self.m_blocks {
            return Ok(Vec::new());
        }
        let parts = self
            .band_range()
            .map(|j| self.rbar_block(phase, j, n))
            .collect::<Result<Vec<_>>>()?;
        let block = markov_step(self.cond.predictor(), &parts);
        let out = plan::upper_recipients(self.m, self.bandwidth)
            .map(|w| {
                Outgoing::to_worker(
                    w,
                    Payload::Rbar {
                        coord: BlockCoord::TrainTest { k: self.m, n },
                        block: block.clone(),
                    },
                )
            })
            .collect();
        self.rbar.insert((self.m, n), block);
        Ok(out)
    }

    /// Off-band `Rbar_{D_m D_{m+d}}` on the transpose path.
    pub fn dd_step(&mut self, phase: &str, d: usize) -> Result<Vec<Outgoing>> {
        let (m, b) = (self.m, self.bandwidth);
        let k = m + d;
        if k >= self.m_blocks || !crate::lma::cross::dd_block_needed(m, k, b) {
            return Ok(Vec::new());
        }
        let parts = self
            .band_range()
            .map(|i| self.dd_block(phase, i, k))
            .collect::<Result<Vec<_>>>()?;
        let block = markov_step(self.cond.predictor(), &parts);
        let out = plan::dd_recipients(m, k, b)
            .into_iter()
            .map(|w| {
                Outgoing::to_worker(
                    w,
                    Payload::Rbar {
                        coord: BlockCoord::TrainTrain { j: m, k },
                        block: block.clone(),
                    },
                )
            })
            .collect();
        self.dd.insert((m, k), block);
        Ok(out)
    }

    /// Transpose path: `Rbar_{U_m D_k}` for every `k > m + B`, sent transposed
    /// to the workers holding row `k`.
    pub fn lower_step(&mut self, phase: &str) -> Result<Vec<Outgoing>> {
        let (m, b) = (self.m, self.bandwidth);
        if m + b + 1 >= self.m_blocks {
            return Ok(Vec::new());
        }
        let h_m = self.cond.predictor_for(&self.tests[m], &self.band, &self.h);
        let mut out = Vec::new();
        for k in m + b + 1..self.m_blocks {
            let parts = self
                .band_range()
                .map(|j| self.dd_block(phase, j, k))
                .collect::<Result<Vec<_>>>()?;
            let block = markov_step(&h_m, &parts).transpose();
            for w in plan::lower_recipients(k, b) {
                out.push(Outgoing::to_worker(
                    w,
                    Payload::Rbar {
                        coord: BlockCoord::TrainTest { k, n: m },
                        block: block.clone(),
                    },
                ));
            }
        }
        Ok(out)
    }

    /// `[Rbar_{D_k U_0}, ..., Rbar_{D_k U_{M-1}}]` for a held row `k`.
    pub fn rbar_row(&self, phase: &str, k: usize) -> Result<Vec<DMatrix<f64>>> {
        (0..self.m_blocks)
            .map(|n| self.rbar_block(phase, k, n).cloned())
            .collect()
    }

    fn sigma_row(&self, phase: &str, k: usize) -> Result<DMatrix<f64>> {
        let d_k = self.held_set(k).expect("row is held");
        Ok(d_k.phi().tr_mul(self.all_u.phi()) + hstack(&self.rbar_row(phase, k)?))
    }

    /// Local summary terms for the master, with the diagonal test blocks of
    /// `Sigma_dd_UU`.
    pub fn local_terms(&mut self, phase: &str) -> Result<Vec<Outgoing>> {
        let sigma_du = self.sigma_row(phase, self.m)?;
        let rows = self
            .band_range()
            .map(|j| self.sigma_row(phase, j))
            .collect::<Result<Vec<_>>>()?;
        let refs: Vec<&DMatrix<f64>> = rows.iter().collect();
        let sigma_band_u = vstack(&refs, self.all_u.len());
        let data = BlockData {
            own: &self.held[0].1,
            band: &self.band,
            y_own: &self.y_own,
            y_band: &self.y_band,
        };
        let local = local_summary_from_parts(
            &data,
            self.support.points(),
            &self.h,
            &self.cond,
            &sigma_du,
            &sigma_band_u,
        )?;
        let terms = local.terms(&UuMode::Blocks(self.test_offsets.clone()));
        Ok(vec![Outgoing::to_master(Payload::Local {
            terms,
            jitter: self.jitter,
        })])
    }

    /// Posterior over `U_m` from the received global-summary slice.
    pub fn predict(&mut self, phase: &str) -> Result<Vec<Outgoing>> {
        let Some(Payload::Global {
            y_s,
            y_u,
            ss,
            us,
            uu,
        }) = self.global.take()
        else {
            return Err(protocol(
                phase,
                format!("w{} has no global summary", self.m),
            ));
        };
        let chol = cholesky_jittered_with_context(&ss, "global support summary")?;
        let u_m = &self.tests[self.m];
        let prior = u_m.phi().tr_mul(u_m.phi()) + residual(u_m, u_m, &self.h);
        let (mean, cov) = posterior_from_summary(
            self.h.prior_mean,
            &chol,
            &y_s,
            &y_u,
            &us,
            &Covariance::Full(prior),
            &Covariance::Full(uu),
        )?;
        let var = match cov {
            Covariance::Full(c) => c.diagonal(),
            Covariance::Diagonal(d) => d,
        };
        Ok(vec![Outgoing::to_master(Payload::Prediction {
            mean,
            var,
            jitter: self.jitter.max(chol.jitter()),
        })])
    }
}

/// The slice of the global summary sent to worker `m`.
pub(crate) fn global_slice(
    g: &crate::lma::GlobalSummary,
    offsets: &[usize],
    m: usize,
) -> Result<Payload> {
    let (start, len) = (offsets[m], offsets[m + 1] - offsets[m]);
    let UuTerm::Blocks(blocks) = &g.uu else {
        return Err(GpError::invalid(
            "global summary lacks diagonal test blocks",
        ));
    };
    Ok(Payload::Global {
        y_s: g.y_s.clone(),
        y_u: g.y_u.rows(start, len).into_owned(),
        ss: g.ss.clone(),
        us: g.us.rows(start, len).into_owned(),
        uu: blocks[m].clone(),
    })
}
