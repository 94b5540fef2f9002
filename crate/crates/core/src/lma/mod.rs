//! Low-rank-cum-Markov approximation.
//!
//! The residual covariance `R = Sigma - Q` is kept exactly inside a band of `B`
//! neighbouring blocks. Outside the band a block is the product of band blocks
//! chained through the intermediate blocks ([`rbar`]), which makes the inverse of
//! the approximated training residual `B`-block-banded.
//!
//! Two predictors are provided:
//!
//! - [`lma_predict_direct`] assembles the approximate prior densely and solves
//!   with it; `O(|D|^3)`, reference only.
//! - [`lma_predict_summary`] never forms a `|D| x |D|` matrix. Each block
//!   produces a local summary, the summaries are added up in block order, and the
//!   posterior follows from the global summary with a single `|S| x |S|` solve.
//!   Centralized cost is
//!   `O(|D||S|^2 + B|D|(B|D|/M)^2 + |U||D|(|S| + B|D|/M))`; with `M` workers the
//!   per-worker cost drops to `O(|S|^3 + (B|D|/M)^3 + |U|(|D|/M)(|S| + B|D|/M))`.

pub mod cross;
pub mod direct;
pub mod rbar;
pub mod summary;

use nalgebra::DVector;

use crate::baselines::{centered, pic_predict, Prediction};
use crate::blockmat::{block_conditional, BlockConditional, ProjectedSet, Support};
use crate::data::{Dataset, Inputs};
use crate::error::{GpError, Result};
use crate::kernel::{Hyperparams, PointSet};
use crate::partition::{partition_inputs, select_support, BlockPartition, SupportSet};

pub use cross::{cross_blocks_centralized, markov_step, CrossBlocks};
pub use direct::{lma_predict_direct, predict_direct_with_setup};
pub use rbar::RbarTable;
pub use summary::{
    global_summary, local_summary, local_summary_from_parts, posterior_from_summary,
    predict_summary_with_setup, BlockData, GlobalSummary, LocalSummary, SummaryTerms, UuMode,
    UuTerm,
};

/// Complexity note recorded with every summary-form run.
pub const COMPLEXITY_NOTE: &str = "centralized O(|D||S|^2 + B|D|(B|D|/M)^2 + |U||D|(|S|+B|D|/M)); \
parallel per worker O(|S|^3 + (B|D|/M)^3 + |U|(|D|/M)(|S|+B|D|/M))";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LmaConfig {
    /// Markov order `B`.
    pub markov_order: usize,
    pub support_size: usize,
    /// Number of blocks `M`.
    pub blocks: usize,
    pub support_seed: u64,
}

impl LmaConfig {
    pub fn new(
        markov_order: usize,
        support_size: usize,
        blocks: usize,
        support_seed: u64,
    ) -> Result<Self> {
        let c = LmaConfig {
            markov_order,
            support_size,
            blocks,
            support_seed,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.blocks == 0 {
            return Err(GpError::invalid("number of blocks must be at least 1"));
        }
        if self.support_size == 0 {
            return Err(GpError::invalid("support size must be at least 1"));
        }
        if self.markov_order >= self.blocks {
            return Err(GpError::invalid(format!(
                "Markov order {} must be below the number of blocks {}",
                self.markov_order, self.blocks
            )));
        }
        Ok(())
    }
}

/// Everything the predictors share: partition, support factorization and the
/// whitened point sets of every block.
#[derive(Debug, Clone)]
pub struct LmaSetup {
    pub h: Hyperparams,
    pub partition: BlockPartition,
    pub support: Support,
    pub bandwidth: usize,
    dim: usize,
    train_sets: Vec<ProjectedSet>,
    test_sets: Vec<ProjectedSet>,
    /// `y_{D_m} - mu` per block.
    train_resid: Vec<DVector<f64>>,
}

impl LmaSetup {
    /// Partitions along the principal axis and draws the support set from `config`.
    pub fn new(
        train: &Dataset,
        test: &Inputs,
        h: &Hyperparams,
        config: &LmaConfig,
    ) -> Result<Self> {
        config.validate()?;
        let partition = partition_inputs(&train.inputs, test, config.blocks)?;
        let support = select_support(&train.inputs, config.support_size, config.support_seed)?;
        LmaSetup::with_parts(train, test, h, partition, &support, config.markov_order)
    }

    pub fn with_parts(
        train: &Dataset,
        test: &Inputs,
        h: &Hyperparams,
        partition: BlockPartition,
        support: &SupportSet,
        bandwidth: usize,
    ) -> Result<Self> {
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
        if bandwidth >= partition.num_blocks() {
            return Err(GpError::invalid(format!(
                "Markov order {bandwidth} must be below the number of blocks {}",
                partition.num_blocks()
            )));
        }
        let support = Support::from_training(&train.inputs, support, h)?;
        let train_sets = partition
            .train_blocks()
            .iter()
            .map(|b| support.project(PointSet::train(&train.inputs, b), h))
            .collect::<Result<Vec<_>>>()?;
        let test_sets = partition
            .test_blocks()
            .iter()
            .map(|b| support.project(PointSet::test(test, b), h))
            .collect::<Result<Vec<_>>>()?;
        let train_resid = partition
            .train_blocks()
            .iter()
            .map(|b| {
                let y: Vec<f64> = b.iter().map(|&i| train.outputs[i]).collect();
                centered(&y, h.prior_mean)
            })
            .collect();
        Ok(LmaSetup {
            h: h.clone(),
            partition,
            support,
            bandwidth,
            dim: train.dim(),
            train_sets,
            test_sets,
            train_resid,
        })
    }

    pub fn num_blocks(&self) -> usize {
        self.partition.num_blocks()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn train_set(&self, m: usize) -> &ProjectedSet {
        &self.train_sets[m]
    }

    pub fn test_set(&self, m: usize) -> &ProjectedSet {
        &self.test_sets[m]
    }

    pub fn train_resid(&self, m: usize) -> &DVector<f64> {
        &self.train_resid[m]
    }

    /// `D^B_m` as one projected set.
    pub fn band_set(&self, m: usize) -> ProjectedSet {
        ProjectedSet::concat(
            self.partition
                .band(m, self.bandwidth)
                .map(|k| &self.train_sets[k]),
            self.dim,
            self.support.len(),
        )
    }

    /// `y_{D^B_m} - mu`.
    pub fn band_resid(&self, m: usize) -> DVector<f64> {
        let parts: Vec<f64> = self
            .partition
            .band(m, self.bandwidth)
            .flat_map(|k| self.train_resid[k].iter().copied())
            .collect();
        DVector::from_vec(parts)
    }

    /// All test blocks concatenated (block order).
    pub fn all_test(&self) -> ProjectedSet {
        ProjectedSet::concat(&self.test_sets, self.dim, self.support.len())
    }

    pub fn conditionals(&self) -> Result<Vec<BlockConditional>> {
        (0..self.num_blocks())
            .map(|m| {
                block_conditional(&self.train_sets[m], &self.band_set(m), &self.h)
                    .map_err(|e| e.in_block(m))
            })
            .collect()
    }
}

/// LMA posterior through local and global summaries. `B = 0` is the PIC
/// approximation and is delegated to [`pic_predict`].
pub fn lma_predict_summary(
    train: &Dataset,
    test: &Inputs,
    h: &Hyperparams,
    config: &LmaConfig,
    want_cov: bool,
) -> Result<Prediction> {
    config.validate()?;
    if config.markov_order == 0 {
        let partition = partition_inputs(&train.inputs, test, config.blocks)?;
        let support = select_support(&train.inputs, config.support_size, config.support_seed)?;
        return pic_predict(train, test, h, &support, &partition, want_cov);
    }
    let setup = LmaSetup::new(train, test, h, config)?;
    summary::predict_summary_with_setup(&setup, want_cov)
}
