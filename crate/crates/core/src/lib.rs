//! Gaussian process regression with the low-rank-cum-Markov approximation (LMA).
//!
//! The prior covariance is split into a reduced-rank part induced by a support set
//! and a residual part. Residual blocks inside a band of `B` neighbouring blocks are
//! kept exact; blocks outside the band are filled in by a Markov recursion so that
//! the inverse of the approximated residual matrix is `B`-block-banded. `B = 0`
//! recovers the partially independent conditional (PIC) approximation and
//! `B = M - 1` the full-rank GP.
//!
//! Module map:
//!
//! - [`kernel`]: squared-exponential covariance and Gram matrices.
//! - [`blockmat`]: jittered Cholesky, support projections, block conditionals,
//!   banded inverse Cholesky factors and the KL distance.
//! - [`partition`]: principal-axis block partitioning and support selection.
//! - [`baselines`]: full GP and PIC predictors.
//! - [`lma`]: the residual recursion, the direct predictor and the summary predictor.
//! - [`parallel`]: a message-passing executor running the summary predictor over
//!   one logical worker per block.
//! - [`synthetic`]: GP sampling and the one-dimensional toy problem.

pub mod baselines;
pub mod blockmat;
pub mod data;
pub mod error;
pub mod kernel;
pub mod lma;
pub mod parallel;
pub mod partition;
pub mod synthetic;

pub use baselines::{fgp_predict, pic_predict, pic_predict_direct, Covariance, Prediction};
pub use data::{Dataset, Inputs};
pub use error::{GpError, Result};
pub use kernel::{Hyperparams, PointId, PointSet};
pub use lma::{lma_predict_direct, lma_predict_summary, LmaConfig};
pub use partition::{partition_inputs, select_support, BlockPartition, SupportSet};
