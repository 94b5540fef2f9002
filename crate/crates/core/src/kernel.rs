//! Squared-exponential covariance with i.i.d. observation noise.
//!
//! The noise term fires on point identity ([`PointId`] equality), never on
//! coordinate equality: two training rows with identical coordinates are still two
//! independent observations.

use nalgebra::DMatrix;

use crate::data::Inputs;
use crate::error::{GpError, Result};

/// Kernel and prior hyperparameters. They are inputs; nothing here learns them.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparams {
    pub signal_var: f64,
    pub noise_var: f64,
    pub lengthscales: Vec<f64>,
    pub prior_mean: f64,
}

impl Hyperparams {
    pub fn new(
        signal_var: f64,
        noise_var: f64,
        lengthscales: Vec<f64>,
        prior_mean: f64,
    ) -> Result<Self> {
        if !(signal_var > 0.0 && signal_var.is_finite()) {
            return Err(GpError::invalid(format!(
                "signal variance must be positive, got {signal_var}"
            )));
        }
        if !(noise_var >= 0.0 && noise_var.is_finite()) {
            return Err(GpError::invalid(format!(
                "noise variance must be non-negative, got {noise_var}"
            )));
        }
        if lengthscales.is_empty() {
            return Err(GpError::invalid("at least one length-scale is required"));
        }
        if let Some(l) = lengthscales.iter().find(|l| !(**l > 0.0 && l.is_finite())) {
            return Err(GpError::invalid(format!(
                "length-scales must be positive, got {l}"
            )));
        }
        if !prior_mean.is_finite() {
            return Err(GpError::invalid("prior mean must be finite"));
        }
        Ok(Hyperparams {
            signal_var,
            noise_var,
            lengthscales,
            prior_mean,
        })
    }

    /// Same length-scale in every one of `dim` dimensions.
    pub fn isotropic(
        signal_var: f64,
        noise_var: f64,
        lengthscale: f64,
        dim: usize,
        prior_mean: f64,
    ) -> Result<Self> {
        Hyperparams::new(signal_var, noise_var, vec![lengthscale; dim], prior_mean)
    }

    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }

    pub fn check_dim(&self, dim: usize) -> Result<()> {
        if dim != self.dim() {
            return Err(GpError::DimensionMismatch {
                expected: self.dim(),
                found: dim,
            });
        }
        Ok(())
    }

    /// Prior variance of a single noisy observation.
    pub fn prior_var(&self) -> f64 {
        self.signal_var + self.noise_var
    }

    #[inline]
    fn scaled_sq_dist(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .zip(&self.lengthscales)
            .map(|((x, y), l)| {
                let t = (x - y) / l;
                t * t
            })
            .sum()
    }

    #[inline]
    fn cov_unchecked(&self, a: &[f64], b: &[f64], same_point: bool) -> f64 {
        let k = self.signal_var * (-0.5 * self.scaled_sq_dist(a, b)).exp();
        if same_point {
            k + self.noise_var
        } else {
            k
        }
    }
}

/// Covariance between two points; `same_point` says whether they are the same
/// observation (which switches on the noise term).
pub fn kernel_eval(a: &[f64], b: &[f64], same_point: bool, h: &Hyperparams) -> Result<f64> {
    h.check_dim(a.len())?;
    h.check_dim(b.len())?;
    Ok(h.cov_unchecked(a, b, same_point))
}

/// Identity of a point within a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PointId {
    Train(usize),
    Test(usize),
    /// Support point placed at the given training input. It carries its own
    /// noise term and does not share noise with that training observation.
    Support(usize),
}

/// An owned list of points together with their identities.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    ids: Vec<PointId>,
    coords: Inputs,
}

impl PointSet {
    pub fn new(ids: Vec<PointId>, coords: Inputs) -> Result<Self> {
        if ids.len() != coords.len() {
            return Err(GpError::DimensionMismatch {
                expected: coords.len(),
                found: ids.len(),
            });
        }
        Ok(PointSet { ids, coords })
    }

    pub fn empty(dim: usize) -> Self {
        PointSet {
            ids: Vec::new(),
            coords: Inputs::empty(dim),
        }
    }

    pub fn train(inputs: &Inputs, indices: &[usize]) -> Self {
        PointSet {
            ids: indices.iter().map(|&i| PointId::Train(i)).collect(),
            coords: inputs.select(indices),
        }
    }

    pub fn test(inputs: &Inputs, indices: &[usize]) -> Self {
        PointSet {
            ids: indices.iter().map(|&i| PointId::Test(i)).collect(),
            coords: inputs.select(indices),
        }
    }

    pub fn support(train: &Inputs, indices: &[usize]) -> Self {
        PointSet {
            ids: indices.iter().map(|&i| PointId::Support(i)).collect(),
            coords: train.select(indices),
        }
    }

    pub fn all_train(inputs: &Inputs) -> Self {
        let idx: Vec<usize> = (0..inputs.len()).collect();
        PointSet::train(inputs, &idx)
    }

    pub fn all_test(inputs: &Inputs) -> Self {
        let idx: Vec<usize> = (0..inputs.len()).collect();
        PointSet::test(inputs, &idx)
    }

    pub fn concat<'a>(parts: impl IntoIterator<Item = &'a PointSet>, dim: usize) -> PointSet {
        let mut ids = Vec::new();
        let mut data = Vec::new();
        for p in parts {
            ids.extend_from_slice(&p.ids);
            data.extend_from_slice(p.coords.as_slice());
        }
        PointSet {
            ids,
            coords: Inputs::new(data, dim).expect("concatenated rows share a dimension"),
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.coords.dim()
    }

    pub fn ids(&self) -> &[PointId] {
        &self.ids
    }

    pub fn coords(&self) -> &Inputs {
        &self.coords
    }
}

/// Covariance matrix between two point sets; entry `(i, j)` is
/// `kernel_eval(a_i, b_j)` with noise where the identities agree.
pub fn gram(a: &PointSet, b: &PointSet, h: &Hyperparams) -> Result<DMatrix<f64>> {
    if !a.is_empty() {
        h.check_dim(a.dim())?;
    }
    if !b.is_empty() {
        h.check_dim(b.dim())?;
    }
    Ok(gram_unchecked(a, b, h))
}

pub(crate) fn gram_unchecked(a: &PointSet, b: &PointSet, h: &Hyperparams) -> DMatrix<f64> {
    let inv_l: Vec<f64> = h.lengthscales.iter().map(|l| 1.0 / l).collect();
    let scale = |x: &[f64]| -> Vec<f64> { x.iter().zip(&inv_l).map(|(v, s)| v * s).collect() };
    let sa: Vec<Vec<f64>> = a.coords.rows().map(scale).collect();
    let sb: Vec<Vec<f64>> = b.coords.rows().map(scale).collect();
    DMatrix::from_fn(a.len(), b.len(), |i, j| {
        let d2: f64 = sa[i]
            .iter()
            .zip(&sb[j])
            .map(|(x, y)| (x - y) * (x - y))
            .sum();
        let k = h.signal_var * (-0.5 * d2).exp();
        if a.ids[i] == b.ids[j] {
            k + h.noise_var
        } else {
            k
        }
    })
}

/// Self-covariance of a set of distinct observations (noise on the diagonal).
pub fn self_gram(points: &Inputs, h: &Hyperparams) -> Result<DMatrix<f64>> {
    let set = PointSet::all_train(points);
    gram(&set, &set, h)
}
