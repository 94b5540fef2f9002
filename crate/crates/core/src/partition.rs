//! Block partitioning of training/test inputs and random support selection.
//!
//! Training inputs are projected onto their first principal axis, sorted and cut
//! into `M` contiguous runs of (almost) equal size. Block order follows the axis,
//! so neighbouring block indices are neighbouring regions of input space, which is
//! what the Markov band over blocks relies on. Test points go to the block with the
//! nearest training centroid.

use std::ops::Range;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::Inputs;
use crate::error::{GpError, Result};

/// Ordered disjoint blocks of training indices `D_1..D_M` and test indices
/// `U_1..U_M` (blocks are zero-based here).
#[derive(Debug, Clone, PartialEq)]
pub struct BlockPartition {
    train_blocks: Vec<Vec<usize>>,
    test_blocks: Vec<Vec<usize>>,
    centroids: Vec<Vec<f64>>,
}

impl BlockPartition {
    /// Builds a partition from explicit training blocks and assigns test points to
    /// the nearest centroid.
    pub fn from_train_blocks(
        train: &Inputs,
        train_blocks: Vec<Vec<usize>>,
        test: &Inputs,
    ) -> Result<Self> {
        validate_cover(&train_blocks, train.len(), "training")?;
        if train_blocks.iter().any(Vec::is_empty) {
            return Err(GpError::invalid("training blocks must be non-empty"));
        }
        if !test.is_empty() && test.dim() != train.dim() {
            return Err(GpError::DimensionMismatch {
                expected: train.dim(),
                found: test.dim(),
            });
        }
        let centroids: Vec<Vec<f64>> = train_blocks.iter().map(|b| centroid(train, b)).collect();
        let mut test_blocks = vec![Vec::new(); train_blocks.len()];
        for (j, x) in test.rows().enumerate() {
            test_blocks[nearest(&centroids, x)].push(j);
        }
        Ok(BlockPartition {
            train_blocks,
            test_blocks,
            centroids,
        })
    }

    /// Builds a partition where both training and test blocks are given.
    pub fn from_blocks(
        train: &Inputs,
        train_blocks: Vec<Vec<usize>>,
        test_len: usize,
        test_blocks: Vec<Vec<usize>>,
    ) -> Result<Self> {
        validate_cover(&train_blocks, train.len(), "training")?;
        validate_cover(&test_blocks, test_len, "test")?;
        if train_blocks.len() != test_blocks.len() {
            return Err(GpError::invalid(
                "training and test partitions need the same number of blocks",
            ));
        }
        if train_blocks.iter().any(Vec::is_empty) {
            return Err(GpError::invalid("training blocks must be non-empty"));
        }
        let centroids = train_blocks.iter().map(|b| centroid(train, b)).collect();
        Ok(BlockPartition {
            train_blocks,
            test_blocks,
            centroids,
        })
    }

    pub fn num_blocks(&self) -> usize {
        self.train_blocks.len()
    }

    pub fn train_block(&self, m: usize) -> &[usize] {
        &self.train_blocks[m]
    }

    pub fn test_block(&self, m: usize) -> &[usize] {
        &self.test_blocks[m]
    }

    pub fn train_blocks(&self) -> &[Vec<usize>] {
        &self.train_blocks
    }

    pub fn test_blocks(&self) -> &[Vec<usize>] {
        &self.test_blocks
    }

    pub fn centroids(&self) -> &[Vec<f64>] {
        &self.centroids
    }

    pub fn num_train(&self) -> usize {
        self.train_blocks.iter().map(Vec::len).sum()
    }

    pub fn num_test(&self) -> usize {
        self.test_blocks.iter().map(Vec::len).sum()
    }

    /// Blocks making up `D^B_m`: `m+1 ..= min(m+B, M-1)`.
    pub fn band(&self, m: usize, bandwidth: usize) -> Range<usize> {
        let end = (m + bandwidth).min(self.num_blocks() - 1);
        (m + 1)..(end + 1).max(m + 1)
    }

    /// Training indices in block order.
    pub fn train_order(&self) -> Vec<usize> {
        self.train_blocks.concat()
    }

    /// Test indices in block order.
    pub fn test_order(&self) -> Vec<usize> {
        self.test_blocks.concat()
    }

    /// Start offset of each test block in block order, plus the total.
    pub fn test_offsets(&self) -> Vec<usize> {
        offsets(&self.test_blocks)
    }

    pub fn train_offsets(&self) -> Vec<usize> {
        offsets(&self.train_blocks)
    }
}

fn offsets(blocks: &[Vec<usize>]) -> Vec<usize> {
    let mut out = Vec::with_capacity(blocks.len() + 1);
    let mut acc = 0;
    out.push(0);
    for b in blocks {
        acc += b.len();
        out.push(acc);
    }
    out
}

fn validate_cover(blocks: &[Vec<usize>], n: usize, what: &str) -> Result<()> {
    if blocks.is_empty() {
        return Err(GpError::invalid(format!("{what} partition has no blocks")));
    }
    let mut seen = vec![false; n];
    for &i in blocks.iter().flatten() {
        if i >= n || seen[i] {
            return Err(GpError::invalid(format!(
                "{what} blocks must be disjoint and index 0..{n}"
            )));
        }
        seen[i] = true;
    }
    if seen.iter().any(|s| !s) {
        return Err(GpError::invalid(format!(
            "{what} blocks do not cover all points"
        )));
    }
    Ok(())
}

fn centroid(x: &Inputs, block: &[usize]) -> Vec<f64> {
    let mut c = vec![0.0; x.dim()];
    for &i in block {
        for (acc, v) in c.iter_mut().zip(x.row(i)) {
            *acc += v;
        }
    }
    let n = block.len().max(1) as f64;
    c.iter_mut().for_each(|v| *v /= n);
    c
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest centroid; ties go to the lower index.
fn nearest(centroids: &[Vec<f64>], x: &[f64]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (m, c) in centroids.iter().enumerate() {
        let d = sq_dist(c, x);
        if d < best_d {
            best_d = d;
            best = m;
        }
    }
    best
}

/// Unit vector along the direction of largest variance, with its largest
/// component made positive so the orientation is reproducible.
pub fn principal_axis(x: &Inputs) -> Vec<f64> {
    let d = x.dim();
    let n = x.len().max(1) as f64;
    let mean: Vec<f64> = (0..d)
        .map(|k| x.rows().map(|r| r[k]).sum::<f64>() / n)
        .collect();
    let mut cov = DMatrix::<f64>::zeros(d, d);
    for r in x.rows() {
        for a in 0..d {
            for b in 0..d {
                cov[(a, b)] += (r[a] - mean[a]) * (r[b] - mean[b]);
            }
        }
    }
    let eig = SymmetricEigen::new(cov);
    let mut top = 0;
    for k in 1..d {
        if eig.eigenvalues[k] > eig.eigenvalues[top] {
            top = k;
        }
    }
    let mut axis: Vec<f64> = eig.eigenvectors.column(top).iter().copied().collect();
    let mut lead = 0;
    for k in 1..d {
        if axis[k].abs() > axis[lead].abs() + 1e-12 {
            lead = k;
        }
    }
    if axis[lead] < 0.0 {
        axis.iter_mut().for_each(|v| *v = -*v);
    }
    axis
}

/// Splits the training inputs into `blocks` contiguous runs along the principal
/// axis and assigns every test input to the nearest block centroid.
pub fn partition_inputs(train: &Inputs, test: &Inputs, blocks: usize) -> Result<BlockPartition> {
    let n = train.len();
    if blocks == 0 {
        return Err(GpError::invalid("number of blocks must be at least 1"));
    }
    if blocks > n {
        return Err(GpError::invalid(format!(
            "cannot split {n} training points into {blocks} blocks"
        )));
    }
    let axis = principal_axis(train);
    let proj: Vec<f64> = train
        .rows()
        .map(|r| r.iter().zip(&axis).map(|(a, b)| a * b).sum())
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| proj[a].total_cmp(&proj[b]).then(a.cmp(&b)));

    let base = n / blocks;
    let extra = n % blocks;
    let mut train_blocks = Vec::with_capacity(blocks);
    let mut start = 0;
    for m in 0..blocks {
        let len = base + usize::from(m < extra);
        train_blocks.push(order[start..start + len].to_vec());
        start += len;
    }
    BlockPartition::from_train_blocks(train, train_blocks, test)
}

/// Training indices of a support set drawn uniformly without replacement.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SupportSet {
    pub indices: Vec<usize>,
    pub seed: u64,
}

impl SupportSet {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

pub fn select_support(train: &Inputs, size: usize, seed: u64) -> Result<SupportSet> {
    let n = train.len();
    if size == 0 || size > n {
        return Err(GpError::invalid(format!(
            "support size must be in 1..={n}, got {size}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut indices = rand::seq::index::sample(&mut rng, n, size).into_vec();
    indices.sort_unstable();
    Ok(SupportSet { indices, seed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn line(n: usize) -> Inputs {
        Inputs::from_scalars(&(1..=n).map(|v| v as f64).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn sorted_contiguous_split() {
        let x = line(8);
        // shuffle the rows to make sure ordering comes from the coordinates
        let perm = [5usize, 2, 7, 0, 3, 6, 1, 4];
        let shuffled = x.select(&perm);
        let p = partition_inputs(&shuffled, &Inputs::empty(1), 4).unwrap();
        let values: Vec<Vec<f64>> = (0..4)
            .map(|m| {
                p.train_block(m)
                    .iter()
                    .map(|&i| shuffled.row(i)[0])
                    .collect()
            })
            .collect();
        let mut sorted_values = values.clone();
        sorted_values
            .iter_mut()
            .for_each(|b| b.sort_by(f64::total_cmp));
        assert_eq!(
            sorted_values,
            vec![
                vec![1.0, 2.0],
                vec![3.0, 4.0],
                vec![5.0, 6.0],
                vec![7.0, 8.0]
            ]
        );
    }

    #[test]
    fn single_block_holds_everything() {
        let x = line(5);
        let t = Inputs::from_scalars(&[0.0, 9.0]).unwrap();
        let p = partition_inputs(&x, &t, 1).unwrap();
        assert_eq!(p.num_blocks(), 1);
        assert_eq!(p.train_block(0).len(), 5);
        assert_eq!(p.test_block(0), &[0, 1]);
    }

    #[test]
    fn too_many_blocks() {
        assert!(partition_inputs(&line(3), &Inputs::empty(1), 4).is_err());
        assert!(partition_inputs(&line(3), &Inputs::empty(1), 0).is_err());
    }

    #[test]
    fn gaussian_cloud_even_and_ordered() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let rows: Vec<Vec<f64>> = (0..203)
            .map(|_| {
                let a: f64 = rng.sample(StandardNormal);
                let b: f64 = rng.sample(StandardNormal);
                vec![3.0 * a, b]
            })
            .collect();
        let x = Inputs::from_rows(&rows).unwrap();
        let p = partition_inputs(&x, &Inputs::empty(2), 8).unwrap();
        let sizes: Vec<usize> = p.train_blocks().iter().map(Vec::len).collect();
        assert!(sizes.iter().all(|&s| s == 25 || s == 26), "{sizes:?}");

        let mut all = p.train_order();
        all.sort_unstable();
        assert_eq!(all, (0..203).collect::<Vec<_>>());

        let c = p.centroids();
        let mut max_pair: f64 = 0.0;
        for a in c {
            for b in c {
                max_pair = max_pair.max(sq_dist(a, b).sqrt());
            }
        }
        for w in c.windows(2) {
            assert!(sq_dist(&w[0], &w[1]).sqrt() <= max_pair);
        }
        // blocks follow the dominant first coordinate
        assert!(c.windows(2).all(|w| w[0][0] < w[1][0]));
    }

    #[test]
    fn test_points_go_to_nearest_centroid() {
        let x = line(8);
        let t = Inputs::from_scalars(&[0.0, 4.4, 100.0, 4.5]).unwrap();
        let p = partition_inputs(&x, &t, 4).unwrap();
        // centroids 1.5, 3.5, 5.5, 7.5; 4.5 is a tie between blocks 1 and 2
        assert_eq!(p.test_block(0), &[0]);
        assert_eq!(p.test_block(1), &[1, 3]);
        assert!(p.test_block(2).is_empty());
        assert_eq!(p.test_block(3), &[2]);
    }

    #[test]
    fn band_ranges() {
        let p = partition_inputs(&line(8), &Inputs::empty(1), 4).unwrap();
        assert_eq!(p.band(0, 1), 1..2);
        assert_eq!(p.band(1, 2), 2..4);
        assert_eq!(p.band(3, 1), 4..4);
        assert_eq!(p.band(2, 0), 3..3);
        assert_eq!(p.band(2, 5), 3..4);
    }

    #[test]
    fn explicit_blocks_are_validated() {
        let x = line(4);
        assert!(BlockPartition::from_blocks(
            &x,
            vec![vec![0, 1], vec![2, 2]],
            0,
            vec![vec![], vec![]]
        )
        .is_err());
        assert!(BlockPartition::from_blocks(
            &x,
            vec![vec![0, 1], vec![2]],
            0,
            vec![vec![], vec![]]
        )
        .is_err());
        assert!(BlockPartition::from_blocks(
            &x,
            vec![vec![0, 1], vec![2, 3]],
            1,
            vec![vec![0], vec![]]
        )
        .is_ok());
    }

    #[test]
    fn support_edge_sizes() {
        let x = line(10);
        assert_eq!(
            select_support(&x, 10, 3).unwrap().indices,
            (0..10).collect::<Vec<_>>()
        );
        assert_eq!(select_support(&x, 1, 3).unwrap().len(), 1);
        assert!(select_support(&x, 0, 3).is_err());
        assert!(select_support(&x, 11, 3).is_err());
    }

    #[test]
    fn support_is_seeded() {
        let x = line(100);
        let a = select_support(&x, 10, 42).unwrap();
        let b = select_support(&x, 10, 42).unwrap();
        let c = select_support(&x, 10, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.indices, c.indices);
        let mut d = a.indices.clone();
        d.dedup();
        assert_eq!(d.len(), 10);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn partitions_cover_evenly(xs in proptest::collection::vec(-10.0f64..10.0, 1..60),
                                       m in 1usize..8) {
                prop_assume!(m <= xs.len());
                let x = Inputs::from_scalars(&xs).unwrap();
                let p = partition_inputs(&x, &Inputs::empty(1), m).unwrap();
                let q = partition_inputs(&x, &Inputs::empty(1), m).unwrap();
                prop_assert_eq!(&p, &q);
                let sizes: Vec<usize> = p.train_blocks().iter().map(Vec::len).collect();
                let max = *sizes.iter().max().unwrap();
                let min = *sizes.iter().min().unwrap();
                prop_assert!(max - min <= 1);
                let mut all = p.train_order();
                all.sort_unstable();
                prop_assert_eq!(all, (0..xs.len()).collect::<Vec<_>>());
            }
        }
    }
}
