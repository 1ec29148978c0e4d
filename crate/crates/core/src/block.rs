//! Block-structured vectors and matrices.
//!
//! Signals of length `n = L * d` are read as `L` consecutive blocks of `d`
//! entries; a sensing matrix shares the same blocking on its columns. Block
//! indices are 0-based in the Rust API and 1-based in every serialized form.

use std::cmp::Ordering;
use std::fmt;

use nalgebra::{DMatrix, DMatrixView, DVector, DVectorView};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::tol;

/// The block grid: `blocks` blocks of `block_size` entries each.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BlockShape {
    blocks: usize,
    block_size: usize,
}

impl BlockShape {
    pub fn new(blocks: usize, block_size: usize) -> Result<Self> {
        if blocks == 0 || block_size == 0 {
            return Err(Error::invalid(format!(
                "block shape needs L >= 1 and d >= 1, got L = {blocks}, d = {block_size}"
            )));
        }
        blocks
            .checked_mul(block_size)
            .ok_or_else(|| Error::invalid("L * d overflows"))?;
        Ok(Self { blocks, block_size })
    }

    /// Number of blocks `L`.
    pub fn blocks(&self) -> usize {
        self.blocks
    }

    /// Block size `d`.
    pub fn block_size(&self) -> usize {
        self.block_size
    }

    /// Ambient length `n = L * d`.
    pub fn len(&self) -> usize {
        self.blocks * self.block_size
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Scalar index range covered by block `i`.
    pub fn range(&self, i: usize) -> std::ops::Range<usize> {
        i * self.block_size..(i + 1) * self.block_size
    }
}

/// Strictly ascending set of block indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct BlockSupport {
    indices: Vec<usize>,
}

impl BlockSupport {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Builds a support from arbitrary-order, 0-based indices. Duplicates and
    /// indices `>= blocks` are rejected.
    pub fn new(mut indices: Vec<usize>, blocks: usize) -> Result<Self> {
        indices.sort_unstable();
        if let Some(w) = indices.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::invalid(format!("duplicate block index {}", w[0] + 1)));
        }
        if let Some(&i) = indices.last() {
            if i >= blocks {
                return Err(Error::invalid(format!(
                    "block index {} out of range 1..={blocks}",
                    i + 1
                )));
            }
        }
        Ok(Self { indices })
    }

    /// Builds a support from 1-based indices as they appear in user input.
    pub fn from_one_based(indices: &[usize], blocks: usize) -> Result<Self> {
        if indices.contains(&0) {
            return Err(Error::invalid("block indices are 1-based"));
        }
        Self::new(indices.iter().map(|i| i - 1).collect(), blocks)
    }

    /// Every block `0..blocks`.
    pub fn full(blocks: usize) -> Self {
        Self {
            indices: (0..blocks).collect(),
        }
    }

    pub(crate) fn from_sorted_unchecked(indices: Vec<usize>) -> Self {
        debug_assert!(indices.windows(2).all(|w| w[0] < w[1]));
        Self { indices }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn one_based(&self) -> Vec<usize> {
        self.indices.iter().map(|i| i + 1).collect()
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.indices.binary_search(&i).is_ok()
    }

    pub fn is_subset_of(&self, other: &BlockSupport) -> bool {
        self.indices.iter().all(|&i| other.contains(i))
    }

    pub fn union(&self, other: &BlockSupport) -> BlockSupport {
        let mut v: Vec<usize> = self.indices.iter().chain(&other.indices).copied().collect();
        v.sort_unstable();
        v.dedup();
        BlockSupport { indices: v }
    }

    /// `self \ other`.
    pub fn difference(&self, other: &BlockSupport) -> BlockSupport {
        BlockSupport {
            indices: self
                .indices
                .iter()
                .copied()
                .filter(|&i| !other.contains(i))
                .collect(),
        }
    }

    /// Blocks of `0..blocks` not in `self`.
    pub fn complement(&self, blocks: usize) -> BlockSupport {
        BlockSupport {
            indices: (0..blocks).filter(|&i| !self.contains(i)).collect(),
        }
    }

    /// Scalar column/entry indices spanned by the support under `shape`.
    pub fn scalar_indices(&self, shape: BlockShape) -> Vec<usize> {
        self.indices.iter().flat_map(|&i| shape.range(i)).collect()
    }
}

impl fmt::Display for BlockSupport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (k, i) in self.indices.iter().enumerate() {
            if k > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{}", i + 1)?;
        }
        write!(f, "}}")
    }
}

impl Serialize for BlockSupport {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.one_based().serialize(s)
    }
}

impl<'de> Deserialize<'de> for BlockSupport {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = Vec::<usize>::deserialize(d)?;
        if raw.contains(&0) {
            return Err(serde::de::Error::custom("block indices are 1-based"));
        }
        let max = raw.iter().copied().max().unwrap_or(0);
        BlockSupport::from_one_based(&raw, max).map_err(serde::de::Error::custom)
    }
}

/// Which mixed norm to take over the vector of block norms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MixedNorm {
    L1,
    L2,
    Inf,
}

/// A length-`n` real vector read through a [`BlockShape`].
#[derive(Debug, Clone, PartialEq)]
pub struct BlockVector {
    shape: BlockShape,
    values: DVector<f64>,
}

impl BlockVector {
    pub fn new(shape: BlockShape, values: DVector<f64>) -> Result<Self> {
        if values.len() != shape.len() {
            return Err(Error::invalid(format!(
                "vector has length {}, block shape needs {}",
                values.len(),
                shape.len()
            )));
        }
        Ok(Self { shape, values })
    }

    pub fn from_slice(shape: BlockShape, values: &[f64]) -> Result<Self> {
        Self::new(shape, DVector::from_column_slice(values))
    }

    pub fn zeros(shape: BlockShape) -> Self {
        Self {
            shape,
            values: DVector::zeros(shape.len()),
        }
    }

    pub fn shape(&self) -> BlockShape {
        self.shape
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            shape: self.shape,
            values: &self.values * c,
        }
    }

    pub fn into_values(self) -> DVector<f64> {
        self.values
    }

    pub fn block(&self, i: usize) -> DVectorView<'_, f64> {
        self.values.rows(i * self.shape.block_size, self.shape.block_size)
    }

    pub fn block_norm(&self, i: usize) -> f64 {
        self.block(i).norm()
    }

    /// `w_l = ||x[l]||_2` for every block.
    pub fn block_norms(&self) -> Vec<f64> {
        (0..self.shape.blocks).map(|i| self.block_norm(i)).collect()
    }

    /// Stacks the blocks of `support`, in ascending order.
    pub fn restrict(&self, support: &BlockSupport) -> DVector<f64> {
        let idx = support.scalar_indices(self.shape);
        DVector::from_iterator(idx.len(), idx.iter().map(|&j| self.values[j]))
    }

    /// Inverse of [`restrict`](Self::restrict): places `coefficients` on
    /// `support` and zeros elsewhere.
    pub fn embed(shape: BlockShape, support: &BlockSupport, coefficients: &DVector<f64>) -> Result<Self> {
        let idx = support.scalar_indices(shape);
        if idx.len() != coefficients.len() {
            return Err(Error::invalid(format!(
                "{} coefficients for a support of {} entries",
                coefficients.len(),
                idx.len()
            )));
        }
        let mut values = DVector::zeros(shape.len());
        for (c, &j) in coefficients.iter().zip(&idx) {
            values[j] = *c;
        }
        Ok(Self { shape, values })
    }
}

/// `||x||_{2,p}`: the `p`-norm of the block-norm vector.
pub fn block_l2p_norm(x: &BlockVector, p: MixedNorm) -> f64 {
    let w = x.block_norms();
    match p {
        MixedNorm::L1 => w.iter().sum(),
        MixedNorm::L2 => x.values.norm(),
        MixedNorm::Inf => w.iter().copied().fold(0.0, f64::max),
    }
}

/// Blocks whose Euclidean norm exceeds `tol`, ascending.
pub fn block_support(x: &BlockVector, tol: f64) -> BlockSupport {
    BlockSupport::from_sorted_unchecked(
        (0..x.shape.blocks)
            .filter(|&i| x.block_norm(i) > tol)
            .collect(),
    )
}

/// Nonzero block norms sorted in decreasing order together with the ratios
/// between consecutive entries.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayProfile {
    /// Block index of each sorted entry.
    pub order: Vec<usize>,
    pub norms: Vec<f64>,
    /// `norms[j] / norms[j + 1]`; one shorter than `norms`.
    pub ratios: Vec<f64>,
}

impl DecayProfile {
    pub fn min_ratio(&self) -> Option<f64> {
        self.ratios.iter().copied().reduce(f64::min)
    }

    /// Every consecutive ratio is at least `alpha`. A single nonzero block is
    /// decaying for every `alpha`.
    pub fn is_alpha_decaying(&self, alpha: f64) -> bool {
        self.ratios
            .iter()
            .all(|&r| r >= alpha * (1.0 - tol::DECAY_RATIO_TOL))
    }

    pub fn sparsity(&self) -> usize {
        self.norms.len()
    }
}

/// Sorts blocks by norm (descending, ties by index) and reports consecutive
/// ratios over the nonzero ones.
pub fn decay_profile(x: &BlockVector) -> Result<DecayProfile> {
    let norms = x.block_norms();
    let mut order: Vec<usize> = (0..norms.len())
        .filter(|&i| norms[i] > tol::SUPPORT_TOL)
        .collect();
    if order.is_empty() {
        return Err(Error::EmptySupport);
    }
    order.sort_by(|&a, &b| {
        norms[b]
            .partial_cmp(&norms[a])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    let sorted: Vec<f64> = order.iter().map(|&i| norms[i]).collect();
    let ratios = sorted.windows(2).map(|w| w[0] / w[1]).collect();
    Ok(DecayProfile {
        order,
        norms: sorted,
        ratios,
    })
}

/// An `m x n` real matrix whose columns are blocked by a [`BlockShape`].
#[derive(Debug, Clone, PartialEq)]
pub struct SensingMatrix {
    shape: BlockShape,
    entries: DMatrix<f64>,
}

impl SensingMatrix {
    pub fn new(shape: BlockShape, entries: DMatrix<f64>) -> Result<Self> {
        if entries.nrows() == 0 {
            return Err(Error::invalid("sensing matrix needs at least one row"));
        }
        if entries.ncols() != shape.len() {
            return Err(Error::invalid(format!(
                "matrix has {} columns, block shape needs {}",
                entries.ncols(),
                shape.len()
            )));
        }
        Ok(Self { shape, entries })
    }

    pub fn from_row_major(shape: BlockShape, rows: usize, data: &[f64]) -> Result<Self> {
        if rows == 0 || data.len() != rows * shape.len() {
            return Err(Error::invalid(format!(
                "expected {} x {} = {} entries, got {}",
                rows,
                shape.len(),
                rows * shape.len(),
                data.len()
            )));
        }
        Self::new(shape, DMatrix::from_row_slice(rows, shape.len(), data))
    }

    pub fn shape(&self) -> BlockShape {
        self.shape
    }

    pub fn rows(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn to_row_major(&self) -> Vec<f64> {
        let (m, n) = self.entries.shape();
        let mut out = Vec::with_capacity(m * n);
        for r in 0..m {
            out.extend(self.entries.row(r).iter());
        }
        out
    }

    /// Columns of block `i`.
    pub fn block(&self, i: usize) -> DMatrixView<'_, f64> {
        let d = self.shape.block_size;
        self.entries.columns(i * d, d)
    }

    /// `A[S]`: the column blocks of `support`, ascending.
    pub fn submatrix(&self, support: &BlockSupport) -> DMatrix<f64> {
        let cols = support.scalar_indices(self.shape);
        self.entries.select_columns(cols.iter())
    }

    /// `A x` for a block vector on the same shape.
    pub fn apply(&self, x: &BlockVector) -> Result<DVector<f64>> {
        if x.shape() != self.shape {
            return Err(Error::invalid("vector and matrix use different block shapes"));
        }
        Ok(&self.entries * x.values())
    }

    /// `||A[i]^T r||_2` for each block `i`.
    pub fn block_correlations(&self, r: &DVector<f64>) -> Vec<f64> {
        let c = self.entries.tr_mul(r);
        let d = self.shape.block_size;
        (0..self.shape.blocks)
            .map(|i| c.rows(i * d, d).norm())
            .collect()
    }
}

/// Largest normalized inner product between two distinct scalar columns.
/// Blocking is ignored.
pub fn mutual_coherence(a: &SensingMatrix) -> Result<f64> {
    let m = a.entries();
    let norms: Vec<f64> = m.column_iter().map(|c| c.norm()).collect();
    if let Some(j) = norms.iter().position(|&v| v == 0.0) {
        return Err(Error::ZeroColumn(j));
    }
    let gram = m.tr_mul(m);
    let n = norms.len();
    let mut best = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            best = best.max(gram[(i, j)].abs() / (norms[i] * norms[j]));
        }
    }
    Ok(best.min(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn shape(l: usize, d: usize) -> BlockShape {
        BlockShape::new(l, d).unwrap()
    }

    #[test]
    fn shape_rejects_zero() {
        assert!(BlockShape::new(0, 2).is_err());
        assert!(BlockShape::new(3, 0).is_err());
        assert_eq!(shape(3, 2).len(), 6);
    }

    #[test]
    fn mixed_norms() {
        let x = BlockVector::from_slice(shape(2, 2), &[3.0, 4.0, 0.0, 0.0]).unwrap();
        assert_eq!(block_l2p_norm(&x, MixedNorm::L1), 5.0);
        let x = BlockVector::from_slice(shape(3, 2), &[1.0, 0.0, 0.0, 1.0, 2.0, 0.0]).unwrap();
        assert_eq!(block_l2p_norm(&x, MixedNorm::Inf), 2.0);
        assert_relative_eq!(block_l2p_norm(&x, MixedNorm::L2), 6f64.sqrt());
    }

    #[test]
    fn supports() {
        let x = BlockVector::from_slice(shape(3, 2), &[1.0, 1.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(block_support(&x, 0.0).one_based(), vec![1]);
        assert!(block_support(&BlockVector::zeros(shape(3, 2)), 0.0).is_empty());
        let x = BlockVector::from_slice(shape(2, 2), &[1e-12, 0.0, 5.0, 0.0]).unwrap();
        assert_eq!(block_support(&x, 1e-9).one_based(), vec![2]);
    }

    #[test]
    fn support_validation_and_display() {
        assert!(BlockSupport::new(vec![1, 1], 3).is_err());
        assert!(BlockSupport::new(vec![3], 3).is_err());
        assert!(BlockSupport::from_one_based(&[0], 3).is_err());
        let s = BlockSupport::new(vec![2, 0], 3).unwrap();
        assert_eq!(s.to_string(), "{1, 3}");
        assert_eq!(serde_json::to_string(&s).unwrap(), "[1,3]");
        assert_eq!(s.complement(4).indices(), &[1, 3]);
    }

    #[test]
    fn decay_profiles() {
        let x = BlockVector::from_slice(shape(3, 1), &[2.0, 8.0, 4.0]).unwrap();
        let p = decay_profile(&x).unwrap();
        assert_eq!(p.order, vec![1, 2, 0]);
        assert_eq!(p.ratios, vec![2.0, 2.0]);
        assert!(p.is_alpha_decaying(2.0));
        assert!(!p.is_alpha_decaying(2.1));

        let x = BlockVector::from_slice(shape(2, 1), &[5.0, 5.0]).unwrap();
        let p = decay_profile(&x).unwrap();
        assert_eq!(p.ratios, vec![1.0]);
        assert!(p.is_alpha_decaying(1.0));
        assert!(!p.is_alpha_decaying(1.0001));

        let x = BlockVector::from_slice(shape(2, 1), &[9.0, 3.0]).unwrap();
        assert!(decay_profile(&x).unwrap().is_alpha_decaying(3.0));

        assert!(matches!(
            decay_profile(&BlockVector::zeros(shape(2, 2))),
            Err(Error::EmptySupport)
        ));
    }

    #[test]
    fn coherence() {
        let id = SensingMatrix::new(shape(3, 1), DMatrix::identity(3, 3)).unwrap();
        assert_eq!(mutual_coherence(&id).unwrap(), 0.0);

        let dup = SensingMatrix::from_row_major(shape(2, 1), 2, &[1.0, 1.0, 2.0, 2.0]).unwrap();
        assert_relative_eq!(mutual_coherence(&dup).unwrap(), 1.0);

        // columns (1,0) and (1,1)
        let a = SensingMatrix::from_row_major(shape(2, 1), 2, &[1.0, 1.0, 0.0, 1.0]).unwrap();
        assert_relative_eq!(mutual_coherence(&a).unwrap(), 1.0 / 2f64.sqrt(), epsilon = 1e-15);

        let z = SensingMatrix::from_row_major(shape(2, 1), 2, &[1.0, 0.0, 0.0, 0.0]).unwrap();
        assert!(matches!(mutual_coherence(&z), Err(Error::ZeroColumn(1))));
    }

    #[test]
    fn restrict_and_embed_are_inverse() {
        let sh = shape(3, 2);
        let x = BlockVector::from_slice(sh, &[1.0, 2.0, 0.0, 0.0, 5.0, 6.0]).unwrap();
        let s = block_support(&x, 0.0);
        let z = x.restrict(&s);
        assert_eq!(z.as_slice(), &[1.0, 2.0, 5.0, 6.0]);
        assert_eq!(BlockVector::embed(sh, &s, &z).unwrap(), x);
    }
}
