//! Partially observed matrices, dense weight fields and same-column index
//! groups.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::Real;

/// Position of one matrix entry; rows and columns are 0-based internally
/// (1-based only at I/O boundaries).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MatrixIndex {
    pub row: usize,
    pub col: usize,
}

impl MatrixIndex {
    pub const fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }
}

/// A matrix of which only some entries are observed, stored as an index map.
///
/// Iteration over `entries` is in ascending `(row, col)` order, which keeps
/// every seeded sampling routine reproducible.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialMatrix {
    n_rows: usize,
    n_cols: usize,
    entries: BTreeMap<MatrixIndex, Real>,
}

impl PartialMatrix {
    /// Builds a partial matrix, rejecting out-of-range or duplicate indices.
    pub fn from_entries(
        n_rows: usize,
        n_cols: usize,
        entries: impl IntoIterator<Item = (MatrixIndex, Real)>,
    ) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (idx, value) in entries {
            if idx.row >= n_rows || idx.col >= n_cols {
                return Err(Error::Data(format!(
                    "index ({}, {}) out of range for a {}x{} matrix",
                    idx.row, idx.col, n_rows, n_cols
                )));
            }
            if map.insert(idx, value).is_some() {
                return Err(Error::Data(format!(
                    "duplicate entry at ({}, {})",
                    idx.row, idx.col
                )));
            }
        }
        Ok(Self { n_rows, n_cols, entries: map })
    }

    pub fn empty(n_rows: usize, n_cols: usize) -> Self {
        Self { n_rows, n_cols, entries: BTreeMap::new() }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    /// Number of observed entries.
    pub fn observed_count(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, idx: MatrixIndex) -> Option<Real> {
        self.entries.get(&idx).copied()
    }

    pub fn contains(&self, idx: MatrixIndex) -> bool {
        self.entries.contains_key(&idx)
    }

    pub fn iter(&self) -> impl Iterator<Item = (MatrixIndex, Real)> + '_ {
        self.entries.iter().map(|(&i, &v)| (i, v))
    }

    /// Observed indices in ascending order.
    pub fn observed_indices(&self) -> Vec<MatrixIndex> {
        self.entries.keys().copied().collect()
    }

    /// Complement of the observed set, in ascending order.
    pub fn missing_indices(&self) -> Vec<MatrixIndex> {
        let mut out = Vec::with_capacity(self.n_rows * self.n_cols - self.entries.len());
        for row in 0..self.n_rows {
            for col in 0..self.n_cols {
                let idx = MatrixIndex::new(row, col);
                if !self.entries.contains_key(&idx) {
                    out.push(idx);
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// Observed count per column.
    pub fn column_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.n_cols];
        for idx in self.entries.keys() {
            counts[idx.col] += 1;
        }
        counts
    }

    /// The sub-matrix restricted to `keep`; indices absent from `self` error.
    pub fn restrict(&self, keep: &[MatrixIndex]) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for &idx in keep {
            let value = self
                .get(idx)
                .ok_or_else(|| Error::Data(format!("({}, {}) is not observed", idx.row, idx.col)))?;
            entries.insert(idx, value);
        }
        Ok(Self { n_rows: self.n_rows, n_cols: self.n_cols, entries })
    }

    /// The sub-matrix with the entries of `drop` removed.
    pub fn without(&self, drop: &[MatrixIndex]) -> Self {
        let mut entries = self.entries.clone();
        for idx in drop {
            entries.remove(idx);
        }
        Self { n_rows: self.n_rows, n_cols: self.n_cols, entries }
    }
}

/// Dense per-entry sampling weights over the full grid, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightField {
    n_rows: usize,
    n_cols: usize,
    values: Vec<Real>,
}

impl WeightField {
    pub fn new(n_rows: usize, n_cols: usize, values: Vec<Real>) -> Result<Self> {
        if values.len() != n_rows * n_cols {
            return Err(Error::Data(format!(
                "weight grid has {} values, expected {}",
                values.len(),
                n_rows * n_cols
            )));
        }
        Ok(Self { n_rows, n_cols, values })
    }

    pub fn uniform(n_rows: usize, n_cols: usize) -> Self {
        Self { n_rows, n_cols, values: vec![1.0; n_rows * n_cols] }
    }

    pub fn from_fn(n_rows: usize, n_cols: usize, mut f: impl FnMut(usize, usize) -> Real) -> Self {
        let mut values = Vec::with_capacity(n_rows * n_cols);
        for row in 0..n_rows {
            for col in 0..n_cols {
                values.push(f(row, col));
            }
        }
        Self { n_rows, n_cols, values }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    #[inline]
    pub fn get(&self, idx: MatrixIndex) -> Real {
        self.values[idx.row * self.n_cols + idx.col]
    }

    pub fn set(&mut self, idx: MatrixIndex, value: Real) {
        self.values[idx.row * self.n_cols + idx.col] = value;
    }

    pub fn values(&self) -> &[Real] {
        &self.values
    }

    /// Checks the sampling-field contract: strictly positive and finite on
    /// each of `indices`.
    pub fn require_positive(&self, indices: &[MatrixIndex]) -> Result<()> {
        for &idx in indices {
            let w = self.get(idx);
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::Weight {
                    row: idx.row,
                    col: idx.col,
                    value: w,
                    reason: "sampling weights must be strictly positive",
                });
            }
        }
        Ok(())
    }

    /// Checks the test-field contract: nonnegative and finite everywhere.
    pub fn require_nonnegative(&self) -> Result<()> {
        for (flat, &w) in self.values.iter().enumerate() {
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::Weight {
                    row: flat / self.n_cols,
                    col: flat % self.n_cols,
                    value: w,
                    reason: "test weights must be nonnegative",
                });
            }
        }
        Ok(())
    }
}

/// An ordered group of `K` distinct entries sharing one column. Draw order is
/// preserved: the weight formulas treat position 1 specially.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct IndexGroup {
    indices: Vec<MatrixIndex>,
}

impl IndexGroup {
    pub fn new(indices: Vec<MatrixIndex>) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::Data("index group cannot be empty".into()));
        }
        let col = indices[0].col;
        for (i, idx) in indices.iter().enumerate() {
            if idx.col != col {
                return Err(Error::Data(format!(
                    "group mixes columns {} and {}",
                    col, idx.col
                )));
            }
            if indices[..i].contains(idx) {
                return Err(Error::Data(format!(
                    "duplicate index ({}, {}) in group",
                    idx.row, idx.col
                )));
            }
        }
        Ok(Self { indices })
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// The shared column of the group.
    pub fn column(&self) -> usize {
        self.indices[0].col
    }

    pub fn indices(&self) -> &[MatrixIndex] {
        &self.indices
    }

    pub fn iter(&self) -> impl Iterator<Item = MatrixIndex> + '_ {
        self.indices.iter().copied()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_range_and_duplicates() {
        let err = PartialMatrix::from_entries(2, 2, [(MatrixIndex::new(2, 0), 1.0)]);
        assert!(matches!(err, Err(Error::Data(_))));
        let err = PartialMatrix::from_entries(
            2,
            2,
            [(MatrixIndex::new(0, 0), 1.0), (MatrixIndex::new(0, 0), 2.0)],
        );
        assert!(matches!(err, Err(Error::Data(_))));
    }

    #[test]
    fn missing_is_the_complement() {
        let m = PartialMatrix::from_entries(
            2,
            2,
            [(MatrixIndex::new(0, 1), 1.0), (MatrixIndex::new(1, 0), 2.0)],
        )
        .unwrap();
        assert_eq!(
            m.missing_indices(),
            vec![MatrixIndex::new(0, 0), MatrixIndex::new(1, 1)]
        );
        assert_eq!(m.column_counts(), vec![1, 1]);
    }

    #[test]
    fn group_must_share_a_column() {
        let err = IndexGroup::new(vec![MatrixIndex::new(0, 0), MatrixIndex::new(1, 1)]);
        assert!(err.is_err());
        let ok = IndexGroup::new(vec![MatrixIndex::new(0, 1), MatrixIndex::new(2, 1)]).unwrap();
        assert_eq!(ok.column(), 1);
    }

    #[test]
    fn weight_field_contracts() {
        let mut w = WeightField::uniform(2, 2);
        w.set(MatrixIndex::new(0, 1), 0.0);
        assert!(w.require_nonnegative().is_ok());
        assert!(w.require_positive(&[MatrixIndex::new(0, 1)]).is_err());
        assert!(w.require_positive(&[MatrixIndex::new(1, 1)]).is_ok());
    }
}
