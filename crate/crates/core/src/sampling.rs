//! Weighted sampling without replacement and its law.
//!
//! An ordered draw of `m` items from a finite universe has probability equal
//! to the telescoping product of each item's weight over the total weight
//! still in the urn; weights need not be normalized. The column-constrained
//! variant draws a first entry anywhere and the remaining `K - 1` from the
//! same column, after omitting columns with fewer than `K` missing entries.

use rand::Rng;

use crate::error::{Error, Result};
use crate::matrix::{IndexGroup, MatrixIndex, WeightField};
use crate::Real;

/// Fenwick tree over nonnegative weights supporting prefix-sum search, used
/// to draw from a shrinking urn in `O(log n)` per draw.
#[derive(Debug, Clone)]
pub(crate) struct WeightedUrn {
    tree: Vec<Real>,
    weights: Vec<Real>,
}

impl WeightedUrn {
    pub fn new(weights: &[Real]) -> Self {
        let n = weights.len();
        let mut tree = vec![0.0; n + 1];
        for (i, &w) in weights.iter().enumerate() {
            let mut j = i + 1;
            while j <= n {
                tree[j] += w;
                j += j & j.wrapping_neg();
            }
        }
        Self { tree, weights: weights.to_vec() }
    }

    pub fn total(&self) -> Real {
        self.prefix(self.weights.len())
    }

    fn prefix(&self, mut i: usize) -> Real {
        let mut acc = 0.0;
        while i > 0 {
            acc += self.tree[i];
            i -= i & i.wrapping_neg();
        }
        acc
    }

    fn add(&mut self, i: usize, delta: Real) {
        self.weights[i] += delta;
        let n = self.weights.len();
        let mut j = i + 1;
        while j <= n {
            self.tree[j] += delta;
            j += j & j.wrapping_neg();
        }
    }

    /// Index of the first item whose cumulative weight exceeds `target`.
    fn search(&self, mut target: Real) -> usize {
        let n = self.weights.len();
        let mut pos = 0usize;
        let mut step = n.next_power_of_two();
        while step > 0 {
            let next = pos + step;
            if next <= n && self.tree[next] <= target {
                target -= self.tree[next];
                pos = next;
            }
            step >>= 1;
        }
        // pos is now the count of items with cumulative weight <= target.
        pos.min(n - 1)
    }

    /// Draws an item with probability proportional to its remaining weight
    /// and removes it from the urn.
    pub fn draw(&mut self, rng: &mut impl Rng) -> usize {
        let total = self.total();
        debug_assert!(total > 0.0);
        let mut idx = self.search(rng.random::<Real>() * total);
        // Rounding can land on an exhausted slot; move to the next live one.
        while self.weights[idx] <= 0.0 {
            idx = (idx + 1) % self.weights.len();
        }
        let w = self.weights[idx];
        self.add(idx, -w);
        idx
    }
}

/// Draws `m` distinct indices from `universe`, each draw proportional to its
/// weight among the remaining items.
pub fn sample_without_replacement(
    universe: &[MatrixIndex],
    m: usize,
    weights: &WeightField,
    rng: &mut impl Rng,
) -> Result<Vec<MatrixIndex>> {
    if m > universe.len() {
        return Err(Error::SampleSize { requested: m, available: universe.len() });
    }
    weights.require_positive(universe)?;
    let mut urn = WeightedUrn::new(&universe.iter().map(|&i| weights.get(i)).collect::<Vec<_>>());
    let mut out = Vec::with_capacity(m);
    for _ in 0..m {
        out.push(universe[urn.draw(rng)]);
    }
    Ok(out)
}

/// Uniform without-replacement draw of `m` indices (partial Fisher-Yates).
pub fn sample_uniform(
    universe: &[MatrixIndex],
    m: usize,
    rng: &mut impl Rng,
) -> Result<Vec<MatrixIndex>> {
    if m > universe.len() {
        return Err(Error::SampleSize { requested: m, available: universe.len() });
    }
    let mut pool = universe.to_vec();
    let mut out = Vec::with_capacity(m);
    for _ in 0..m {
        let j = rng.random_range(0..pool.len());
        out.push(pool.swap_remove(j));
    }
    Ok(out)
}

/// Missing entries restricted to columns holding at least `k` missing
/// entries, so that a same-column group of size `k` is always completable.
pub fn pruned_missing_set(missing: &[MatrixIndex], n_cols: usize, k: usize) -> Vec<MatrixIndex> {
    let mut counts = vec![0usize; n_cols];
    for idx in missing {
        counts[idx.col] += 1;
    }
    missing
        .iter()
        .copied()
        .filter(|idx| counts[idx.col] >= k)
        .collect()
}

/// Draws a same-column group of `k` missing entries: the first entry from the
/// pruned missing set by `test_weights`, the rest sequentially from the
/// chosen column. Zero-weight entries can never be drawn, so eligibility
/// counts only entries carrying positive mass; with strictly positive test
/// weights this is exactly the count-based pruning rule.
pub fn sample_column_group(
    missing: &[MatrixIndex],
    n_cols: usize,
    k: usize,
    test_weights: &WeightField,
    rng: &mut impl Rng,
) -> Result<IndexGroup> {
    test_weights.require_nonnegative()?;
    let supported: Vec<MatrixIndex> = missing
        .iter()
        .copied()
        .filter(|&i| test_weights.get(i) > 0.0)
        .collect();
    let eligible = pruned_missing_set(&supported, n_cols, k);
    let total: Real = eligible.iter().map(|&i| test_weights.get(i)).sum();
    if eligible.is_empty() || total <= 0.0 {
        return Err(Error::Infeasible(format!(
            "no column has {k} missing entries with positive test weight"
        )));
    }

    let mut urn = WeightedUrn::new(&eligible.iter().map(|&i| test_weights.get(i)).collect::<Vec<_>>());
    let first = eligible[urn.draw(rng)];

    // Remaining draws are confined to the first entry's column.
    let mut column: Vec<MatrixIndex> = eligible
        .iter()
        .copied()
        .filter(|idx| idx.col == first.col && *idx != first)
        .collect();
    let mut drawn = vec![first];
    for _ in 1..k {
        let total: Real = column.iter().map(|&i| test_weights.get(i)).sum();
        if total <= 0.0 {
            return Err(Error::Infeasible(format!(
                "column {} ran out of test-weight mass",
                first.col
            )));
        }
        let mut target = rng.random::<Real>() * total;
        let mut chosen = column.len() - 1;
        for (j, &idx) in column.iter().enumerate() {
            target -= test_weights.get(idx);
            if target < 0.0 {
                chosen = j;
                break;
            }
        }
        drawn.push(column.swap_remove(chosen));
    }
    IndexGroup::new(drawn)
}

/// Log-probability of an ordered without-replacement draw under the
/// telescoping law.
pub fn ordered_draw_log_prob(
    draws: &[MatrixIndex],
    universe: &[MatrixIndex],
    weights: &WeightField,
) -> Result<Real> {
    weights.require_positive(universe)?;
    for (i, idx) in draws.iter().enumerate() {
        if !universe.contains(idx) {
            return Err(Error::Domain(format!(
                "draw ({}, {}) is outside the universe",
                idx.row, idx.col
            )));
        }
        if draws[..i].contains(idx) {
            return Err(Error::Domain(format!(
                "draw ({}, {}) repeats",
                idx.row, idx.col
            )));
        }
    }
    let mut remaining: Real = universe.iter().map(|&i| weights.get(i)).sum();
    let mut log_prob = 0.0;
    for &idx in draws {
        let w = weights.get(idx);
        log_prob += w.ln() - remaining.ln();
        remaining -= w;
    }
    Ok(log_prob)
}
