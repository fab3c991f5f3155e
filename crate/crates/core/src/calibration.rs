//! Structured calibration sets.
//!
//! The observed entries are partitioned into `n` same-column groups of size
//! `K` plus a training set. Each column is first pruned down to a multiple of
//! `K` by removing `n_obs^c mod K` entries uniformly at random; the groups
//! are then drawn sequentially, uniformly, from the remaining pool with the
//! column constraint, and everything left over joins the pruned entries in
//! the training set.

use rand::Rng;

use crate::error::{Error, Result};
use crate::matrix::{IndexGroup, MatrixIndex};
use crate::sampling::sample_uniform;

/// Output of the calibration partition.
#[derive(Debug, Clone)]
pub struct CalibrationPlan {
    /// The `n` calibration groups, in draw order.
    pub groups: Vec<IndexGroup>,
    /// Training indices: pruned entries plus the unused remainder.
    pub train: Vec<MatrixIndex>,
    /// The entries removed by per-column pruning (a subset of `train`).
    pub pruned: Vec<MatrixIndex>,
    /// Group size.
    pub k: usize,
}

impl CalibrationPlan {
    pub fn n_groups(&self) -> usize {
        self.groups.len()
    }

    /// All indices covered by calibration groups, in group-then-draw order.
    pub fn group_indices(&self) -> Vec<MatrixIndex> {
        self.groups.iter().flat_map(|g| g.iter()).collect()
    }
}

/// Largest feasible number of calibration groups: `sum_c floor(n_obs^c / K)`.
pub fn max_calibration_groups(obs: &[MatrixIndex], n_cols: usize, k: usize) -> usize {
    assert!(k >= 1, "group size must be at least 1");
    let mut counts = vec![0usize; n_cols];
    for idx in obs {
        counts[idx.col] += 1;
    }
    counts.iter().map(|c| c / k).sum()
}

/// Partitions `obs` into `n` same-column calibration groups of size `k` plus
/// a training set. Columns are visited in ascending order so the result is a
/// pure function of `(obs, n, k, rng seed)`.
pub fn assemble_calibration(
    obs: &[MatrixIndex],
    n_cols: usize,
    n: usize,
    k: usize,
    rng: &mut impl Rng,
) -> Result<CalibrationPlan> {
    let capacity = max_calibration_groups(obs, n_cols, k);
    if n > capacity {
        return Err(Error::Capacity(format!(
            "requested {n} calibration groups but only {capacity} are feasible"
        )));
    }

    // Per-column observed entries, ascending rows within ascending columns.
    let mut columns: Vec<Vec<MatrixIndex>> = vec![Vec::new(); n_cols];
    let mut sorted = obs.to_vec();
    sorted.sort_unstable();
    for idx in &sorted {
        columns[idx.col].push(*idx);
    }

    let mut pruned = Vec::new();
    for entries in columns.iter_mut() {
        let m_c = entries.len() % k;
        if m_c != 0 {
            let removed = sample_uniform(entries, m_c, rng)?;
            entries.retain(|idx| !removed.contains(idx));
            pruned.extend(removed);
        }
    }

    // Column counts are now multiples of k, so any nonempty column can host
    // a full group; the first draw is uniform over all available entries.
    let mut available: usize = columns.iter().map(|c| c.len()).sum();
    let mut groups = Vec::with_capacity(n);
    for _ in 0..n {
        debug_assert!(available >= k);
        let mut target = rng.random_range(0..available);
        let col = columns
            .iter()
            .position(|c| {
                if target < c.len() {
                    true
                } else {
                    target -= c.len();
                    false
                }
            })
            .expect("available count tracks column contents");
        let column = &mut columns[col];
        let mut members = vec![column.swap_remove(target)];
        for _ in 1..k {
            let j = rng.random_range(0..column.len());
            members.push(column.swap_remove(j));
        }
        available -= k;
        groups.push(IndexGroup::new(members)?);
    }

    let mut train = pruned.clone();
    train.extend(columns.into_iter().flatten());
    train.sort_unstable();
    pruned.sort_unstable();

    Ok(CalibrationPlan { groups, train, pruned, k })
}
