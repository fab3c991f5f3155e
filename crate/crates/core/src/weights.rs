//! Conformalization weights.
//!
//! Each calibration group is reweighted by the probability of the "swapped
//! world" in which that group trades places with the test group: the
//! observation-set probability changes by a Wallenius ratio, the test-draw
//! telescoping changes through the missing-mass denominators, and the
//! pruning/group-draw bookkeeping contributes a closed-form binomial ratio
//! whenever the two groups sit in different columns. The fast path replaces
//! the probability ratio by the peak value `eta_i(1/2; h)`; the exact mode
//! enumerates the observation orders and exists as a tiny-instance oracle.
//! All products are accumulated in log space and normalized by log-sum-exp.

use crate::calibration::CalibrationPlan;
use crate::error::{Error, Result};
use crate::math::{logsumexp, LogFactorials};
use crate::matrix::{IndexGroup, MatrixIndex, PartialMatrix, WeightField};
use crate::wallenius::{log_eta, log_set_probability, WalleniusContext};
use crate::Real;

/// Upper limit on `n_obs` for the exponential-cost exact mode.
pub const EXACT_TINY_LIMIT: usize = 10;

/// How the observation-set probability ratio is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightMode {
    /// Laplace approximation `eta_i(tau_h; h)`; linear cost.
    Fast,
    /// Exhaustive enumeration of observation orders; exponential cost,
    /// guarded to tiny instances.
    ExactTiny,
}

/// Normalized conformalization weights for `n` calibration groups plus the
/// test group in the last slot.
#[derive(Debug, Clone)]
pub struct WeightVector {
    /// `p_1, ..., p_n, p_{n+1}`; nonnegative, summing to one.
    pub p: Vec<Real>,
    /// Log of the unnormalized weights (the probability factor is expressed
    /// relative to the unswapped world, so the test slot's entry is its pure
    /// test-draw factor).
    pub log_unnormalized: Vec<Real>,
    /// Sampling-weight displacements `d_i = sum_k (w[x_i,k] - w[x_test,k])`;
    /// zero in the test slot.
    pub d: Vec<Real>,
}

impl WeightVector {
    pub fn max_weight(&self) -> Real {
        self.p.iter().cloned().fold(0.0, Real::max)
    }
}

/// Per-column bookkeeping shared by every group's swapped-world evaluation.
pub(crate) struct ColumnStats {
    obs_count: Vec<usize>,
    kept_count: Vec<usize>,
    miss_count: Vec<usize>,
    miss_mass: Vec<Real>,
    /// Total test-weight mass over columns with at least `k` missing entries.
    eligible_mass: Real,
    k: usize,
}

impl ColumnStats {
    pub(crate) fn build(obs: &PartialMatrix, w_star: &WeightField, k: usize) -> Self {
        let n_cols = obs.n_cols();
        let mut obs_count = vec![0usize; n_cols];
        for idx in obs.observed_indices() {
            obs_count[idx.col] += 1;
        }
        let mut miss_count = vec![0usize; n_cols];
        let mut miss_mass = vec![0.0; n_cols];
        for row in 0..obs.n_rows() {
            for col in 0..n_cols {
                let idx = MatrixIndex::new(row, col);
                if !obs.contains(idx) {
                    miss_count[col] += 1;
                    miss_mass[col] += w_star.get(idx);
                }
            }
        }
        let kept_count = obs_count.iter().map(|&c| c - c % k).collect();
        let eligible_mass = (0..n_cols)
            .filter(|&c| miss_count[c] >= k)
            .map(|c| miss_mass[c])
            .sum();
        Self { obs_count, kept_count, miss_count, miss_mass, eligible_mass, k }
    }

    /// Missing test-weight mass of `col` in the world where `group_col`
    /// (carrying `group_mass`) is swapped with the test group.
    fn swapped_col_mass(&self, col: usize, group_col: usize, group_mass: Real, test_col: usize, test_mass: Real) -> Real {
        let mut mass = self.miss_mass[col];
        if col == group_col {
            mass += group_mass;
        }
        if col == test_col {
            mass -= test_mass;
        }
        mass
    }

    /// Total eligible missing mass in the swapped world. Only the two
    /// affected columns can change eligibility or mass.
    fn swapped_eligible_mass(&self, group_col: usize, group_mass: Real, test_col: usize, test_mass: Real) -> Real {
        let mut total = self.eligible_mass;
        let mut adjust = |col: usize| {
            let mut count = self.miss_count[col];
            if col == group_col {
                count += self.k;
            }
            if col == test_col {
                count -= self.k;
            }
            if self.miss_count[col] >= self.k {
                total -= self.miss_mass[col];
            }
            if count >= self.k {
                total += self.swapped_col_mass(col, group_col, group_mass, test_col, test_mass);
            }
        };
        adjust(group_col);
        if test_col != group_col {
            adjust(test_col);
        }
        total
    }
}

/// Log of the sequential test-draw factor for `group` imagined as the test
/// group, in the world where it is swapped with `test`.
fn log_test_draw_factor(
    group: &IndexGroup,
    test: &IndexGroup,
    w_star: &WeightField,
    stats: &ColumnStats,
) -> Result<Real> {
    let group_col = group.column();
    let test_col = test.column();
    let group_mass: Real = group.iter().map(|i| w_star.get(i)).sum();
    let test_mass: Real = test.iter().map(|i| w_star.get(i)).sum();

    let eligible = stats.swapped_eligible_mass(group_col, group_mass, test_col, test_mass);
    if eligible <= 0.0 {
        return Err(Error::DegenerateWeights(
            "no eligible missing mass remains after the swap".into(),
        ));
    }
    let own_col = stats.swapped_col_mass(group_col, group_col, group_mass, test_col, test_mass);

    let mut log_factor = 0.0;
    let mut consumed = 0.0;
    for (j, idx) in group.iter().enumerate() {
        let w = w_star.get(idx);
        let denominator = if j == 0 { eligible } else { own_col - consumed };
        if denominator <= 0.0 {
            return Err(Error::DegenerateWeights(format!(
                "column {group_col} lacks missing test-weight mass at draw {j}"
            )));
        }
        log_factor += w.ln() - denominator.ln();
        consumed += w;
    }
    Ok(log_factor)
}

/// Log of the pruning/group-draw ratio between the swapped and original
/// worlds; identically zero when the two groups share a column.
fn log_count_ratio(
    stats: &ColumnStats,
    lf: &LogFactorials,
    group_col: usize,
    test_col: usize,
) -> Real {
    if group_col == test_col {
        return 0.0;
    }
    let k = stats.k;
    let (n_i, kept_i) = (stats.obs_count[group_col], stats.kept_count[group_col]);
    let (n_t, kept_t) = (stats.obs_count[test_col], stats.kept_count[test_col]);
    debug_assert!(n_i >= k && kept_i >= k);
    let mut acc = lf.ln_binomial(n_i, kept_i) - lf.ln_binomial(n_i - k, kept_i - k);
    acc += lf.ln_binomial(n_t, kept_t) - lf.ln_binomial(n_t + k, kept_t + k);
    for j in 1..k {
        acc += ((kept_i - j) as Real).ln() - ((kept_t + k - j) as Real).ln();
    }
    acc
}

/// Conformalization weights for the calibration groups of `plan` against
/// `test_group`, under sampling weights `w` and test weights `w_star`.
pub fn conformalization_weights(
    plan: &CalibrationPlan,
    test_group: &IndexGroup,
    obs: &PartialMatrix,
    w: &WeightField,
    w_star: &WeightField,
    ctx: &WalleniusContext,
    mode: WeightMode,
) -> Result<WeightVector> {
    let stats = ColumnStats::build(obs, w_star, plan.k);
    conformalization_weights_cached(plan, test_group, obs, w, w_star, ctx, &stats, mode)
}

/// Weight evaluation against precomputed column bookkeeping, allowing the
/// grid scan to be shared across many test groups.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conformalization_weights_cached(
    plan: &CalibrationPlan,
    test_group: &IndexGroup,
    obs: &PartialMatrix,
    w: &WeightField,
    w_star: &WeightField,
    ctx: &WalleniusContext,
    stats: &ColumnStats,
    mode: WeightMode,
) -> Result<WeightVector> {
    if test_group.len() != plan.k {
        return Err(Error::Domain(format!(
            "test group size {} differs from plan group size {}",
            test_group.len(),
            plan.k
        )));
    }
    for idx in test_group.iter() {
        if obs.contains(idx) {
            return Err(Error::Domain(format!(
                "test index ({}, {}) is observed",
                idx.row, idx.col
            )));
        }
    }
    w_star.require_nonnegative()?;
    if mode == WeightMode::ExactTiny && obs.observed_count() > EXACT_TINY_LIMIT {
        return Err(Error::Capacity(format!(
            "exact weights limited to {EXACT_TINY_LIMIT} observed entries, got {}",
            obs.observed_count()
        )));
    }

    let test_w: Vec<Real> = test_group.iter().map(|i| w.get(i)).collect();
    let test_col = test_group.column();
    if stats.miss_count[test_col] < plan.k {
        return Err(Error::Domain(format!(
            "test column {test_col} has fewer than {} missing entries",
            plan.k
        )));
    }

    // Exact mode shares the grid total and base-set probability.
    let exact_base = if mode == WeightMode::ExactTiny {
        let total: Real = w.values().iter().sum();
        let obs_w: Vec<Real> = obs.observed_indices().iter().map(|&i| w.get(i)).collect();
        Some((total, log_set_probability(&obs_w, total)?))
    } else {
        None
    };

    let n = plan.n_groups();
    let mut log_unnormalized = Vec::with_capacity(n + 1);
    let mut displacements = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let group = if i < n { &plan.groups[i] } else { test_group };
        let group_w: Vec<Real> = group.iter().map(|idx| w.get(idx)).collect();
        let d_i: Real = group_w.iter().zip(&test_w).map(|(g, t)| g - t).sum();

        let log_prob_ratio = if i == n {
            0.0
        } else {
            match (mode, &exact_base) {
                (WeightMode::Fast, _) => log_eta(ctx.tau_peak, ctx.h, ctx.delta, &group_w, &test_w),
                (WeightMode::ExactTiny, Some((total, base))) => {
                    let mut swapped: Vec<Real> = obs
                        .observed_indices()
                        .iter()
                        .filter(|idx| !group.indices().contains(idx))
                        .map(|&idx| w.get(idx))
                        .collect();
                    swapped.extend(&test_w);
                    log_set_probability(&swapped, *total)? - base
                }
                (WeightMode::ExactTiny, None) => unreachable!(),
            }
        };

        let log_draw = log_test_draw_factor(group, test_group, w_star, stats)?;
        let log_counts = log_count_ratio(stats, &ctx.log_factorials, group.column(), test_col);
        log_unnormalized.push(log_prob_ratio + log_draw + log_counts);
        displacements.push(d_i);
    }

    let norm = logsumexp(&log_unnormalized);
    if !norm.is_finite() {
        return Err(Error::DegenerateWeights(
            "all unnormalized conformalization weights vanished".into(),
        ));
    }
    let p: Vec<Real> = log_unnormalized.iter().map(|lp| (lp - norm).exp()).collect();
    Ok(WeightVector { p, log_unnormalized, d: displacements })
}

/// Exact log-probability of one full realization of the calibration
/// machinery: the ordered calibration groups, the pruned set, the implied
/// training set and a test draw. The observed set is `train` plus the group
/// entries; its probability is enumerated exactly, so this is restricted to
/// tiny instances and exists as the joint-law oracle.
#[allow(clippy::too_many_arguments)]
pub fn exact_joint_log_prob(
    groups: &[IndexGroup],
    test_group: &IndexGroup,
    prune: &[MatrixIndex],
    train: &[MatrixIndex],
    n_rows: usize,
    n_cols: usize,
    w: &WeightField,
    w_star: &WeightField,
) -> Result<Real> {
    let k = test_group.len();
    for g in groups {
        if g.len() != k {
            return Err(Error::Domain("group sizes are inconsistent".into()));
        }
    }
    for idx in prune {
        if !train.contains(idx) {
            return Err(Error::Domain("pruned entries must belong to the training set".into()));
        }
    }

    // Reconstruct the observed set and check the partition is disjoint.
    let mut observed: Vec<MatrixIndex> = train.to_vec();
    for g in groups {
        observed.extend(g.iter());
    }
    let n_obs = observed.len();
    observed.sort_unstable();
    observed.windows(2).try_for_each(|pair| {
        if pair[0] == pair[1] {
            Err(Error::Domain("training set and groups overlap".into()))
        } else {
            Ok(())
        }
    })?;
    if n_obs > EXACT_TINY_LIMIT {
        return Err(Error::Capacity(format!(
            "exact joint law limited to {EXACT_TINY_LIMIT} observed entries, got {n_obs}"
        )));
    }

    // Observation-set probability by exhaustive order enumeration.
    let total: Real = w.values().iter().sum();
    let obs_w: Vec<Real> = observed.iter().map(|&i| w.get(i)).collect();
    let mut log_prob = log_set_probability(&obs_w, total)?;

    // Column bookkeeping.
    let mut obs_count = vec![0usize; n_cols];
    for idx in &observed {
        obs_count[idx.col] += 1;
    }
    let mut prune_count = vec![0usize; n_cols];
    for idx in prune {
        prune_count[idx.col] += 1;
    }
    let lf = LogFactorials::up_to(n_rows);
    for c in 0..n_cols {
        let m_c = obs_count[c] % k;
        if prune_count[c] != m_c {
            return Err(Error::Domain(format!(
                "column {c} pruned {} entries, expected {m_c}",
                prune_count[c]
            )));
        }
        log_prob -= lf.ln_binomial(obs_count[c], m_c);
    }

    // Sequential group draws: uniform first entry over what remains, then
    // uniform within the group's column.
    let kept_total = n_obs - prune.len();
    let mut groups_in_col = vec![0usize; n_cols];
    for (i, group) in groups.iter().enumerate() {
        log_prob -= ((kept_total - k * i) as Real).ln();
        let c = group.column();
        let kept_c = obs_count[c] - prune_count[c];
        for j in 1..k {
            log_prob -= ((kept_c - k * groups_in_col[c] - j) as Real).ln();
        }
        groups_in_col[c] += 1;
    }

    // Test draw over the pruned missing set.
    let mut miss_count = vec![0usize; n_cols];
    let mut miss_mass = vec![0.0; n_cols];
    let mut total_obs_per_col = vec![std::collections::BTreeSet::new(); n_cols];
    for idx in &observed {
        total_obs_per_col[idx.col].insert(idx.row);
    }
    for col in 0..n_cols {
        for row in 0..n_rows {
            if !total_obs_per_col[col].contains(&row) {
                miss_count[col] += 1;
                miss_mass[col] += w_star.get(MatrixIndex::new(row, col));
            }
        }
    }
    let test_col = test_group.column();
    if miss_count[test_col] < k {
        return Err(Error::Domain(format!(
            "test column {test_col} has fewer than {k} missing entries"
        )));
    }
    let eligible_mass: Real = (0..n_cols)
        .filter(|&c| miss_count[c] >= k)
        .map(|c| miss_mass[c])
        .sum();
    let mut consumed = 0.0;
    for (j, idx) in test_group.iter().enumerate() {
        if observed.contains(&idx) {
            return Err(Error::Domain(format!(
                "test index ({}, {}) is observed",
                idx.row, idx.col
            )));
        }
        let denominator = if j == 0 { eligible_mass } else { miss_mass[test_col] - consumed };
        if denominator <= 0.0 {
            return Err(Error::DegenerateWeights("test draw ran out of mass".into()));
        }
        log_prob += w_star.get(idx).ln() - denominator.ln();
        consumed += w_star.get(idx);
    }

    Ok(log_prob)
}
