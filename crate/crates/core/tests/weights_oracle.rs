//! Oracle checks for the conformalization weights: the exact tiny-instance
//! mode must reproduce brute-force normalization of the joint law, and the
//! fast path must track the exact mode.

use scmc_core::calibration::{assemble_calibration, CalibrationPlan};
use scmc_core::matrix::{IndexGroup, MatrixIndex, PartialMatrix, WeightField};
use scmc_core::rng::stream;
use scmc_core::wallenius::{log_eta, WalleniusContext};
use scmc_core::weights::{conformalization_weights, exact_joint_log_prob, WeightMode};
use scmc_core::Real;

const N_ROWS: usize = 4;
const N_COLS: usize = 3;

fn idx(row: usize, col: usize) -> MatrixIndex {
    MatrixIndex::new(row, col)
}

/// 4x3 instance with column observation counts (3, 2, 1).
fn tiny_observed() -> PartialMatrix {
    let cells = [
        idx(0, 0),
        idx(1, 0),
        idx(2, 0),
        idx(0, 1),
        idx(1, 1),
        idx(0, 2),
    ];
    PartialMatrix::from_entries(
        N_ROWS,
        N_COLS,
        cells.iter().enumerate().map(|(j, &i)| (i, j as Real)),
    )
    .unwrap()
}

/// Mildly heterogeneous sampling weights (keeps the tiny-sample Laplace
/// ratio within a few percent) and strongly heterogeneous test weights.
fn tiny_fields() -> (WeightField, WeightField) {
    let w = WeightField::from_fn(N_ROWS, N_COLS, |r, c| 0.8 + 0.05 * (r as Real) + 0.07 * (c as Real));
    let w_star = WeightField::from_fn(N_ROWS, N_COLS, |r, c| 0.3 + 0.9 * (r as Real) + 0.5 * (c as Real));
    (w, w_star)
}

fn tiny_plan(seed: u64) -> (PartialMatrix, CalibrationPlan, IndexGroup) {
    let obs = tiny_observed();
    let mut rng = stream(seed, 0);
    let plan = assemble_calibration(&obs.observed_indices(), N_COLS, 2, 2, &mut rng).unwrap();
    // A test group in column 2, which has three missing entries.
    let test = IndexGroup::new(vec![idx(2, 2), idx(1, 2)]).unwrap();
    (obs, plan, test)
}

/// Brute-force conformalization weights: renormalize the exact joint law
/// over every swap of a calibration group with the test group.
fn brute_force_weights(
    obs: &PartialMatrix,
    plan: &CalibrationPlan,
    test: &IndexGroup,
    w: &WeightField,
    w_star: &WeightField,
) -> Vec<Real> {
    let n = plan.n_groups();
    let mut log_joint = Vec::with_capacity(n + 1);
    for i in 0..=n {
        // Slot i plays the test role; the remaining groups (including the
        // original test group when i < n) are the calibration groups.
        let mut groups: Vec<IndexGroup> = Vec::new();
        for (j, g) in plan.groups.iter().enumerate() {
            if j != i {
                groups.push(g.clone());
            }
        }
        let swapped_test = if i < n {
            groups.push(test.clone());
            plan.groups[i].clone()
        } else {
            test.clone()
        };
        // The training set (and pruning) is untouched by the swap.
        let lp = exact_joint_log_prob(
            &groups,
            &swapped_test,
            &plan.pruned,
            &plan.train,
            obs.n_rows(),
            obs.n_cols(),
            w,
            w_star,
        )
        .unwrap();
        log_joint.push(lp);
    }
    let max = log_joint.iter().cloned().fold(Real::NEG_INFINITY, Real::max);
    let total: Real = log_joint.iter().map(|lp| (lp - max).exp()).sum();
    log_joint.iter().map(|lp| (lp - max).exp() / total).collect()
}

#[test]
fn exact_joint_is_invariant_to_group_order() {
    let (_obs, plan, test) = tiny_plan(7);
    let (w, w_star) = tiny_fields();
    let forward = exact_joint_log_prob(
        &plan.groups,
        &test,
        &plan.pruned,
        &plan.train,
        N_ROWS,
        N_COLS,
        &w,
        &w_star,
    )
    .unwrap();
    let swapped_groups = vec![plan.groups[1].clone(), plan.groups[0].clone()];
    let backward = exact_joint_log_prob(
        &swapped_groups,
        &test,
        &plan.pruned,
        &plan.train,
        N_ROWS,
        N_COLS,
        &w,
        &w_star,
    )
    .unwrap();
    assert!((forward - backward).abs() < 1e-12);
}

#[test]
fn exact_joint_outcomes_sum_to_one_conditionally() {
    // 2x2 grid, 2 observed, K = 1, n = 1: enumerate every outcome of the
    // full chain (observation set, pruning, group, test draw) and check the
    // unconditional joint masses sum to 1.
    let w = WeightField::new(2, 2, vec![0.6, 1.1, 1.7, 0.9]).unwrap();
    let w_star = WeightField::new(2, 2, vec![1.0, 2.0, 0.5, 1.5]).unwrap();
    let cells = [idx(0, 0), idx(0, 1), idx(1, 0), idx(1, 1)];
    let mut total = 0.0;
    for a in 0..4 {
        for b in 0..4 {
            if a == b {
                continue;
            }
            // Unordered observation set {a, b}; K = 1 means no pruning and a
            // single unit calibration group, so the group is either cell.
            if b < a {
                continue;
            }
            let obs_cells = [cells[a], cells[b]];
            for group_cell in obs_cells {
                let train: Vec<MatrixIndex> = obs_cells
                    .iter()
                    .copied()
                    .filter(|&c| c != group_cell)
                    .collect();
                let group = IndexGroup::new(vec![group_cell]).unwrap();
                for test_cell in cells {
                    if obs_cells.contains(&test_cell) {
                        continue;
                    }
                    let test = IndexGroup::new(vec![test_cell]).unwrap();
                    let lp = exact_joint_log_prob(
                        &[group.clone()],
                        &test,
                        &[],
                        &train,
                        2,
                        2,
                        &w,
                        &w_star,
                    )
                    .unwrap();
                    total += lp.exp();
                }
            }
        }
    }
    assert!((total - 1.0).abs() < 1e-10, "joint masses sum to {total}");
}

#[test]
fn exact_joint_uniform_factorization() {
    // All-uniform weights on the 4x3 instance: every factor is a ratio of
    // counts that can be written down directly.
    let (_obs, plan, test) = tiny_plan(3);
    let w = WeightField::uniform(N_ROWS, N_COLS);
    let w_star = WeightField::uniform(N_ROWS, N_COLS);
    let lp = exact_joint_log_prob(
        &plan.groups,
        &test,
        &plan.pruned,
        &plan.train,
        N_ROWS,
        N_COLS,
        &w,
        &w_star,
    )
    .unwrap();

    // Set probability: 1 / C(12, 6). Pruning: columns (3, 2, 1) with K = 2
    // prune (1, 0, 1) entries -> 1/3 * 1 * 1. Groups: first draws uniform
    // over 4 then 2 remaining; within-column second draws are forced.
    // Test draw: eligible missing mass is 5 cells (columns 1 and 2); the
    // second entry is uniform among the 2 remaining in column 2.
    let lf = scmc_core::math::LogFactorials::up_to(12);
    let expected = -lf.ln_binomial(12, 6)
        - (3.0 as Real).ln()
        - (4.0 as Real).ln()
        - (2.0 as Real).ln()
        - (5.0 as Real).ln()
        - (2.0 as Real).ln();
    assert!((lp - expected).abs() < 1e-12, "{lp} vs {expected}");
}

#[test]
fn exact_tiny_matches_brute_force_normalization() {
    let (obs, plan, test) = tiny_plan(7);
    let (w, w_star) = tiny_fields();
    let ctx = WalleniusContext::build(&obs, &w, 1e-10).unwrap();
    let exact =
        conformalization_weights(&plan, &test, &obs, &w, &w_star, &ctx, WeightMode::ExactTiny)
            .unwrap();
    let brute = brute_force_weights(&obs, &plan, &test, &w, &w_star);
    assert_eq!(exact.p.len(), brute.len());
    for (a, b) in exact.p.iter().zip(&brute) {
        assert!((a - b).abs() <= 1e-9, "exact {a} vs brute {b}");
    }
    // The displacement of the test slot is zero by construction.
    assert_eq!(exact.d[plan.n_groups()], 0.0);
}

#[test]
fn fast_weights_track_exact_tiny() {
    for seed in [7, 8, 9, 10] {
        let (obs, plan, test) = tiny_plan(seed);
        let (w, w_star) = tiny_fields();
        let ctx = WalleniusContext::build(&obs, &w, 1e-10).unwrap();
        let exact =
            conformalization_weights(&plan, &test, &obs, &w, &w_star, &ctx, WeightMode::ExactTiny)
                .unwrap();
        let fast =
            conformalization_weights(&plan, &test, &obs, &w, &w_star, &ctx, WeightMode::Fast)
                .unwrap();
        for (a, b) in fast.p.iter().zip(&exact.p) {
            let rel = (a - b).abs() / b;
            assert!(rel <= 0.05, "seed {seed}: fast {a} vs exact {b} (rel {rel})");
        }
    }
}

#[test]
fn weight_vector_is_normalized_and_nonnegative() {
    for seed in 0..20 {
        let (obs, plan, test) = tiny_plan(seed);
        let (w, w_star) = tiny_fields();
        let ctx = WalleniusContext::build(&obs, &w, 1e-10).unwrap();
        let v = conformalization_weights(&plan, &test, &obs, &w, &w_star, &ctx, WeightMode::Fast)
            .unwrap();
        let sum: Real = v.p.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        assert!(v.p.iter().all(|p| *p >= 0.0));
        // Deterministic given inputs.
        let again =
            conformalization_weights(&plan, &test, &obs, &w, &w_star, &ctx, WeightMode::Fast)
                .unwrap();
        assert_eq!(v.p, again.p);
    }
}

#[test]
fn k1_reduction_matches_direct_individual_weights() {
    // With unit groups the count ratio vanishes and the swap factor reduces
    // to eta_i(tau_h) * w*_i / (eligible missing mass after the swap); check
    // against an independent implementation of that formula.
    let obs = tiny_observed();
    let (w, w_star) = tiny_fields();
    let mut rng = stream(11, 0);
    let plan = assemble_calibration(&obs.observed_indices(), N_COLS, 4, 1, &mut rng).unwrap();
    let test = IndexGroup::new(vec![idx(3, 0)]).unwrap();
    let ctx = WalleniusContext::build(&obs, &w, 1e-10).unwrap();
    let got = conformalization_weights(&plan, &test, &obs, &w, &w_star, &ctx, WeightMode::Fast)
        .unwrap();

    let missing = obs.missing_indices();
    let total_star: Real = missing.iter().map(|&i| w_star.get(i)).sum();
    let test_idx = test.indices()[0];
    let mut direct = Vec::new();
    for i in 0..=plan.n_groups() {
        let cell = if i < plan.n_groups() { plan.groups[i].indices()[0] } else { test_idx };
        let log_eta_value = if i < plan.n_groups() {
            log_eta(0.5, ctx.h, ctx.delta, &[w.get(cell)], &[w.get(test_idx)])
        } else {
            0.0
        };
        let denominator = total_star - w_star.get(test_idx) + w_star.get(cell);
        direct.push(log_eta_value + w_star.get(cell).ln() - denominator.ln());
    }
    let max = direct.iter().cloned().fold(Real::NEG_INFINITY, Real::max);
    let total: Real = direct.iter().map(|lp| (lp - max).exp()).sum();
    for (a, lp) in got.p.iter().zip(&direct) {
        let b = (lp - max).exp() / total;
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }
}

#[test]
fn symmetric_instance_weights() {
    // Uniform w and w* with equal column counts: all calibration groups get
    // identical weights. The test slot differs from them by the exact
    // finite-population factor ((m + 1)/(m - 1)) * ((kept + 1)/(kept - 1))
    // for K = 2 (it approaches equality as the matrix grows).
    let n_rows = 6;
    let n_cols = 3;
    // Each column: 2 observed (rows 0, 1), 4 missing.
    let obs = PartialMatrix::from_entries(
        n_rows,
        n_cols,
        (0..n_cols).flat_map(|c| (0..2).map(move |r| (MatrixIndex::new(r, c), 0.0))),
    )
    .unwrap();
    let w = WeightField::uniform(n_rows, n_cols);
    let w_star = WeightField::uniform(n_rows, n_cols);
    let mut rng = stream(5, 1);
    let plan = assemble_calibration(&obs.observed_indices(), n_cols, 2, 2, &mut rng).unwrap();
    assert_eq!(plan.n_groups(), 2);
    let test = IndexGroup::new(vec![MatrixIndex::new(3, 2), MatrixIndex::new(4, 2)]).unwrap();
    let ctx = WalleniusContext::build(&obs, &w, 1e-10).unwrap();

    for mode in [WeightMode::Fast, WeightMode::ExactTiny] {
        let v = conformalization_weights(&plan, &test, &obs, &w, &w_star, &ctx, mode).unwrap();
        let n = plan.n_groups();
        for i in 1..n {
            assert!((v.p[i] - v.p[0]).abs() < 1e-12, "calibration weights differ");
        }
        // m = 4 missing in each column, kept = 2 observed after pruning.
        let m = 4.0;
        let kept = 2.0;
        let expected_ratio = ((m + 1.0) / (m - 1.0)) * ((kept + 1.0) / (kept - 1.0));
        let ratio = v.p[n] / v.p[0];
        assert!(
            (ratio - expected_ratio).abs() < 1e-9,
            "test-slot ratio {ratio} vs {expected_ratio}"
        );
    }

    // The same symmetry at K = 1 gives exactly uniform weights.
    let mut rng = stream(5, 2);
    let plan1 = assemble_calibration(&obs.observed_indices(), n_cols, 6, 1, &mut rng).unwrap();
    let test1 = IndexGroup::new(vec![MatrixIndex::new(3, 2)]).unwrap();
    let v = conformalization_weights(&plan1, &test1, &obs, &w, &w_star, &ctx, WeightMode::Fast)
        .unwrap();
    for p in &v.p {
        assert!((p - 1.0 / 7.0).abs() < 1e-12);
    }
}

#[test]
fn degenerate_test_column_is_rejected() {
    // Test column with fewer than K missing entries.
    let (obs, plan, _) = tiny_plan(7);
    let (w, _w_star) = tiny_fields();
    let ctx = WalleniusContext::build(&obs, &w, 1e-10).unwrap();
    // Column 0 has exactly one missing entry; a K = 2 group cannot form, so
    // pass a group from column 1 (two missing) while requesting enough mass
    // that the second draw denominator degenerates: zero out the rest.
    let mut tight = WeightField::uniform(N_ROWS, N_COLS);
    for r in 0..N_ROWS {
        tight.set(idx(r, 1), 0.0);
    }
    let test = IndexGroup::new(vec![idx(2, 1), idx(3, 1)]).unwrap();
    let result = conformalization_weights(&plan, &test, &obs, &w, &tight, &ctx, WeightMode::Fast);
    assert!(result.is_err());
}

#[test]
fn laplace_ratio_tightens_with_sample_size() {
    // The fast-path ratio eta_i(1/2) against the quadrature ratio of the
    // swapped-set integral: error shrinks as the observed set grows.
    let mut worst = Vec::new();
    for (n_rows, n_cols, n_obs, seed) in [(10, 10, 50, 1u64), (20, 20, 200, 2u64)] {
        let mut rng = stream(400 + seed, 0);
        let w = WeightField::from_fn(n_rows, n_cols, |_, _| {
            use rand::Rng;
            rng.random::<Real>().max(1e-3)
        });
        let grid: Vec<MatrixIndex> = (0..n_rows)
            .flat_map(|r| (0..n_cols).map(move |c| MatrixIndex::new(r, c)))
            .collect();
        let drawn =
            scmc_core::sampling::sample_without_replacement(&grid, n_obs, &w, &mut stream(9, seed))
                .unwrap();
        let obs =
            PartialMatrix::from_entries(n_rows, n_cols, drawn.iter().map(|&i| (i, 0.0))).unwrap();
        let ctx = WalleniusContext::build(&obs, &w, 1e-10).unwrap();
        let missing = obs.missing_indices();
        let base = ctx.log_set_prob_quadrature(None).unwrap();

        let mut max_rel: Real = 0.0;
        for j in 0..6 {
            let group_cell = drawn[j * (n_obs / 6)];
            let test_cell = missing[j * (missing.len() / 6)];
            let group_w = [w.get(group_cell)];
            let test_w = [w.get(test_cell)];
            let (h, delta) = (ctx.h, ctx.delta);
            let log_eta_fn = move |tau: Real| log_eta(tau, h, delta, &group_w, &test_w);
            let swapped = ctx.log_set_prob_quadrature(Some(&log_eta_fn)).unwrap();
            let quad_ratio = (swapped - base).exp();
            let fast_ratio = log_eta(0.5, ctx.h, ctx.delta, &group_w, &test_w).exp();
            max_rel = max_rel.max((fast_ratio / quad_ratio - 1.0).abs());
        }
        worst.push(max_rel);
    }
    assert!(worst[1] <= worst[0], "laplace error grew: {worst:?}");
    assert!(worst[1] <= 0.05, "laplace error at n_obs=200: {}", worst[1]);
}
