//! Frequency checks of the weighted sampler against its own log-probability.

use std::collections::HashMap;

use scmc_core::matrix::{MatrixIndex, WeightField};
use scmc_core::rng::stream;
use scmc_core::sampling::{ordered_draw_log_prob, sample_without_replacement};
use scmc_core::Real;

/// 1% chi-square critical value by the Wilson-Hilferty approximation.
fn chi2_crit_1pct(dof: usize) -> Real {
    let d = dof as Real;
    d * (1.0 - 2.0 / (9.0 * d) + 2.326_347_874 * (2.0 / (9.0 * d)).sqrt()).powi(3)
}

fn enumerate_ordered(universe: &[MatrixIndex], m: usize) -> Vec<Vec<MatrixIndex>> {
    if m == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for (i, &first) in universe.iter().enumerate() {
        let mut rest = universe.to_vec();
        rest.remove(i);
        for mut tail in enumerate_ordered(&rest, m - 1) {
            let mut seq = vec![first];
            seq.append(&mut tail);
            out.push(seq);
        }
    }
    out
}

#[test]
fn empirical_frequencies_match_the_telescoping_law() {
    // Universes up to 6 items, draws up to 3, heterogeneous weights.
    let cases = [(3usize, 2usize), (4, 3), (5, 1), (6, 3), (6, 2)];
    for (case_id, &(size, m)) in cases.iter().enumerate() {
        let universe: Vec<MatrixIndex> = (0..size).map(|c| MatrixIndex::new(0, c)).collect();
        let weights =
            WeightField::from_fn(1, size, |_, c| 0.5 + 0.4 * (c as Real) + 0.1 * ((c % 2) as Real));

        let outcomes = enumerate_ordered(&universe, m);
        let expected: HashMap<Vec<MatrixIndex>, Real> = outcomes
            .iter()
            .map(|seq| {
                let lp = ordered_draw_log_prob(seq, &universe, &weights).unwrap();
                (seq.clone(), lp.exp())
            })
            .collect();
        let total: Real = expected.values().sum();
        assert!((total - 1.0).abs() < 1e-10, "law does not normalize: {total}");

        let runs = 100_000usize;
        let mut counts: HashMap<Vec<MatrixIndex>, usize> = HashMap::new();
        let mut rng = stream(1000 + case_id as u64, 0);
        for _ in 0..runs {
            let draw = sample_without_replacement(&universe, m, &weights, &mut rng).unwrap();
            *counts.entry(draw).or_default() += 1;
        }

        let mut chi2 = 0.0;
        for (seq, p) in &expected {
            let observed = *counts.get(seq).unwrap_or(&0) as Real;
            let expected_count = p * runs as Real;
            chi2 += (observed - expected_count).powi(2) / expected_count;
        }
        let crit = chi2_crit_1pct(expected.len() - 1);
        assert!(
            chi2 < crit,
            "case ({size}, {m}): chi2 {chi2:.2} >= {crit:.2} over {} outcomes",
            expected.len()
        );
    }
}
