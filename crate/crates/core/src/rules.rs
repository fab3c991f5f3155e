//! Prediction rules, conformity scores and the weighted quantile.
//!
//! A prediction rule maps a parameter `tau` to a region around the point
//! estimate, growing monotonically from the single point at `tau = 0` to all
//! of `R^K` in the limit. The conformity score of a group is the smallest
//! `tau` whose region covers the truth, so region membership at level `tau`
//! is equivalent to `score <= tau`.

use crate::completion::CompletionEstimate;
use crate::error::{Error, Result};
use crate::matrix::IndexGroup;
use crate::scalar::Scalar;
use crate::Real;

/// The three region families.
///
/// The cube is calibrated in score space through the `x / (1 + x)` transform
/// of the max absolute residual, so its scores live in `[0, 1)`; rectangle
/// and sphere parameters live in `[0, +inf)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredictionRule {
    /// Equal half-width `tau / (1 - tau)` on every coordinate.
    HyperCube,
    /// Half-width `|estimate| * tau` per coordinate.
    HyperRectangle,
    /// Euclidean ball of radius `tau`.
    HyperSphere,
}

impl PredictionRule {
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "cube" => Ok(Self::HyperCube),
            "rect" | "rectangle" => Ok(Self::HyperRectangle),
            "sphere" => Ok(Self::HyperSphere),
            other => Err(Error::Config(format!("unknown prediction rule '{other}'"))),
        }
    }
}

/// Score of a group of residuals under the cube or sphere rule (the
/// rectangle rule additionally needs the centers; use
/// [`score_with_centers`]).
pub fn score_residuals<S: Scalar>(rule: PredictionRule, residuals: &[S]) -> S {
    match rule {
        PredictionRule::HyperCube => residuals
            .iter()
            .map(|r| {
                let a = r.abs();
                a / (S::one() + a)
            })
            .fold(S::zero(), S::max),
        PredictionRule::HyperRectangle => {
            unreachable!("rectangle scores depend on the centers")
        }
        PredictionRule::HyperSphere => residuals.iter().map(|r| *r * *r).sum::<S>().sqrt(),
    }
}

/// Score from centers and truths. For the rectangle rule a zero-magnitude
/// center with a nonzero residual yields `+inf` (no finite parameter covers
/// it); with a zero residual it contributes nothing.
pub fn score_with_centers<S: Scalar>(rule: PredictionRule, centers: &[S], truth: &[S]) -> S {
    debug_assert_eq!(centers.len(), truth.len());
    match rule {
        PredictionRule::HyperRectangle => {
            let mut worst = S::zero();
            for (&c, &t) in centers.iter().zip(truth) {
                let r = (t - c).abs();
                let contribution = if c.abs() > S::zero() {
                    r / c.abs()
                } else if r > S::zero() {
                    S::infinity()
                } else {
                    S::zero()
                };
                worst = worst.max(contribution);
            }
            worst
        }
        _ => {
            let residuals: Vec<S> = centers.iter().zip(truth).map(|(&c, &t)| t - c).collect();
            score_residuals(rule, &residuals)
        }
    }
}

/// Conformity score of a calibration (or test) group against an estimate.
pub fn conformity_score(
    rule: PredictionRule,
    estimate: &CompletionEstimate,
    group: &IndexGroup,
    truth: &[Real],
) -> Result<Real> {
    if truth.len() != group.len() {
        return Err(Error::Domain(format!(
            "group of size {} scored against {} truths",
            group.len(),
            truth.len()
        )));
    }
    for idx in group.iter() {
        if idx.row >= estimate.estimate.nrows() || idx.col >= estimate.estimate.ncols() {
            return Err(Error::Domain(format!(
                "group index ({}, {}) outside the estimate",
                idx.row, idx.col
            )));
        }
    }
    let centers: Vec<Real> = group.iter().map(|idx| estimate.at(idx)).collect();
    Ok(score_with_centers(rule, &centers, truth))
}

/// The `beta` quantile of the weighted score distribution with mass
/// `weights[n]` at `+inf`: the smallest score whose cumulative weight reaches
/// `beta`, or `+inf` when no finite score does.
pub fn weighted_quantile<S: Scalar>(scores: &[S], weights: &[S], beta: S) -> Result<S> {
    if weights.len() != scores.len() + 1 {
        return Err(Error::Domain(format!(
            "{} weights for {} scores; expected one extra mass at +inf",
            weights.len(),
            scores.len()
        )));
    }
    if !(beta > S::zero() && beta < S::one()) {
        return Err(Error::Domain(format!("quantile level {beta} outside (0, 1)")));
    }
    let total: S = weights.iter().cloned().sum();
    if (total - S::one()).abs() > S::from_f64(1e-9) {
        return Err(Error::Numerical(format!("weights sum to {total}, expected 1")));
    }
    if weights.iter().any(|w| *w < S::zero()) {
        return Err(Error::Numerical("negative conformalization weight".into()));
    }

    // Stable sort by score; ties keep index order, which only affects which
    // weight label sits where, not the cumulative sums.
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("scores must not be NaN"));
    let mut cumulative = S::zero();
    for &i in &order {
        if !scores[i].is_finite() {
            break; // infinite scores merge with the +inf mass
        }
        cumulative += weights[i];
        if cumulative >= beta {
            return Ok(scores[i]);
        }
    }
    Ok(S::infinity())
}

/// Geometry of a materialized region; per-coordinate boxes or a ball.
#[derive(Debug, Clone, PartialEq)]
pub enum RegionShape {
    Box { halfwidths: Vec<Real> },
    Ball { radius: Real },
}

/// Maps a calibrated parameter to the region geometry around the centers.
pub fn shape_for(rule: PredictionRule, tau: Real, centers: &[Real]) -> RegionShape {
    match rule {
        PredictionRule::HyperCube => {
            let hw = if tau.is_infinite() || tau >= 1.0 { Real::INFINITY } else { tau / (1.0 - tau) };
            RegionShape::Box { halfwidths: vec![hw; centers.len()] }
        }
        PredictionRule::HyperRectangle => RegionShape::Box {
            halfwidths: centers.iter().map(|c| c.abs() * tau).collect(),
        },
        PredictionRule::HyperSphere => RegionShape::Ball { radius: tau },
    }
}

/// Whether `truth` lies inside the region (boundaries included).
pub fn shape_contains(shape: &RegionShape, centers: &[Real], truth: &[Real]) -> bool {
    match shape {
        RegionShape::Box { halfwidths } => centers
            .iter()
            .zip(truth)
            .zip(halfwidths)
            .all(|((&c, &t), &h)| (t - c).abs() <= h || h.is_infinite()),
        RegionShape::Ball { radius } => {
            let norm = centers
                .iter()
                .zip(truth)
                .map(|(&c, &t)| (t - c) * (t - c))
                .sum::<Real>()
                .sqrt();
            norm <= *radius
        }
    }
}

/// Mean per-coordinate interval length for boxes, diameter for balls. Ball
/// widths are not directly comparable with box widths.
pub fn shape_width(shape: &RegionShape) -> Real {
    match shape {
        RegionShape::Box { halfwidths } => {
            2.0 * halfwidths.iter().sum::<Real>() / halfwidths.len() as Real
        }
        RegionShape::Ball { radius } => 2.0 * radius,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn scores_match_hand_values() {
        // Cube: residuals (0.5, 1.0) -> max(1/3, 1/2).
        let s = score_residuals(PredictionRule::HyperCube, &[0.5, 1.0]);
        assert!((s - 0.5f64).abs() < 1e-15);
        // Sphere: residuals (3, 4) -> 5.
        let s = score_residuals(PredictionRule::HyperSphere, &[3.0, 4.0]);
        assert!((s - 5.0f64).abs() < 1e-12);
        // Zero residuals score zero under every rule.
        for rule in [PredictionRule::HyperCube, PredictionRule::HyperRectangle, PredictionRule::HyperSphere] {
            assert_eq!(score_with_centers(rule, &[1.0, -2.0], &[1.0, -2.0]), 0.0);
        }
    }

    #[test]
    fn rectangle_degenerate_center() {
        let s: f64 = score_with_centers(PredictionRule::HyperRectangle, &[0.0, 2.0], &[0.1, 2.0]);
        assert!(s.is_infinite());
        let s: f64 = score_with_centers(PredictionRule::HyperRectangle, &[0.0, 2.0], &[0.0, 3.0]);
        assert!((s - 0.5).abs() < 1e-15);
    }

    #[test]
    fn quantile_hand_cases() {
        // Cumulative scan 0.2, 0.5, 1.0 crosses 0.6 at the third score.
        let q = weighted_quantile(&[1.0, 2.0, 3.0], &[0.2, 0.3, 0.5, 0.0], 0.6).unwrap();
        assert_eq!(q, 3.0);
        // A single point mass is returned for any level.
        let q = weighted_quantile(&[4.2], &[1.0, 0.0], 0.31).unwrap();
        assert_eq!(q, 4.2);
        // Half the mass at infinity dominates a 0.9 level.
        let weights: Vec<f64> = std::iter::repeat(0.05).take(10).chain([0.5]).collect();
        let scores: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let q = weighted_quantile(&scores, &weights, 0.9).unwrap();
        assert!(q.is_infinite());
    }

    #[test]
    fn quantile_rejects_bad_weights() {
        assert!(matches!(
            weighted_quantile(&[1.0], &[0.4, 0.4], 0.5),
            Err(Error::Numerical(_))
        ));
        assert!(weighted_quantile(&[1.0], &[0.5], 0.5).is_err());
    }

    #[test]
    fn box_membership_and_width() {
        let shape = shape_for(PredictionRule::HyperCube, 0.5, &[0.0, 0.0]);
        // tau = 0.5 maps to half-width 1.
        assert!(shape_contains(&shape, &[0.0, 0.0], &[0.5, -0.9]));
        assert!(!shape_contains(&shape, &[0.0, 0.0], &[1.1, 0.0]));
        assert!((shape_width(&shape) - 2.0).abs() < 1e-15);
    }

    proptest! {
        /// Region membership at level tau is score <= tau (ties included).
        #[test]
        fn score_region_duality(
            centers in proptest::collection::vec(-5.0f64..5.0, 1..6),
            offsets in proptest::collection::vec(-4.0f64..4.0, 1..6),
            tau in 0.0f64..3.0,
        ) {
            let k = centers.len().min(offsets.len());
            let centers = &centers[..k];
            let truth: Vec<f64> = centers.iter().zip(&offsets[..k]).map(|(c, o)| c + o).collect();
            for rule in [PredictionRule::HyperCube, PredictionRule::HyperRectangle, PredictionRule::HyperSphere] {
                let tau = if rule == PredictionRule::HyperCube { tau.min(0.999) } else { tau };
                let score = score_with_centers(rule, centers, &truth);
                let shape = shape_for(rule, tau, centers);
                prop_assert_eq!(shape_contains(&shape, centers, &truth), score <= tau);
            }
        }

        /// Regions grow with tau and collapse to the point at tau = 0.
        #[test]
        fn monotone_and_boundary(
            centers in proptest::collection::vec(-5.0f64..5.0, 1..6),
            t1 in 0.0f64..0.98,
            t2 in 0.0f64..0.98,
            probe in proptest::collection::vec(-9.0f64..9.0, 6),
        ) {
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            let truth: Vec<f64> = centers.iter().zip(&probe).map(|(c, p)| c + p).collect();
            for rule in [PredictionRule::HyperCube, PredictionRule::HyperRectangle, PredictionRule::HyperSphere] {
                let small = shape_for(rule, lo, &centers);
                let large = shape_for(rule, hi, &centers);
                if shape_contains(&small, &centers, &truth) {
                    prop_assert!(shape_contains(&large, &centers, &truth));
                }
                // tau = 0 keeps exactly the center point.
                let point = shape_for(rule, 0.0, &centers);
                prop_assert!(shape_contains(&point, &centers, &centers));
                let off: Vec<f64> = centers.iter().map(|c| c + 0.125).collect();
                prop_assert!(!shape_contains(&point, &centers, &off));
            }
        }

        /// Cube scores ignore the coordinate order of the group.
        #[test]
        fn cube_score_is_permutation_invariant(
            mut residuals in proptest::collection::vec(-5.0f64..5.0, 2..6),
        ) {
            let forward = score_residuals(PredictionRule::HyperCube, &residuals);
            residuals.reverse();
            let backward = score_residuals(PredictionRule::HyperCube, &residuals);
            prop_assert_eq!(forward, backward);
        }

        /// The weighted quantile agrees with a brute-force scan over the
        /// discrete distribution.
        #[test]
        fn quantile_matches_brute_force(
            scores in proptest::collection::vec(-10.0f64..10.0, 1..8),
            raw in proptest::collection::vec(0.01f64..1.0, 2..9),
            beta in 0.05f64..0.95,
        ) {
            let n = scores.len().min(raw.len() - 1);
            let scores = &scores[..n];
            let raw = &raw[..n + 1];
            let total: f64 = raw.iter().sum();
            let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
            let q = weighted_quantile(scores, &weights, beta).unwrap();

            // Brute force: scan candidate levels s over the support.
            let mut best = f64::INFINITY;
            let mut sorted: Vec<f64> = scores.to_vec();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            for &s in &sorted {
                let mass: f64 = scores
                    .iter()
                    .zip(&weights[..n])
                    .filter(|(x, _)| **x <= s)
                    .map(|(_, w)| w)
                    .sum();
                if mass >= beta {
                    best = s;
                    break;
                }
            }
            prop_assert_eq!(q, best);
        }
    }
}
