//! End-to-end behavior of the region constructors on controlled instances.

use nalgebra::DMatrix;
use scmc_core::calibration::assemble_calibration;
use scmc_core::completion::CompletionEstimate;
use scmc_core::conformal::{
    baseline_region, region_contains, region_width, scmc_region, BaselineKind,
};
use scmc_core::matrix::{IndexGroup, MatrixIndex, PartialMatrix, WeightField};
use scmc_core::rng::stream;
use scmc_core::rules::{PredictionRule, RegionShape};
use scmc_core::Real;

fn idx(r: usize, c: usize) -> MatrixIndex {
    MatrixIndex::new(r, c)
}

/// A 10x12 instance: four observed entries per column, truth = r + c.
fn instance() -> (PartialMatrix, WeightField, WeightField) {
    let obs = PartialMatrix::from_entries(
        10,
        12,
        (0..12).flat_map(|c| (0..4).map(move |r| (idx(r, c), (r + c) as Real))),
    )
    .unwrap();
    (obs, WeightField::uniform(10, 12), WeightField::uniform(10, 12))
}

fn noisy_estimate(obs: &PartialMatrix, noise: Real) -> CompletionEstimate {
    let mut rng = stream(77, 0);
    use rand::Rng;
    let estimate = DMatrix::from_fn(obs.n_rows(), obs.n_cols(), |r, c| {
        (r + c) as Real + noise * (rng.random::<Real>() - 0.5)
    });
    CompletionEstimate { estimate, factors: None }
}

#[test]
fn perfect_estimate_degenerates_to_the_point() {
    let (obs, w, w_star) = instance();
    let estimate = noisy_estimate(&obs, 0.0);
    let mut rng = stream(1, 0);
    let plan = assemble_calibration(&obs.observed_indices(), 12, 20, 2, &mut rng).unwrap();
    let test = IndexGroup::new(vec![idx(5, 2), idx(7, 2)]).unwrap();
    let region = scmc_region(
        &obs,
        &plan,
        &estimate,
        PredictionRule::HyperCube,
        &test,
        0.1,
        &w,
        &w_star,
    )
    .unwrap();
    assert_eq!(region.tau_hat, 0.0);
    assert!(!region.clipped);
    let truth = vec![7.0, 9.0];
    assert!(region_contains(&region, &truth));
    assert_eq!(region_width(&region), 0.0);
    let off = vec![7.0, 9.1];
    assert!(!region_contains(&region, &off));
}

#[test]
fn k1_methods_coincide_exactly() {
    let (obs, w, w_star) = instance();
    let estimate = noisy_estimate(&obs, 1.0);
    let mut rng = stream(2, 0);
    let plan = assemble_calibration(&obs.observed_indices(), 12, 24, 1, &mut rng).unwrap();
    let test = IndexGroup::new(vec![idx(8, 3)]).unwrap();
    for rule in [
        PredictionRule::HyperCube,
        PredictionRule::HyperRectangle,
        PredictionRule::HyperSphere,
    ] {
        let scmc = scmc_region(&obs, &plan, &estimate, rule, &test, 0.1, &w, &w_star).unwrap();
        let unadj = baseline_region(
            BaselineKind::Unadjusted,
            &obs,
            &plan,
            &estimate,
            rule,
            &test,
            0.1,
            &w,
            &w_star,
        )
        .unwrap();
        let bonf = baseline_region(
            BaselineKind::Bonferroni,
            &obs,
            &plan,
            &estimate,
            rule,
            &test,
            0.1,
            &w,
            &w_star,
        )
        .unwrap();
        assert!((scmc.tau_hat - unadj.tau_hat).abs() < 1e-15);
        assert!((scmc.tau_hat - bonf.tau_hat).abs() < 1e-15);
        assert!((region_width(&scmc) - region_width(&unadj)).abs() < 1e-12);
        assert!((region_width(&scmc) - region_width(&bonf)).abs() < 1e-12);
    }
}

#[test]
fn uniform_k1_matches_split_conformal() {
    // Full exchangeability: p_i = 1/(n+1) and the calibrated parameter is
    // the ceil((n+1)(1-alpha))-th smallest calibration score.
    let (obs, w, w_star) = instance();
    let estimate = noisy_estimate(&obs, 2.0);
    let mut rng = stream(3, 0);
    let plan = assemble_calibration(&obs.observed_indices(), 12, 18, 1, &mut rng).unwrap();
    let test = IndexGroup::new(vec![idx(9, 0)]).unwrap();
    let alpha = 0.2;
    let region = scmc_region(
        &obs,
        &plan,
        &estimate,
        PredictionRule::HyperCube,
        &test,
        alpha,
        &w,
        &w_star,
    )
    .unwrap();
    for p in &region.weights_used {
        assert!((p - 1.0 / 19.0).abs() < 1e-12, "p = {p}");
    }
    let mut scores: Vec<Real> = plan
        .groups
        .iter()
        .map(|g| {
            let cell = g.indices()[0];
            let r = (obs.get(cell).unwrap() - estimate.at(cell)).abs();
            r / (1.0 + r)
        })
        .collect();
    scores.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let rank = ((19.0 * (1.0 - alpha)).ceil() as usize).min(scores.len()) - 1;
    assert!((region.tau_hat - scores[rank]).abs() < 1e-15);
}

#[test]
fn bonferroni_is_wider_than_unadjusted() {
    let (obs, w, w_star) = instance();
    let estimate = noisy_estimate(&obs, 2.0);
    let mut rng = stream(4, 0);
    let plan = assemble_calibration(&obs.observed_indices(), 12, 30, 1, &mut rng).unwrap();
    let test = IndexGroup::new(vec![idx(6, 4), idx(8, 4), idx(9, 4)]).unwrap();
    let unadj = baseline_region(
        BaselineKind::Unadjusted,
        &obs,
        &plan,
        &estimate,
        PredictionRule::HyperCube,
        &test,
        0.1,
        &w,
        &w_star,
    )
    .unwrap();
    let bonf = baseline_region(
        BaselineKind::Bonferroni,
        &obs,
        &plan,
        &estimate,
        PredictionRule::HyperCube,
        &test,
        0.1,
        &w,
        &w_star,
    )
    .unwrap();
    assert!(region_width(&bonf) >= region_width(&unadj));
}

#[test]
fn clipped_quantile_flags_and_substitutes() {
    // Concentrate the test weights far from every calibration group so the
    // test slot hoards the mass and the weighted quantile diverges.
    let (obs, w, _) = instance();
    let estimate = noisy_estimate(&obs, 2.0);
    let mut rng = stream(5, 0);
    let plan = assemble_calibration(&obs.observed_indices(), 12, 10, 2, &mut rng).unwrap();
    let mut w_star = WeightField::from_fn(10, 12, |_, _| 1e-9);
    w_star.set(idx(6, 5), 1.0);
    w_star.set(idx(7, 5), 1.0);
    let test = IndexGroup::new(vec![idx(6, 5), idx(7, 5)]).unwrap();
    let region = scmc_region(
        &obs,
        &plan,
        &estimate,
        PredictionRule::HyperCube,
        &test,
        0.1,
        &w,
        &w_star,
    )
    .unwrap();
    assert!(region.clipped);
    // The applied parameter equals the largest calibration score.
    let machine = scmc_core::conformal::ScmcMachine::new(
        &obs,
        &plan,
        &estimate,
        PredictionRule::HyperCube,
        &w,
        &w_star,
    )
    .unwrap();
    let s_max = machine.scores().iter().cloned().fold(Real::NEG_INFINITY, Real::max);
    assert_eq!(region.tau_hat, s_max);
    assert!(region_width(&region).is_finite());
}

#[test]
fn rectangle_and_sphere_shapes() {
    let (obs, w, w_star) = instance();
    let estimate = noisy_estimate(&obs, 1.0);
    let mut rng = stream(6, 0);
    let plan = assemble_calibration(&obs.observed_indices(), 12, 16, 2, &mut rng).unwrap();
    let test = IndexGroup::new(vec![idx(4, 1), idx(9, 1)]).unwrap();

    let rect = scmc_region(
        &obs,
        &plan,
        &estimate,
        PredictionRule::HyperRectangle,
        &test,
        0.1,
        &w,
        &w_star,
    )
    .unwrap();
    match &rect.shape {
        RegionShape::Box { halfwidths } => {
            for (hw, c) in halfwidths.iter().zip(&rect.centers) {
                assert!((hw - c.abs() * rect.tau_hat).abs() < 1e-12);
            }
        }
        other => panic!("rectangle produced {other:?}"),
    }

    let sphere = scmc_region(
        &obs,
        &plan,
        &estimate,
        PredictionRule::HyperSphere,
        &test,
        0.1,
        &w,
        &w_star,
    )
    .unwrap();
    match &sphere.shape {
        RegionShape::Ball { radius } => {
            assert!((region_width(&sphere) - 2.0 * radius).abs() < 1e-15);
            // Membership through the Euclidean norm.
            let inside: Vec<Real> =
                sphere.centers.iter().map(|c| c + radius / 2.0 * (0.5f64).sqrt()).collect();
            assert!(region_contains(&sphere, &inside));
        }
        other => panic!("sphere produced {other:?}"),
    }
}
