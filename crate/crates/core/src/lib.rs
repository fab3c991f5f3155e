//! Joint, finite-sample-valid confidence regions for groups of missing
//! entries in a partially observed matrix.
//!
//! Given a matrix observed through weighted sampling without replacement,
//! this crate calibrates a prediction rule on structured groups of observed
//! entries so that the resulting region simultaneously covers all `K` missing
//! entries of a same-column test group with probability at least `1 - alpha`,
//! for any black-box completion model. Because the calibration groups live in
//! the observed part of the matrix while the test group lives in the missing
//! part, the groups are not exchangeable; validity is restored by reweighting
//! each calibration group with conformalization weights derived from the
//! sampling model. The expensive Wallenius-type probability in those weights
//! is evaluated either exactly (tiny instances, test oracle) or through a
//! scaled Laplace approximation that costs `O(n_r n_c + nK)`.
//!
//! Module map:
//! - [`matrix`]: partially observed matrices, weight fields, index groups.
//! - [`sampling`]: the weighted without-replacement samplers and their law.
//! - [`calibration`]: partitioning the observed entries into structured
//!   calibration groups plus a training set.
//! - [`completion`]: alternating least squares and baseline completers.
//! - [`rules`]: prediction rules, conformity scores, weighted quantiles and
//!   region geometry.
//! - [`wallenius`]: the integral representation of the observation-set
//!   probability, scale tuning and quadrature.
//! - [`weights`]: conformalization weights (fast path and exact oracle).
//! - [`conformal`]: the simultaneous region constructors and baselines.
//! - [`missingness`]: low-rank logistic estimation of sampling weights.

pub mod calibration;
pub mod completion;
pub mod conformal;
pub mod error;
pub mod math;
pub mod matrix;
pub mod missingness;
pub mod rng;
pub mod rules;
pub mod sampling;
pub mod scalar;
pub mod wallenius;
pub mod weights;

/// Scalar type used by the full pipeline. The numeric kernels in [`math`],
/// [`rules`] and [`wallenius`] are generic over [`scalar::Scalar`]; the
/// sampling and experiment layers are pinned to this alias.
pub type Real = f64;

pub use calibration::{assemble_calibration, max_calibration_groups, CalibrationPlan};
pub use completion::{als_complete, complete, CompletionEstimate, SolverConfig, SolverKind};
pub use conformal::{
    baseline_region, region_contains, region_width, scmc_region, BaselineKind, BaselineMachine,
    ConfidenceRegion, ScmcMachine,
};
pub use error::{Error, Result};
pub use matrix::{IndexGroup, MatrixIndex, PartialMatrix, WeightField};
pub use missingness::{estimate_weights, MissingnessModel};
pub use rules::{conformity_score, weighted_quantile, PredictionRule, RegionShape};
pub use sampling::{ordered_draw_log_prob, sample_column_group, sample_without_replacement};
pub use wallenius::WalleniusContext;
pub use weights::{conformalization_weights, exact_joint_log_prob, WeightMode, WeightVector};
