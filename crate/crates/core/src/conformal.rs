//! Simultaneous confidence regions and the per-entry baselines.
//!
//! The simultaneous constructor scores every calibration group against the
//! completion estimate, reweights the score distribution with the
//! conformalization weights of the requested test group, reads off the
//! weighted `1 - alpha` quantile (with its extra mass at `+inf`) and
//! materializes the region. An infinite quantile is substituted by the
//! largest finite calibration score and flagged, keeping the output usable
//! while leaving the conservativeness auditable.
//!
//! The unadjusted and Bonferroni baselines run the same machinery with unit
//! groups, per entry of the test group, at level `alpha` and `alpha / K`
//! respectively.

use crate::calibration::CalibrationPlan;
use crate::completion::CompletionEstimate;
use crate::error::{Error, Result};
use crate::matrix::{IndexGroup, PartialMatrix, WeightField};
use crate::rules::{
    conformity_score, shape_contains, shape_for, shape_width, weighted_quantile, PredictionRule,
    RegionShape,
};
use crate::wallenius::WalleniusContext;
use crate::weights::{conformalization_weights_cached, ColumnStats, WeightMode, WeightVector};
use crate::Real;

/// A calibrated joint region for one test group.
#[derive(Debug, Clone)]
pub struct ConfidenceRegion {
    pub group: IndexGroup,
    pub rule: PredictionRule,
    /// The region parameter actually applied (after any clipping).
    pub tau_hat: Real,
    /// Point estimate at the group indices.
    pub centers: Vec<Real>,
    pub shape: RegionShape,
    /// The `n + 1` conformalization weights behind the calibrated quantile.
    pub weights_used: Vec<Real>,
    /// Whether an infinite quantile was clipped to the largest calibration
    /// score.
    pub clipped: bool,
}

/// True when every coordinate of `truth` lies inside the region.
pub fn region_contains(region: &ConfidenceRegion, truth: &[Real]) -> bool {
    shape_contains(&region.shape, &region.centers, truth)
}

/// Mean per-entry interval length (diameter for spheres).
pub fn region_width(region: &ConfidenceRegion) -> Real {
    shape_width(&region.shape)
}

/// Reusable simultaneous-region builder: scores, the Wallenius context and
/// the column bookkeeping are computed once and shared by every test group.
pub struct ScmcMachine<'a> {
    obs: &'a PartialMatrix,
    plan: &'a CalibrationPlan,
    estimate: &'a CompletionEstimate,
    rule: PredictionRule,
    w: &'a WeightField,
    w_star: &'a WeightField,
    ctx: WalleniusContext,
    column_stats: ColumnStats,
    scores: Vec<Real>,
    mode: WeightMode,
}

impl<'a> ScmcMachine<'a> {
    pub fn new(
        obs: &'a PartialMatrix,
        plan: &'a CalibrationPlan,
        estimate: &'a CompletionEstimate,
        rule: PredictionRule,
        w: &'a WeightField,
        w_star: &'a WeightField,
    ) -> Result<Self> {
        let ctx = WalleniusContext::build(obs, w, 1e-10)?;
        let column_stats = ColumnStats::build(obs, w_star, plan.k);
        let mut scores = Vec::with_capacity(plan.n_groups());
        for group in &plan.groups {
            let truth: Vec<Real> = group
                .iter()
                .map(|idx| {
                    obs.get(idx).ok_or_else(|| {
                        Error::Data(format!(
                            "calibration index ({}, {}) is not observed",
                            idx.row, idx.col
                        ))
                    })
                })
                .collect::<Result<_>>()?;
            scores.push(conformity_score(rule, estimate, group, &truth)?);
        }
        Ok(Self {
            obs,
            plan,
            estimate,
            rule,
            w,
            w_star,
            ctx,
            column_stats,
            scores,
            mode: WeightMode::Fast,
        })
    }

    /// Switches the probability-ratio evaluation (the exact mode is an
    /// oracle for tiny instances).
    pub fn with_mode(mut self, mode: WeightMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn scores(&self) -> &[Real] {
        &self.scores
    }

    pub fn context(&self) -> &WalleniusContext {
        &self.ctx
    }

    pub fn weights_for(&self, test_group: &IndexGroup) -> Result<WeightVector> {
        conformalization_weights_cached(
            self.plan,
            test_group,
            self.obs,
            self.w,
            self.w_star,
            &self.ctx,
            &self.column_stats,
            self.mode,
        )
    }

    pub fn region(&self, test_group: &IndexGroup, alpha: Real) -> Result<ConfidenceRegion> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::Config(format!("alpha = {alpha} outside (0, 1)")));
        }
        let weights = self.weights_for(test_group)?;
        let (tau_hat, clipped) = calibrate_tau(&self.scores, &weights.p, 1.0 - alpha)?;
        let centers: Vec<Real> = test_group.iter().map(|idx| self.estimate.at(idx)).collect();
        let shape = shape_for(self.rule, tau_hat, &centers);
        Ok(ConfidenceRegion {
            group: test_group.clone(),
            rule: self.rule,
            tau_hat,
            centers,
            shape,
            weights_used: weights.p,
            clipped,
        })
    }
}

/// Weighted quantile with the infinite-quantile clipping rule applied.
fn calibrate_tau(scores: &[Real], weights: &[Real], beta: Real) -> Result<(Real, bool)> {
    let tau = weighted_quantile(scores, weights, beta)?;
    if tau.is_finite() {
        return Ok((tau, false));
    }
    let largest_finite = scores
        .iter()
        .cloned()
        .filter(|s| s.is_finite())
        .fold(Real::NEG_INFINITY, Real::max);
    if largest_finite.is_finite() {
        Ok((largest_finite, true))
    } else {
        Ok((Real::INFINITY, true))
    }
}

/// One-shot simultaneous region (builds the reusable machinery internally).
#[allow(clippy::too_many_arguments)]
pub fn scmc_region(
    obs: &PartialMatrix,
    plan: &CalibrationPlan,
    estimate: &CompletionEstimate,
    rule: PredictionRule,
    test_group: &IndexGroup,
    alpha: Real,
    w: &WeightField,
    w_star: &WeightField,
) -> Result<ConfidenceRegion> {
    ScmcMachine::new(obs, plan, estimate, rule, w, w_star)?.region(test_group, alpha)
}

/// Baseline flavors built from per-entry regions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineKind {
    /// Per-entry level `alpha`; no simultaneous guarantee.
    Unadjusted,
    /// Per-entry level `alpha / K`.
    Bonferroni,
}

/// Per-entry baseline builder over a unit-group calibration plan.
pub struct BaselineMachine<'a> {
    inner: ScmcMachine<'a>,
}

impl<'a> BaselineMachine<'a> {
    /// `plan` must have been assembled with group size 1 (conventionally
    /// `K * n` unit groups, matching the calibration budget of the
    /// simultaneous method).
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        obs: &'a PartialMatrix,
        plan: &'a CalibrationPlan,
        estimate: &'a CompletionEstimate,
        rule: PredictionRule,
        w: &'a WeightField,
        w_star: &'a WeightField,
    ) -> Result<Self> {
        if plan.k != 1 {
            return Err(Error::Config(format!(
                "baselines need a unit-group calibration plan, got K = {}",
                plan.k
            )));
        }
        Ok(Self { inner: ScmcMachine::new(obs, plan, estimate, rule, w, w_star)? })
    }

    /// Concatenates per-entry intervals of the requested flavor into one
    /// box-shaped region for the test group.
    pub fn region(
        &self,
        kind: BaselineKind,
        test_group: &IndexGroup,
        alpha: Real,
    ) -> Result<ConfidenceRegion> {
        let level = match kind {
            BaselineKind::Unadjusted => alpha,
            BaselineKind::Bonferroni => alpha / test_group.len() as Real,
        };
        let mut halfwidths = Vec::with_capacity(test_group.len());
        let mut centers = Vec::with_capacity(test_group.len());
        let mut clipped = false;
        let mut tau_hat: Real = 0.0;
        let mut weights_used = Vec::new();
        for idx in test_group.iter() {
            let singleton = IndexGroup::new(vec![idx])?;
            let entry_region = self.inner.region(&singleton, level)?;
            clipped |= entry_region.clipped;
            tau_hat = tau_hat.max(entry_region.tau_hat);
            let hw = match &entry_region.shape {
                RegionShape::Box { halfwidths } => halfwidths[0],
                RegionShape::Ball { radius } => *radius,
            };
            halfwidths.push(hw);
            centers.push(entry_region.centers[0]);
            weights_used = entry_region.weights_used;
        }
        Ok(ConfidenceRegion {
            group: test_group.clone(),
            rule: self.inner.rule,
            tau_hat,
            centers,
            shape: RegionShape::Box { halfwidths },
            weights_used,
            clipped,
        })
    }
}

/// One-shot baseline region.
#[allow(clippy::too_many_arguments)]
pub fn baseline_region(
    kind: BaselineKind,
    obs: &PartialMatrix,
    plan: &CalibrationPlan,
    estimate: &CompletionEstimate,
    rule: PredictionRule,
    test_group: &IndexGroup,
    alpha: Real,
    w: &WeightField,
    w_star: &WeightField,
) -> Result<ConfidenceRegion> {
    BaselineMachine::new(obs, plan, estimate, rule, w, w_star)?.region(kind, test_group, alpha)
}
