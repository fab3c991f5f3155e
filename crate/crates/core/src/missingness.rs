//! Estimation of the sampling weights from the observation mask.
//!
//! The weights are modeled through a logistic link `w = 1 / (1 + exp(-A))`
//! with `A` constrained in infinity norm by `nu` and in nuclear norm by
//! `nu * sqrt(rho * n_r * n_c)`. The Bernoulli log-likelihood of the mask is
//! maximized by projected gradient ascent with a backtracking line search;
//! the projection alternates entrywise clipping with singular-value clipping
//! onto the nuclear ball.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::matrix::WeightField;
use crate::Real;

/// Fitted low-rank logistic missingness model.
#[derive(Debug, Clone)]
pub struct MissingnessModel {
    /// The estimated logit matrix.
    pub a_hat: DMatrix<Real>,
    /// Rank bound `rho` used by the nuclear constraint.
    pub rank_bound: usize,
    /// Infinity-norm bound `nu`.
    pub inf_bound: Real,
    /// Estimated sampling weights `1 / (1 + exp(-A))`, all in `(0, 1)`.
    pub w_hat: WeightField,
    /// Final log-likelihood.
    pub log_likelihood: Real,
}

fn sigmoid(t: Real) -> Real {
    1.0 / (1.0 + (-t).exp())
}

fn log_likelihood(mask: &DMatrix<bool>, a: &DMatrix<Real>) -> Real {
    let mut ll = 0.0;
    for (z, &t) in mask.iter().zip(a.iter()) {
        // log sigma(t) = -log(1 + e^{-t}); log(1 - sigma(t)) = -log(1 + e^t).
        ll -= if *z { (-t).exp().ln_1p() } else { t.exp().ln_1p() };
    }
    ll
}

/// Euclidean projection of the singular values onto the L1 ball of radius
/// `budget` (the nuclear-ball projection), followed by reconstruction.
fn project_nuclear(a: &DMatrix<Real>, budget: Real) -> Result<DMatrix<Real>> {
    let svd = a.clone().svd(true, true);
    let sum: Real = svd.singular_values.iter().sum();
    if sum <= budget {
        return Ok(a.clone());
    }
    // Water-filling threshold for the simplex projection.
    let mut values: Vec<Real> = svd.singular_values.iter().cloned().collect();
    values.sort_by(|x, y| y.partial_cmp(x).expect("singular values are finite"));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (j, &v) in values.iter().enumerate() {
        cumulative += v;
        let candidate = (cumulative - budget) / (j + 1) as Real;
        if v - candidate > 0.0 {
            theta = candidate;
        } else {
            break;
        }
    }
    let mut svd = svd;
    for v in svd.singular_values.iter_mut() {
        *v = (*v - theta).max(0.0);
    }
    svd.recompose()
        .map_err(|e| Error::Numerical(format!("SVD recomposition failed: {e}")))
}

fn project(a: &DMatrix<Real>, inf_bound: Real, nuclear_budget: Real) -> Result<DMatrix<Real>> {
    // Alternate the two clippings until the point satisfies both constraints;
    // each clipping is the identity on feasible points, so the composite is a
    // fixpoint map and feasible iterates are left untouched.
    let mut out = a.map(|t| t.clamp(-inf_bound, inf_bound));
    for _ in 0..25 {
        let projected = project_nuclear(&out, nuclear_budget)?;
        let overshoot = projected.iter().fold(0.0 as Real, |m, t| m.max(t.abs() - inf_bound));
        out = projected.map(|t| t.clamp(-inf_bound, inf_bound));
        if overshoot <= 1e-9 * inf_bound {
            return Ok(out);
        }
    }
    Ok(out)
}

/// Maximizes the masked Bernoulli likelihood over the doubly constrained
/// logit matrix and returns the fitted weights.
pub fn estimate_weights(
    mask: &DMatrix<bool>,
    rank_bound: usize,
    inf_bound: Real,
    max_iters: usize,
    step: Real,
) -> Result<MissingnessModel> {
    let (n_rows, n_cols) = mask.shape();
    if n_rows == 0 || n_cols == 0 {
        return Err(Error::Data("empty observation mask".into()));
    }
    let observed = mask.iter().filter(|z| **z).count();
    if observed == 0 || observed == n_rows * n_cols {
        return Err(Error::Data(
            "mask is fully observed or fully missing; the logistic model is degenerate".into(),
        ));
    }
    if rank_bound == 0 || inf_bound <= 0.0 || step <= 0.0 {
        return Err(Error::Config("rank, inf bound and step must be positive".into()));
    }

    let nuclear_budget = inf_bound * ((rank_bound * n_rows * n_cols) as Real).sqrt();
    // Start at the mean-matched constant logit (clamped into the feasible
    // set), so the all-ones gradient component vanishes from the outset.
    let rate = observed as Real / (n_rows * n_cols) as Real;
    let base = (rate / (1.0 - rate)).ln().clamp(-inf_bound, inf_bound);
    let base = base.clamp(
        -nuclear_budget / ((n_rows * n_cols) as Real).sqrt(),
        nuclear_budget / ((n_rows * n_cols) as Real).sqrt(),
    );
    let mut a = DMatrix::<Real>::from_element(n_rows, n_cols, base);
    let mut ll = log_likelihood(mask, &a);

    for _ in 0..max_iters {
        let gradient = DMatrix::from_fn(n_rows, n_cols, |r, c| {
            let z = if mask[(r, c)] { 1.0 } else { 0.0 };
            z - sigmoid(a[(r, c)])
        });
        // Backtracking: shrink the step until the projected point improves
        // the likelihood.
        let mut t = step;
        let mut accepted = None;
        for _ in 0..30 {
            let candidate = project(&(&a + &gradient * t), inf_bound, nuclear_budget)?;
            let candidate_ll = log_likelihood(mask, &candidate);
            if candidate_ll >= ll {
                accepted = Some((candidate, candidate_ll));
                break;
            }
            t *= 0.5;
        }
        let Some((next, next_ll)) = accepted else {
            break; // no ascent direction left at this scale
        };
        let gain = next_ll - ll;
        a = next;
        ll = next_ll;
        if gain <= 1e-7 * ll.abs().max(1.0) {
            break;
        }
    }

    let w_hat = WeightField::from_fn(n_rows, n_cols, |r, c| sigmoid(a[(r, c)]));
    Ok(MissingnessModel { a_hat: a, rank_bound, inf_bound, w_hat, log_likelihood: ll })
}
