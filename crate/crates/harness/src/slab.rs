//! Worst-slab test weights.
//!
//! An oracle construction that up-weights the region of the matrix where the
//! point estimate is least accurate: absolute residuals on a held-out subset
//! of missing entries are regressed on the latent features `(U_r, V_c)`, the
//! slab `a <= v^T y <= b` of minimum relative mass `delta` with the largest
//! mean residual is located by grid search, and the weights decay as a
//! Gaussian with scale `(b - a) / 5` outside the slab.

use nalgebra::{DMatrix, DVector};

use scmc_core::{CompletionEstimate, Error, MatrixIndex, Real, Result, WeightField};

/// Builds the worst-slab test weight field over the full grid. `holdout`
/// must contain missing entries with known ground truth; `delta >= 1` (the
/// whole-matrix slab) degenerates to uniform weights.
pub fn worst_slab_weights(
    truth: &DMatrix<Real>,
    estimate: &CompletionEstimate,
    holdout: &[MatrixIndex],
    delta: Real,
) -> Result<WeightField> {
    let (n_rows, n_cols) = truth.shape();
    if delta >= 1.0 {
        return Ok(WeightField::uniform(n_rows, n_cols));
    }
    if !(delta > 0.0) {
        return Err(Error::Config(format!("slab mass {delta} must be positive")));
    }
    let Some((u, v)) = estimate.factors.as_ref() else {
        return Err(Error::Config("worst-slab weights need a factor-based estimate".into()));
    };
    let latent = u.ncols();
    if holdout.len() < 2 * latent + 2 {
        return Err(Error::Data(format!(
            "holdout of {} entries cannot fit {} latent features",
            holdout.len(),
            2 * latent
        )));
    }

    // Least squares of |error| on [1, U_r, V_c].
    let dim = 2 * latent + 1;
    let mut design = DMatrix::<Real>::zeros(holdout.len(), dim);
    let mut response = DVector::<Real>::zeros(holdout.len());
    for (row, idx) in holdout.iter().enumerate() {
        design[(row, 0)] = 1.0;
        for j in 0..latent {
            design[(row, 1 + j)] = u[(idx.row, j)];
            design[(row, 1 + latent + j)] = v[(idx.col, j)];
        }
        response[row] = (estimate.at(*idx) - truth[(idx.row, idx.col)]).abs();
    }
    let gram = design.transpose() * &design;
    let rhs = design.transpose() * &response;
    let coef = gram
        .clone()
        .cholesky()
        .map(|c| c.solve(&rhs))
        .or_else(|| (gram + DMatrix::identity(dim, dim) * 1e-10).cholesky().map(|c| c.solve(&rhs)))
        .ok_or_else(|| Error::Numerical("worst-slab regression is singular".into()))?;

    // Slab scores on the holdout, sorted for the threshold search.
    let project = |idx: &MatrixIndex| {
        let mut z = 0.0;
        for j in 0..latent {
            z += coef[1 + j] * u[(idx.row, j)] + coef[1 + latent + j] * v[(idx.col, j)];
        }
        z
    };
    let mut scored: Vec<(Real, Real)> = holdout
        .iter()
        .enumerate()
        .map(|(row, idx)| (project(idx), response[row]))
        .collect();
    scored.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("slab scores are finite"));
    let spread = scored.last().unwrap().0 - scored[0].0;
    if !(spread > 0.0) {
        eprintln!("worst-slab: degenerate latent features, falling back to uniform weights");
        return Ok(WeightField::uniform(n_rows, n_cols));
    }

    // Grid search over quantile pairs for the densest bad slab.
    let prefix: Vec<Real> = std::iter::once(0.0)
        .chain(scored.iter().scan(0.0, |acc, (_, r)| {
            *acc += r;
            Some(*acc)
        }))
        .collect();
    let m = scored.len();
    let min_count = ((delta * m as Real).ceil() as usize).max(1);
    let grid: Vec<usize> = (0..=40).map(|q| (q * (m - 1)) / 40).collect();
    let mut best: Option<(Real, Real, Real)> = None; // (mean residual, a, b)
    for (gi, &lo) in grid.iter().enumerate() {
        for &hi in &grid[gi..] {
            if hi + 1 - lo < min_count {
                continue;
            }
            let mean = (prefix[hi + 1] - prefix[lo]) / (hi + 1 - lo) as Real;
            let bounds = (scored[lo].0, scored[hi].0);
            if best.map(|(b, _, _)| mean > b).unwrap_or(true) {
                best = Some((mean, bounds.0, bounds.1));
            }
        }
    }
    let Some((_, a, b)) = best else {
        eprintln!("worst-slab: no feasible slab, falling back to uniform weights");
        return Ok(WeightField::uniform(n_rows, n_cols));
    };
    if !(b > a) {
        eprintln!("worst-slab: zero-width slab, falling back to uniform weights");
        return Ok(WeightField::uniform(n_rows, n_cols));
    }

    // Gaussian-smoothed indicator of the slab over the whole grid.
    let sigma = (b - a) / 5.0;
    let field = WeightField::from_fn(n_rows, n_cols, |r, c| {
        let z = project(&MatrixIndex::new(r, c));
        if z < a {
            (-(z - a) * (z - a) / (2.0 * sigma * sigma)).exp()
        } else if z > b {
            (-(z - b) * (z - b) / (2.0 * sigma * sigma)).exp()
        } else {
            1.0
        }
    });
    Ok(field)
}
