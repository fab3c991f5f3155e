//! Synthetic ground-truth matrices and observation weight fields.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use scmc_core::{Real, WeightField};

fn normal(rng: &mut impl Rng) -> Real {
    StandardNormal.sample(rng)
}

/// Signal-plus-noise matrix `M = 0.5 * Mbar + 0.5 * N` where `Mbar` is a
/// random rank-`rank` factorization with standard normal factors and
/// `N = 0.1 * eps + 0.9 * 1 epstilde^T` mixes i.i.d. noise with a
/// column-constant component; each column's constant is `N(0, 1)` with
/// probability `1 - gamma` and `N(mu, 0.1^2)` with probability `gamma`.
pub fn gen_uniform_synthetic(
    n_rows: usize,
    n_cols: usize,
    rank: usize,
    mu: Real,
    gamma: Real,
    rng: &mut impl Rng,
) -> DMatrix<Real> {
    let u = DMatrix::from_fn(n_rows, rank, |_, _| normal(rng));
    let v = DMatrix::from_fn(n_cols, rank, |_, _| normal(rng));
    let signal = u * v.transpose();

    let column_noise: Vec<Real> = (0..n_cols)
        .map(|_| {
            if rng.random::<Real>() < gamma {
                mu + 0.1 * normal(rng)
            } else {
                normal(rng)
            }
        })
        .collect();
    DMatrix::from_fn(n_rows, n_cols, |r, c| {
        0.5 * signal[(r, c)] + 0.5 * (0.1 * normal(rng) + 0.9 * column_noise[c])
    })
}

/// Low-rank signal plus i.i.d. `N(mu, 0.1^2)` noise (the heterogeneous
/// observation suites use this plain ground truth).
pub fn gen_plain_lowrank(
    n_rows: usize,
    n_cols: usize,
    rank: usize,
    mu: Real,
    rng: &mut impl Rng,
) -> DMatrix<Real> {
    let u = DMatrix::from_fn(n_rows, rank, |_, _| normal(rng));
    let v = DMatrix::from_fn(n_cols, rank, |_, _| normal(rng));
    let signal = u * v.transpose();
    DMatrix::from_fn(n_rows, n_cols, |r, c| signal[(r, c)] + mu + 0.1 * normal(rng))
}

/// Column-constant sampling weights: weight `s` on a Bernoulli(`gamma`)
/// subset of columns, 1 elsewhere.
pub fn gen_hetero_weights(
    n_rows: usize,
    n_cols: usize,
    s: Real,
    gamma: Real,
    rng: &mut impl Rng,
) -> WeightField {
    let sparse: Vec<bool> = (0..n_cols).map(|_| rng.random::<Real>() < gamma).collect();
    WeightField::from_fn(n_rows, n_cols, |_, c| if sparse[c] { s } else { 1.0 })
}

/// Polynomially growing weights over the flattened (1-based, column-major)
/// grid: `w[r, c] = (n_rows * c + r + 1)^s`.
pub fn power_weights(n_rows: usize, n_cols: usize, s: Real) -> WeightField {
    WeightField::from_fn(n_rows, n_cols, |r, c| ((n_rows * c + r + 1) as Real).powf(s))
}
