//! Point-estimate matrix completion behind a uniform interface.
//!
//! The default solver is alternating least squares on the observed entries
//! with ridge regularization; a grand-mean filler is included as a
//! deliberately weak baseline for stressing the model-agnostic coverage
//! guarantee.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::matrix::{MatrixIndex, PartialMatrix};
use crate::Real;

/// Dense completion estimate, with the factor pair kept when the solver is
/// factor-based (the worst-slab test weights need the latent features).
#[derive(Debug, Clone)]
pub struct CompletionEstimate {
    pub estimate: DMatrix<Real>,
    pub factors: Option<(DMatrix<Real>, DMatrix<Real>)>,
}

impl CompletionEstimate {
    #[inline]
    pub fn at(&self, idx: MatrixIndex) -> Real {
        self.estimate[(idx.row, idx.col)]
    }
}

/// Completion solver selection plus hyperparameters.
#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub kind: SolverKind,
    pub rank: usize,
    pub regularization: Real,
    pub max_iters: usize,
    pub tol: Real,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverKind {
    Als,
    Mean,
}

impl SolverKind {
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "als" => Ok(Self::Als),
            "mean" => Ok(Self::Mean),
            other => Err(Error::Config(format!("unknown solver '{other}'"))),
        }
    }
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { kind: SolverKind::Als, rank: 5, regularization: 0.1, max_iters: 100, tol: 1e-6 }
    }
}

/// Dispatches to the configured solver.
pub fn complete(
    train: &PartialMatrix,
    config: &SolverConfig,
    rng: &mut impl Rng,
) -> Result<CompletionEstimate> {
    match config.kind {
        SolverKind::Als => als_complete(
            train,
            config.rank,
            config.regularization,
            config.max_iters,
            config.tol,
            rng,
        ),
        SolverKind::Mean => mean_complete(train),
    }
}

/// Fills every entry with the grand mean of the observed ratings.
pub fn mean_complete(train: &PartialMatrix) -> Result<CompletionEstimate> {
    if train.is_empty() {
        return Err(Error::Data("cannot complete an empty training set".into()));
    }
    let mean = train.iter().map(|(_, v)| v).sum::<Real>() / train.observed_count() as Real;
    Ok(CompletionEstimate {
        estimate: DMatrix::from_element(train.n_rows(), train.n_cols(), mean),
        factors: None,
    })
}

/// Alternating ridge-regularized least squares on the observed entries.
///
/// The squared-residual-plus-ridge objective is non-increasing across
/// iterations; the loop stops when its relative decrease falls below `tol`.
/// Factors are initialized i.i.d. uniform on `(-sqrt(3/rank), sqrt(3/rank))`
/// (symmetric, variance `1/rank`) from the supplied generator.
pub fn als_complete(
    train: &PartialMatrix,
    rank: usize,
    regularization: Real,
    max_iters: usize,
    tol: Real,
    rng: &mut impl Rng,
) -> Result<CompletionEstimate> {
    if train.is_empty() {
        return Err(Error::Data("cannot complete an empty training set".into()));
    }
    if rank < 1 || rank > train.n_rows().min(train.n_cols()) {
        return Err(Error::Config(format!(
            "rank {rank} outside [1, {}]",
            train.n_rows().min(train.n_cols())
        )));
    }
    if regularization < 0.0 {
        return Err(Error::Config("regularization must be nonnegative".into()));
    }

    let (n_rows, n_cols) = (train.n_rows(), train.n_cols());
    let mut by_row: Vec<Vec<(usize, Real)>> = vec![Vec::new(); n_rows];
    let mut by_col: Vec<Vec<(usize, Real)>> = vec![Vec::new(); n_cols];
    for (idx, value) in train.iter() {
        by_row[idx.row].push((idx.col, value));
        by_col[idx.col].push((idx.row, value));
    }

    let half_width = (3.0 / rank as Real).sqrt();
    let mut init = || rng.random::<Real>() * 2.0 * half_width - half_width;
    let mut u = DMatrix::from_fn(n_rows, rank, |_, _| init());
    let mut v = DMatrix::from_fn(n_cols, rank, |_, _| init());

    let mut previous = objective(&by_row, &u, &v, regularization);
    for _ in 0..max_iters {
        solve_block(&mut u, &v, &by_row, rank, regularization)?;
        solve_block(&mut v, &u, &by_col, rank, regularization)?;
        let current = objective(&by_row, &u, &v, regularization);
        let scale = previous.abs().max(1e-12);
        if (previous - current) / scale < tol {
            previous = current;
            break;
        }
        previous = current;
    }
    let _ = previous;

    let estimate = &u * v.transpose();
    Ok(CompletionEstimate { estimate, factors: Some((u, v)) })
}

/// Observed-entry squared error plus the ridge penalty on both factors.
pub fn als_objective(
    train: &PartialMatrix,
    u: &DMatrix<Real>,
    v: &DMatrix<Real>,
    regularization: Real,
) -> Real {
    let mut by_row: Vec<Vec<(usize, Real)>> = vec![Vec::new(); train.n_rows()];
    for (idx, value) in train.iter() {
        by_row[idx.row].push((idx.col, value));
    }
    objective(&by_row, u, v, regularization)
}

fn objective(
    by_row: &[Vec<(usize, Real)>],
    u: &DMatrix<Real>,
    v: &DMatrix<Real>,
    regularization: Real,
) -> Real {
    let mut sse = 0.0;
    for (r, entries) in by_row.iter().enumerate() {
        for &(c, value) in entries {
            let pred: Real = u.row(r).dot(&v.row(c));
            sse += (value - pred) * (value - pred);
        }
    }
    let ridge = u.iter().map(|x| x * x).sum::<Real>() + v.iter().map(|x| x * x).sum::<Real>();
    sse + regularization * ridge
}

/// One half-step: for every row of `target`, solve the ridge normal equations
/// against the fixed factor.
fn solve_block(
    target: &mut DMatrix<Real>,
    fixed: &DMatrix<Real>,
    observed: &[Vec<(usize, Real)>],
    rank: usize,
    regularization: Real,
) -> Result<()> {
    for (i, entries) in observed.iter().enumerate() {
        if entries.is_empty() {
            // Unobserved row or column: the ridge term drives it to zero.
            if regularization > 0.0 {
                target.row_mut(i).fill(0.0);
            }
            continue;
        }
        let mut gram = DMatrix::<Real>::zeros(rank, rank);
        let mut rhs = DVector::<Real>::zeros(rank);
        for &(j, value) in entries {
            let f = fixed.row(j);
            for a in 0..rank {
                rhs[a] += value * f[a];
                for b in a..rank {
                    gram[(a, b)] += f[a] * f[b];
                }
            }
        }
        for a in 0..rank {
            gram[(a, a)] += regularization;
            for b in 0..a {
                gram[(a, b)] = gram[(b, a)];
            }
        }
        let solution = match gram.clone().cholesky() {
            Some(chol) => chol.solve(&rhs),
            None => {
                // Singular normal equations (rank-deficient, reg = 0): fall
                // back to a pivoted LU solve with a tiny jitter.
                let mut jittered = gram;
                for a in 0..rank {
                    jittered[(a, a)] += 1e-12;
                }
                jittered
                    .lu()
                    .solve(&rhs)
                    .ok_or_else(|| Error::Numerical("ALS normal equations are singular".into()))?
            }
        };
        target.row_mut(i).copy_from(&solution.transpose());
    }
    Ok(())
}
