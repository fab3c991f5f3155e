//! Ratings-file ingestion (MovieLens `u.data` layout) and helpers.
//!
//! The file format is one record per line: `user_id item_id rating
//! timestamp`, tab- or whitespace-separated, with 1-based ids and ratings in
//! `[1, 5]`. Acquisition is manual (a path argument); nothing is downloaded.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rand::Rng;

use scmc_core::rng::stream;
use scmc_core::sampling::sample_without_replacement;
use scmc_core::{MatrixIndex, PartialMatrix, Real, WeightField};

use crate::error::{HarnessError, Result};

/// Loads a ratings table into a partial matrix with 0-based indices sized by
/// the largest ids present.
pub fn load_movielens(path: &Path) -> Result<PartialMatrix> {
    let text = std::fs::read_to_string(path)?;
    let mut entries: BTreeMap<MatrixIndex, Real> = BTreeMap::new();
    let mut n_rows = 0usize;
    let mut n_cols = 0usize;
    for (line_no, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(HarnessError::Data(format!(
                "line {}: expected 4 fields, found {}",
                line_no + 1,
                fields.len()
            )));
        }
        let parse_id = |s: &str, what: &str| -> Result<usize> {
            let id: usize = s
                .parse()
                .map_err(|e| HarnessError::Data(format!("line {}: bad {what}: {e}", line_no + 1)))?;
            if id == 0 {
                return Err(HarnessError::Data(format!(
                    "line {}: {what} must be 1-based",
                    line_no + 1
                )));
            }
            Ok(id - 1)
        };
        let user = parse_id(fields[0], "user id")?;
        let item = parse_id(fields[1], "item id")?;
        let rating: Real = fields[2]
            .parse()
            .map_err(|e| HarnessError::Data(format!("line {}: bad rating: {e}", line_no + 1)))?;
        if !(1.0..=5.0).contains(&rating) {
            return Err(HarnessError::Data(format!(
                "line {}: rating {rating} outside [1, 5]",
                line_no + 1
            )));
        }
        if entries.insert(MatrixIndex::new(user, item), rating).is_some() {
            return Err(HarnessError::Data(format!(
                "line {}: duplicate rating for user {} item {}",
                line_no + 1,
                user + 1,
                item + 1
            )));
        }
        n_rows = n_rows.max(user + 1);
        n_cols = n_cols.max(item + 1);
    }
    if entries.is_empty() {
        return Err(HarnessError::Data(format!("{} holds no ratings", path.display())));
    }
    Ok(PartialMatrix::from_entries(n_rows, n_cols, entries)?)
}

/// Restriction to a random `keep_rows x keep_cols` submatrix, reindexed
/// densely. Deterministic in the seed.
pub fn subsample(
    ratings: &PartialMatrix,
    keep_rows: usize,
    keep_cols: usize,
    seed: u64,
) -> Result<PartialMatrix> {
    if keep_rows > ratings.n_rows() || keep_cols > ratings.n_cols() {
        return Err(HarnessError::Config(format!(
            "cannot keep {keep_rows}x{keep_cols} of a {}x{} matrix",
            ratings.n_rows(),
            ratings.n_cols()
        )));
    }
    let mut rng = stream(seed, 0x5b5);
    let mut pick = |total: usize, keep: usize| -> Vec<usize> {
        let mut pool: Vec<usize> = (0..total).collect();
        let mut out = Vec::with_capacity(keep);
        for _ in 0..keep {
            let j = rng.random_range(0..pool.len());
            out.push(pool.swap_remove(j));
        }
        out.sort_unstable();
        out
    };
    let rows = pick(ratings.n_rows(), keep_rows);
    let cols = pick(ratings.n_cols(), keep_cols);
    let row_map: BTreeMap<usize, usize> = rows.iter().enumerate().map(|(j, &r)| (r, j)).collect();
    let col_map: BTreeMap<usize, usize> = cols.iter().enumerate().map(|(j, &c)| (c, j)).collect();
    let entries = ratings.iter().filter_map(|(idx, value)| {
        match (row_map.get(&idx.row), col_map.get(&idx.col)) {
            (Some(&r), Some(&c)) => Some((MatrixIndex::new(r, c), value)),
            _ => None,
        }
    });
    Ok(PartialMatrix::from_entries(keep_rows, keep_cols, entries)?)
}

/// Writes a dense weight grid: a `n_rows n_cols` header line followed by one
/// whitespace-separated row per line.
pub fn write_weight_grid(path: &Path, field: &WeightField) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "{} {}", field.n_rows(), field.n_cols())?;
    for r in 0..field.n_rows() {
        let row: Vec<String> = (0..field.n_cols())
            .map(|c| format!("{}", field.get(MatrixIndex::new(r, c))))
            .collect();
        writeln!(out, "{}", row.join(" "))?;
    }
    Ok(())
}

/// Reads a dense weight grid written by [`write_weight_grid`].
pub fn read_weight_grid(path: &Path) -> Result<WeightField> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| HarnessError::Data("empty weight grid".into()))?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse().map_err(|e| HarnessError::Data(format!("bad grid header: {e}"))))
        .collect::<Result<_>>()?;
    if dims.len() != 2 {
        return Err(HarnessError::Data("grid header must be `n_rows n_cols`".into()));
    }
    let mut values = Vec::with_capacity(dims[0] * dims[1]);
    for (line_no, line) in lines.enumerate() {
        for token in line.split_whitespace() {
            values.push(token.parse::<Real>().map_err(|e| {
                HarnessError::Data(format!("grid line {}: {e}", line_no + 2))
            })?);
        }
    }
    if values.len() != dims[0] * dims[1] {
        return Err(HarnessError::Data(format!(
            "grid holds {} values, expected {}",
            values.len(),
            dims[0] * dims[1]
        )));
    }
    Ok(WeightField::new(dims[0], dims[1], values)?)
}

/// Writes a synthetic ratings table in the `u.data` layout: a low-rank
/// preference model quantized to 1..5 stars, observed through
/// popularity-skewed sampling without replacement. Useful for exercising the
/// ingestion pipeline offline.
pub fn synthesize_ratings_file(
    path: &Path,
    n_users: usize,
    n_items: usize,
    n_ratings: usize,
    seed: u64,
) -> Result<()> {
    use rand_distr::{Distribution, StandardNormal};
    if n_ratings > n_users * n_items {
        return Err(HarnessError::Config("more ratings than cells".into()));
    }
    let mut rng = stream(seed, 0xda7a);
    let rank = 6;
    let normal = |rng: &mut scmc_core::rng::SeedableStream| -> Real { StandardNormal.sample(rng) };
    let u = nalgebra::DMatrix::from_fn(n_users, rank, |_, _| 0.6 * normal(&mut rng));
    let v = nalgebra::DMatrix::from_fn(n_items, rank, |_, _| 0.6 * normal(&mut rng));
    let user_bias: Vec<Real> = (0..n_users).map(|_| 0.5 * normal(&mut rng)).collect();
    let item_bias: Vec<Real> = (0..n_items).map(|_| 0.8 * normal(&mut rng)).collect();

    // Activity skew: users and items with heavier traffic.
    let user_act: Vec<Real> = (0..n_users).map(|_| (0.8 * normal(&mut rng)).exp()).collect();
    let item_act: Vec<Real> = (0..n_items).map(|_| (1.1 * normal(&mut rng)).exp()).collect();
    let weights = WeightField::from_fn(n_users, n_items, |r, c| user_act[r] * item_act[c]);
    let grid: Vec<MatrixIndex> = (0..n_users)
        .flat_map(|r| (0..n_items).map(move |c| MatrixIndex::new(r, c)))
        .collect();
    let observed = sample_without_replacement(&grid, n_ratings, &weights, &mut rng)?;

    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for (j, idx) in observed.iter().enumerate() {
        let score = 3.2
            + user_bias[idx.row]
            + item_bias[idx.col]
            + u.row(idx.row).dot(&v.row(idx.col))
            + 0.4 * normal(&mut rng);
        let stars = score.round().clamp(1.0, 5.0) as u8;
        writeln!(out, "{}\t{}\t{}\t{}", idx.row + 1, idx.col + 1, stars, 874_000_000 + j)?;
    }
    Ok(())
}
