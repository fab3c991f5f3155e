//! Log-space numeric helpers shared across the crate.

use crate::scalar::Scalar;

/// Numerically stable `log(exp(a) + exp(b))`.
#[inline]
pub fn logaddexp<S: Scalar>(a: S, b: S) -> S {
    if a == S::neg_infinity() {
        return b;
    }
    if b == S::neg_infinity() {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Numerically stable `log(sum_i exp(x_i))`; `-inf` entries are ignored.
pub fn logsumexp<S: Scalar>(xs: &[S]) -> S {
    let hi = xs
        .iter()
        .cloned()
        .fold(S::neg_infinity(), |acc, x| if x > acc { x } else { acc });
    if hi == S::neg_infinity() || !hi.is_finite() {
        return hi;
    }
    let sum: S = xs.iter().map(|&x| (x - hi).exp()).sum();
    hi + sum.ln()
}

/// `log(1 - exp(x))` for `x < 0`.
#[inline]
pub fn log1mexp<S: Scalar>(x: S) -> S {
    debug_assert!(x < S::zero());
    if x > -S::LN_2() {
        // 1 - e^x is tiny; expm1 keeps the cancellation in check.
        (-x.exp_m1()).ln()
    } else {
        (-x.exp()).ln_1p()
    }
}

/// Table of `ln(k!)` for `k = 0..=max`.
#[derive(Debug, Clone)]
pub struct LogFactorials {
    table: Vec<f64>,
}

impl LogFactorials {
    pub fn up_to(max: usize) -> Self {
        let mut table = Vec::with_capacity(max + 1);
        table.push(0.0);
        for k in 1..=max {
            table.push(table[k - 1] + (k as f64).ln());
        }
        Self { table }
    }

    #[inline]
    pub fn ln_factorial(&self, k: usize) -> f64 {
        self.table[k]
    }

    /// `ln C(n, k)`; zero draws and full draws give 0.
    #[inline]
    pub fn ln_binomial(&self, n: usize, k: usize) -> f64 {
        assert!(k <= n, "binomial with k={k} > n={n}");
        self.table[n] - self.table[k] - self.table[n - k]
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }
}
