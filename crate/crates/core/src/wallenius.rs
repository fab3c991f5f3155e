//! Integral representation of the observation-set probability.
//!
//! Under weighted sampling without replacement, the probability of observing
//! a given index set admits the one-dimensional integral form
//! `P = int_0^1 Phi(tau; h) dtau` with
//! `Phi(tau; h) = h d tau^{h d - 1} prod_obs (1 - tau^{h w})`,
//! valid for any scale `h > 0`, where `d` is the total weight of the missing
//! entries. Swapping a calibration group with the test group multiplies the
//! integrand by a smooth ratio `eta_i(tau; h)`, so probability ratios reduce
//! to `eta_i` evaluated at the peak once `h` is tuned to center the peak at
//! `tau = 1/2`. This module provides the scale tuning (Newton-Raphson with a
//! bisection fallback), the peaked-integrand quadrature used as an accuracy
//! oracle, and an exact exponential-time enumeration for tiny instances.

use crate::error::{Error, Result};
use crate::math::{log1mexp, logsumexp, LogFactorials};
use crate::matrix::{PartialMatrix, WeightField};
use crate::scalar::Scalar;
use crate::Real;

/// Log of the integrand kernel:
/// `phi(tau; h) = log(h d) + (h d - 1) log tau + sum_obs log(1 - tau^{h w})`.
pub fn phi<S: Scalar>(tau: S, h: S, delta: S, obs_weights: &[S]) -> S {
    debug_assert!(tau > S::zero() && tau < S::one());
    let ln_tau = tau.ln();
    let mut acc = (h * delta).ln() + (h * delta - S::one()) * ln_tau;
    for &w in obs_weights {
        acc += log1mexp(h * w * ln_tau);
    }
    acc
}

/// Second derivative of `phi` with respect to `tau`.
pub fn phi_second<S: Scalar>(tau: S, h: S, delta: S, obs_weights: &[S]) -> S {
    let mut acc = -(h * delta - S::one()) / (tau * tau);
    for &w in obs_weights {
        let hw = h * w;
        let t_pow = (hw * tau.ln()).exp();
        let denom = S::one() - t_pow;
        acc -= hw * tau.powf(hw - S::from_f64(2.0)) * (t_pow + hw - S::one()) / (denom * denom);
    }
    acc
}

/// `z(h) = d - 1/h - sum_obs w / (2^{h w} - 1)`; its unique root above `1/d`
/// is the scale at which `Phi` peaks at `tau = 1/2`.
fn scale_residual<S: Scalar>(h: S, delta: S, obs_weights: &[S]) -> S {
    let ln2 = S::LN_2();
    let mut acc = delta - h.recip();
    for &w in obs_weights {
        acc -= w / (h * w * ln2).exp_m1();
    }
    acc
}

fn scale_residual_derivative<S: Scalar>(h: S, obs_weights: &[S]) -> S {
    let ln2 = S::LN_2();
    let mut acc = (h * h).recip();
    for &w in obs_weights {
        let e = (h * w * ln2).exp_m1();
        acc += w * w * ln2 * (e + S::one()) / (e * e);
    }
    acc
}

/// Finds `h > 1/delta` with `|z(h)| <= tol`, starting Newton-Raphson at
/// `1/delta` and falling back to bisection on
/// `[1/delta, (1 + n_obs / ln 2) / delta]` if the iteration stalls.
pub fn find_scale<S: Scalar>(obs_weights: &[S], delta: S, tol: S) -> Result<S> {
    if !(delta > S::zero()) {
        return Err(Error::Domain(format!("total missing weight {delta} must be positive")));
    }
    if obs_weights.iter().any(|w| !(*w > S::zero())) {
        return Err(Error::Domain("observed weights must be positive".into()));
    }
    // Floating-point floor: a sum of n_obs terms cannot beat ~eps * delta.
    let floor = S::from_f64(1e-12) * delta.max(S::one());
    let accept = |z: S| z.abs() <= tol || z.abs() <= floor;

    let mut h = delta.recip();
    for _ in 0..100 {
        let z = scale_residual(h, delta, obs_weights);
        if accept(z) {
            return Ok(h);
        }
        let dz = scale_residual_derivative(h, obs_weights);
        let next = h - z / dz;
        if !next.is_finite() || next <= S::zero() {
            break;
        }
        if (next - h).abs() <= S::from_f64(f64::EPSILON) * h {
            h = next;
            break;
        }
        h = next;
    }
    if accept(scale_residual(h, delta, obs_weights)) {
        return Ok(h);
    }

    // Bisection fallback on the bracket guaranteed to contain the root.
    let n = S::from_f64(obs_weights.len() as f64);
    let mut lo = delta.recip();
    let mut hi = (S::one() + n / S::LN_2()) / delta;
    if scale_residual(hi, delta, obs_weights) < S::zero() {
        return Err(Error::Numerical("scale bracket does not enclose the root".into()));
    }
    for _ in 0..200 {
        let mid = S::from_f64(0.5) * (lo + hi);
        let z = scale_residual(mid, delta, obs_weights);
        if accept(z) {
            return Ok(mid);
        }
        if z < S::zero() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::Numerical("scale tuning did not converge".into()))
}

/// Log of the swap ratio
/// `eta_i(tau; h) = tau^{h d_i} (d + d_i)/d * prod_k (1 - tau^{h w_test_k}) / (1 - tau^{h w_group_k})`,
/// where `d_i = sum_k (w_group_k - w_test_k)`.
pub fn log_eta<S: Scalar>(tau: S, h: S, delta: S, group_w: &[S], test_w: &[S]) -> S {
    debug_assert_eq!(group_w.len(), test_w.len());
    let ln_tau = tau.ln();
    let d_i: S = group_w.iter().zip(test_w).map(|(&g, &t)| g - t).sum();
    let mut acc = h * d_i * ln_tau + ((delta + d_i) / delta).ln();
    for (&g, &t) in group_w.iter().zip(test_w) {
        acc += log1mexp(h * t * ln_tau) - log1mexp(h * g * ln_tau);
    }
    acc
}

/// The swap ratio itself; `tau` must lie strictly inside `(0, 1)`.
pub fn eta<S: Scalar>(tau: S, h: S, delta: S, group_w: &[S], test_w: &[S]) -> Result<S> {
    if !(tau > S::zero() && tau < S::one()) {
        return Err(Error::Domain(format!("tau = {tau} outside (0, 1)")));
    }
    Ok(log_eta(tau, h, delta, group_w, test_w).exp())
}

// 15-point Kronrod nodes and weights on [-1, 1], with the embedded 7-point
// Gauss weights sitting on nodes 1, 3, 5, 7, 9, 11, 13.
const KRONROD_NODES: [f64; 15] = [
    -0.991455371120813,
    -0.949107912342759,
    -0.864864423359769,
    -0.741531185599394,
    -0.586087235467691,
    -0.405845151377397,
    -0.207784955007898,
    0.0,
    0.207784955007898,
    0.405845151377397,
    0.586087235467691,
    0.741531185599394,
    0.864864423359769,
    0.949107912342759,
    0.991455371120813,
];
const KRONROD_WEIGHTS: [f64; 15] = [
    0.022935322010529,
    0.063092092629979,
    0.104790010322250,
    0.140653259715525,
    0.169004726639267,
    0.190350578064785,
    0.204432940075298,
    0.209482141084728,
    0.204432940075298,
    0.190350578064785,
    0.169004726639267,
    0.140653259715525,
    0.104790010322250,
    0.063092092629979,
    0.022935322010529,
];
const GAUSS_WEIGHTS: [f64; 7] = [
    0.129484966168870,
    0.279705391489277,
    0.381830050505119,
    0.417959183673469,
    0.381830050505119,
    0.279705391489277,
    0.129484966168870,
];

/// Log-integral of `exp(g)` over `[a, b]` by one Gauss-Kronrod panel,
/// returning the (log K15, log G7) pair.
fn log_panel<S: Scalar>(g: &mut impl FnMut(S) -> S, a: S, b: S) -> (S, S) {
    let center = S::from_f64(0.5) * (a + b);
    let half = S::from_f64(0.5) * (b - a);
    let mut k_terms = [S::neg_infinity(); 15];
    let mut g_terms = [S::neg_infinity(); 7];
    for (j, (&node, &kw)) in KRONROD_NODES.iter().zip(&KRONROD_WEIGHTS).enumerate() {
        let value = g(center + half * S::from_f64(node));
        k_terms[j] = value + S::from_f64(kw.ln());
        if j % 2 == 1 {
            g_terms[j / 2] = value + S::from_f64(GAUSS_WEIGHTS[j / 2].ln());
        }
    }
    let ln_half = half.ln();
    (logsumexp(&k_terms) + ln_half, logsumexp(&g_terms) + ln_half)
}

/// Adaptive log-space quadrature of `int_0^1 exp(g(tau)) dtau` for a sharply
/// peaked `g`. The panel seeds straddle the peak location and width supplied
/// by the caller; panels are split until the embedded Gauss estimate agrees
/// with the Kronrod estimate to `rel_tol`.
pub fn log_integral_peaked<S: Scalar>(
    mut g: impl FnMut(S) -> S,
    peak: S,
    peak_scale: S,
    rel_tol: S,
) -> Result<S> {
    let mut knots: Vec<S> = vec![S::zero(), S::one()];
    for mult in [-8.0, -3.0, -1.0, 0.0, 1.0, 3.0, 8.0] {
        let t = peak + S::from_f64(mult) * peak_scale;
        if t > S::zero() && t < S::one() {
            knots.push(t);
        }
    }
    knots.sort_by(|a, b| a.partial_cmp(b).expect("knots are finite"));
    knots.dedup();

    let mut stack: Vec<(S, S, u32)> = knots.windows(2).map(|w| (w[0], w[1], 0u32)).collect();
    let mut pieces: Vec<S> = Vec::new();
    let mut dominant = S::neg_infinity();
    let mut panels = 0usize;
    while let Some((a, b, depth)) = stack.pop() {
        panels += 1;
        if panels > 20_000 {
            return Err(Error::Numerical("quadrature did not converge (panel budget)".into()));
        }
        let (k15, g7) = log_panel(&mut g, a, b);
        dominant = dominant.max(k15);
        // Panels many orders of magnitude below the dominant piece cannot
        // move the total; accept them as-is.
        let negligible = k15 + S::from_f64(60.0) < dominant;
        let disagreement = if k15 == S::neg_infinity() {
            S::zero()
        } else {
            (g7 - k15).exp_m1().abs()
        };
        if negligible || disagreement <= rel_tol || depth >= 48 {
            pieces.push(k15);
        } else {
            let mid = S::from_f64(0.5) * (a + b);
            stack.push((a, mid, depth + 1));
            stack.push((mid, b, depth + 1));
        }
    }
    Ok(logsumexp(&pieces))
}

/// Precomputed quantities shared by every weight evaluation against one
/// `(observed set, sampling weights)` pair.
#[derive(Debug, Clone)]
pub struct WalleniusContext {
    /// Total sampling weight of the missing entries.
    pub delta: Real,
    /// Scale tuned so the integrand peaks at `tau = 1/2`.
    pub h: Real,
    /// Peak location (1/2 by construction).
    pub tau_peak: Real,
    /// `phi(1/2; h)`.
    pub phi_peak: Real,
    /// `phi''(1/2; h)`; negative at a proper peak.
    pub phi_second: Real,
    /// `ln k!` up to the row count, for the column binomial ratios.
    pub log_factorials: LogFactorials,
    obs_weights: Vec<Real>,
}

impl WalleniusContext {
    pub fn build(obs: &PartialMatrix, w: &WeightField, tol: Real) -> Result<Self> {
        let observed = obs.observed_indices();
        w.require_positive(&observed)?;
        let obs_weights: Vec<Real> = observed.iter().map(|&i| w.get(i)).collect();
        let mut delta = 0.0;
        for idx in obs.missing_indices() {
            let weight = w.get(idx);
            if !(weight.is_finite() && weight > 0.0) {
                return Err(Error::Weight {
                    row: idx.row,
                    col: idx.col,
                    value: weight,
                    reason: "sampling weights must be strictly positive",
                });
            }
            delta += weight;
        }
        let h = find_scale(&obs_weights, delta, tol)?;
        let phi_peak = phi(0.5, h, delta, &obs_weights);
        let phi_second = phi_second(0.5, h, delta, &obs_weights);
        if !(phi_second < 0.0) {
            return Err(Error::Numerical(format!(
                "integrand curvature {phi_second} is not negative at the peak"
            )));
        }
        Ok(Self {
            delta,
            h,
            tau_peak: 0.5,
            phi_peak,
            phi_second,
            log_factorials: LogFactorials::up_to(obs.n_rows()),
            obs_weights,
        })
    }

    pub fn observed_weights(&self) -> &[Real] {
        &self.obs_weights
    }

    /// Width scale of the peak, `1 / sqrt(-phi''(1/2))`.
    pub fn peak_scale(&self) -> Real {
        (-self.phi_second).recip().sqrt().min(0.25)
    }

    /// Log-probability of the observed set by quadrature, optionally with a
    /// swap ratio `log eta` multiplied into the integrand.
    pub fn log_set_prob_quadrature(&self, log_eta_fn: Option<&dyn Fn(Real) -> Real>) -> Result<Real> {
        let (delta, h) = (self.delta, self.h);
        let obs = &self.obs_weights;
        let g = |tau: Real| {
            let base = phi(tau, h, delta, obs);
            match log_eta_fn {
                Some(f) => base + f(tau),
                None => base,
            }
        };
        log_integral_peaked(g, self.tau_peak, self.peak_scale(), 1e-11)
    }
}

/// Exact log-probability that an unordered set with the given weights is the
/// observed set, by dynamic programming over subsets (the sum over all
/// observation orders of telescoping products). Exponential in the set size;
/// intended for tiny test oracles only.
pub fn log_set_probability(set_weights: &[Real], total_weight: Real) -> Result<Real> {
    let m = set_weights.len();
    if m > 20 {
        return Err(Error::Capacity(format!("exact set probability limited to 20 items, got {m}")));
    }
    if m == 0 {
        return Ok(0.0);
    }
    let full = (1usize << m) - 1;
    let mut subset_weight = vec![0.0; full + 1];
    for mask in 1..=full {
        let low = mask.trailing_zeros() as usize;
        subset_weight[mask] = subset_weight[mask & (mask - 1)] + set_weights[low];
    }
    let mut log_prob = vec![Real::NEG_INFINITY; full + 1];
    log_prob[0] = 0.0;
    let mut terms = Vec::with_capacity(m);
    for mask in 1..=full {
        terms.clear();
        let mut rest = mask;
        while rest != 0 {
            let i = rest.trailing_zeros() as usize;
            rest &= rest - 1;
            let prev = mask & !(1 << i);
            let denominator = total_weight - subset_weight[prev];
            terms.push(log_prob[prev] + set_weights[i].ln() - denominator.ln());
        }
        log_prob[mask] = logsumexp(&terms);
    }
    Ok(log_prob[full])
}
