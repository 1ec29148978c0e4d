//! Recovery-condition calculus.
//!
//! * `g_i(t) = (t^i - 1)(t + 1) / ((t^i + 1)(t - 1))` bounds the
//!   `l_{2,1}/l_2` ratio of an `alpha`-decaying tail and drives the decay
//!   condition on `alpha`.
//! * `h_hat_i(t) = (t + i)^2 / (t^2 + i)` and its inverse `h_i` drive the
//!   per-position ratio thresholds of partial recovery.
//!
//! Every predicate returns a [`ConditionVerdict`] whose `margin` is positive
//! exactly when the condition holds.

use serde::Serialize;

use crate::block::{decay_profile, BlockVector};
use crate::error::{Error, Result};
use crate::tol;

pub const SQRT2_2: f64 = std::f64::consts::FRAC_1_SQRT_2;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionVerdict {
    pub satisfied: bool,
    pub threshold: f64,
    pub margin: f64,
    pub detail: &'static str,
}

impl ConditionVerdict {
    fn new(margin: f64, threshold: f64, detail: &'static str) -> Self {
        Self {
            satisfied: margin > 0.0,
            threshold,
            margin,
            detail,
        }
    }
}

/// `g_i(t)` for `t >= 1`, with the limit value `g_i(1) = i`.
pub fn g(i: usize, t: f64) -> Result<f64> {
    if i == 0 {
        return Err(Error::invalid("g_i needs i >= 1"));
    }
    if !(t >= 1.0) {
        return Err(Error::invalid(format!("g_i(t) needs t >= 1, got {t}")));
    }
    if t == 1.0 {
        return Ok(i as f64);
    }
    if i == 1 {
        return Ok(1.0);
    }
    // (t^i - 1)/(t - 1) is evaluated through expm1/ln_1p so t -> 1 stays accurate.
    let u = t - 1.0;
    let lt = (i as f64) * u.ln_1p();
    if lt > 700.0 {
        // t^i overflows; (t^i - 1)/(t^i + 1) == 1 to machine precision
        return Ok((t + 1.0) / u);
    }
    let tim1 = lt.exp_m1();
    Ok(tim1 / u * (t + 1.0) / (tim1 + 2.0))
}

/// `g_K^{-1}(s)`: 1 when `s >= K`, else the unique `t > 1` with `g_K(t) = s`.
pub fn g_inverse(k: usize, s: f64) -> Result<f64> {
    if k == 0 {
        return Err(Error::invalid("g_K^{-1} needs K >= 1"));
    }
    if !(s > 1.0) {
        return Err(Error::invalid(format!(
            "g_K^{{-1}}(s) needs s > 1, got {s}"
        )));
    }
    if s >= k as f64 {
        return Ok(1.0);
    }
    let mut lo = 1.0 + tol::G_INVERSE_FLOOR;
    if g(k, lo)? <= s {
        return Ok(lo);
    }
    let mut hi = 2.0;
    while g(k, hi)? >= s {
        lo = hi;
        hi *= 2.0;
    }
    // g_K is strictly decreasing: g(lo) > s > g(hi)
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(k, mid)? > s {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `h_hat_i(t) = (t + i)^2 / (t^2 + i)`.
pub fn h_hat(i: usize, t: f64) -> f64 {
    let i = i as f64;
    (t + i) * (t + i) / (t * t + i)
}

/// Inverse of [`h_hat`] on `(1, 1 + i]`; `h_i(1 + i) = 1`.
pub fn h(i: usize, s: f64) -> Result<f64> {
    if i == 0 {
        return Err(Error::invalid("h_i needs i >= 1"));
    }
    let fi = i as f64;
    if !(s > 1.0 && s <= fi + 1.0) {
        return Err(Error::invalid(format!(
            "h_{i}(s) needs 1 < s <= {}, got {s}",
            fi + 1.0
        )));
    }
    if s == fi + 1.0 {
        return Ok(1.0);
    }
    // i^2 s + (s - s^2) i == i s ((i + 1) - s)
    let radicand = fi * s * ((fi + 1.0) - s);
    Ok((fi + radicand.sqrt()) / (s - 1.0))
}

/// `delta_{K+1} < 1 / sqrt(K + 1)`.
pub fn check_general_sharp(k: usize, delta: f64) -> ConditionVerdict {
    let threshold = 1.0 / ((k + 1) as f64).sqrt();
    ConditionVerdict::new(threshold - delta, threshold, "general: delta < 1/sqrt(K+1)")
}

/// `delta_{K+1} < sqrt(2)/2` and `alpha > g_K^{-1}(delta^{-2} - 1)`.
///
/// When the constraint on `delta` fails the verdict reports that bound as its
/// threshold; otherwise the threshold is the required decay factor.
pub fn check_decaying(k: usize, delta: f64, alpha: f64) -> Result<ConditionVerdict> {
    if !(delta >= 0.0) || !(alpha >= 1.0) {
        return Err(Error::invalid("check_decaying needs delta >= 0 and alpha >= 1"));
    }
    if delta >= SQRT2_2 {
        return Ok(ConditionVerdict::new(
            SQRT2_2 - delta,
            SQRT2_2,
            "decaying: delta < sqrt(2)/2",
        ));
    }
    let threshold = decay_threshold(k, delta)?;
    Ok(ConditionVerdict::new(
        alpha - threshold,
        threshold,
        "decaying: alpha > g_K^-1(delta^-2 - 1)",
    ))
}

/// `g_K^{-1}(delta^{-2} - 1)` for `0 <= delta < sqrt(2)/2`.
pub fn decay_threshold(k: usize, delta: f64) -> Result<f64> {
    if delta == 0.0 {
        return Ok(1.0);
    }
    g_inverse(k, delta.powi(-2) - 1.0)
}

/// Smallest block norm for which noisy recovery under the general condition
/// is guaranteed: `2 eps / (1 - sqrt(K + 1) delta)`.
pub fn noise_min_magnitude_general(k: usize, delta: f64, eps: f64) -> Result<f64> {
    if !(eps >= 0.0) {
        return Err(Error::invalid("eps must be >= 0"));
    }
    let v = check_general_sharp(k, delta);
    if !v.satisfied {
        return Err(Error::ConditionViolated(format!(
            "delta = {delta} >= 1/sqrt(K+1) = {}",
            v.threshold
        )));
    }
    Ok(2.0 * eps / (1.0 - ((k + 1) as f64).sqrt() * delta))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayingNoiseBound {
    /// The auxiliary constant `s` the bound was evaluated at.
    pub s: f64,
    pub bound: f64,
}

/// Magnitude bound for noisy recovery of `alpha`-decaying signals.
///
/// Uses the largest admissible auxiliary constant,
/// `s* = 1 / sqrt(1 + min(g_K(alpha), K))` kept inside `(delta, sqrt(2)/2)`,
/// which gives the smallest bound
/// `2 eps / (1 - sqrt(1 + min(s*^-2 - 1, K)) delta)`.
pub fn noise_min_magnitude_decaying(
    k: usize,
    delta: f64,
    alpha: f64,
    eps: f64,
) -> Result<DecayingNoiseBound> {
    if !(eps >= 0.0) {
        return Err(Error::invalid("eps must be >= 0"));
    }
    let v = check_decaying(k, delta, alpha)?;
    if !v.satisfied {
        return Err(Error::ConditionViolated(format!(
            "decay condition fails for K = {k}, delta = {delta}, alpha = {alpha} ({})",
            v.detail
        )));
    }
    let kf = k as f64;
    let raw = 1.0 / (1.0 + g(k, alpha)?.min(kf)).sqrt();
    let s = raw.min(SQRT2_2 - 1e-12).max(delta + 1e-12);

    let s_arg = s.powi(-2) - 1.0;
    let t_s = g_inverse(k, s_arg)?;
    // s^-2 - 1 >= K is the branch that falls back to the general condition,
    // where both inverses equal 1 and the strict ordering cannot hold.
    let feasible = delta < s
        && s < SQRT2_2
        && (decay_threshold(k, delta)? < t_s || s_arg >= kf)
        && t_s <= alpha * (1.0 + 1e-12);
    if !feasible {
        return Err(Error::ConditionViolated(format!(
            "no admissible s for K = {k}, delta = {delta}, alpha = {alpha}"
        )));
    }
    let bound = 2.0 * eps / (1.0 - (1.0 + s_arg.min(kf)).sqrt() * delta);
    Ok(DecayingNoiseBound { s, bound })
}

/// Ratio threshold that position `j` (1-based) must beat:
/// `h_{K-j}(delta^{-2} - 1)`, taken as 1 when the argument leaves the domain
/// of `h_{K-j}` from above. Position `K` has no constraint and yields 1.
pub fn partial_threshold(k: usize, j: usize, delta: f64) -> Result<f64> {
    if j == 0 || j > k {
        return Err(Error::invalid(format!("position {j} outside 1..={k}")));
    }
    if j == k {
        return Ok(1.0);
    }
    let i = k - j;
    let s = if delta == 0.0 {
        f64::INFINITY
    } else {
        delta.powi(-2) - 1.0
    };
    if s >= (i + 1) as f64 {
        return Ok(1.0);
    }
    h(i, s)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrefixAnalysis {
    /// Number of leading picks guaranteed to land in the support.
    pub prefix: usize,
    pub sparsity: usize,
    /// Consecutive sorted block-norm ratios; the last entry (against the
    /// first zero block) is reported as `None`.
    pub ratios: Vec<Option<f64>>,
    pub thresholds: Vec<f64>,
}

/// Largest `i` such that every sorted ratio `||x[j]|| / ||x[j+1]||`,
/// `j <= i`, exceeds its partial-recovery threshold.
pub fn partial_recovery_prefix(x: &BlockVector, delta: f64) -> Result<PrefixAnalysis> {
    if !(delta >= 0.0) || delta >= SQRT2_2 {
        return Err(Error::ConditionViolated(format!(
            "partial recovery needs 0 <= delta < sqrt(2)/2, got {delta}"
        )));
    }
    let profile = decay_profile(x)?;
    let k = profile.sparsity();
    let mut ratios: Vec<Option<f64>> = profile.ratios.iter().copied().map(Some).collect();
    ratios.push(None);
    let thresholds = (1..=k)
        .map(|j| partial_threshold(k, j, delta))
        .collect::<Result<Vec<_>>>()?;
    let prefix = ratios
        .iter()
        .zip(&thresholds)
        .take_while(|(r, &t)| r.is_none_or(|r| r > t))
        .count();
    Ok(PrefixAnalysis {
        prefix,
        sparsity: k,
        ratios,
        thresholds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::block::BlockShape;
    use approx::assert_relative_eq;

    #[test]
    fn g_values() {
        for &t in &[1.5, 3.0, 100.0] {
            assert_eq!(g(1, t).unwrap(), 1.0);
        }
        assert_relative_eq!(g(2, 3.0).unwrap(), 1.6, epsilon = 1e-14);
        let far = g(3, 1e6).unwrap();
        assert!(far > 1.0 && far < 1.0 + 1e-5);
        assert_eq!(g(4, 1.0).unwrap(), 4.0);
        assert!(g(2, 0.5).is_err());
        // continuity at the pole
        assert_relative_eq!(g(5, 1.0 + 1e-9).unwrap(), 5.0, epsilon = 1e-7);
        assert!(g(3, 1e300).unwrap().is_finite());
    }

    #[test]
    fn g_inverse_values() {
        for k in 2..=10 {
            assert_eq!(g_inverse(k, k as f64).unwrap(), 1.0);
            assert_eq!(g_inverse(k, k as f64 + 3.5).unwrap(), 1.0);
        }
        assert_relative_eq!(g_inverse(2, 1.6).unwrap(), 3.0, epsilon = 1e-9);
        assert!(g_inverse(3, 1.0).is_err());
        assert_eq!(g_inverse(1, 1.2).unwrap(), 1.0);
    }

    #[test]
    fn g3_inverse_matches_quadratic_root() {
        // g_3(t) = (t^2 + t + 1)/(t^2 - t + 1); g_3(t) = s is a quadratic in t
        for &s in &[1.1_f64, 1.7777, 2.5, 2.99] {
            let (a, b, c) = (s - 1.0, -(s + 1.0), s - 1.0);
            let root = (-b + (b * b - 4.0 * a * c).sqrt()) / (2.0 * a);
            assert_relative_eq!(g_inverse(3, s).unwrap(), root, max_relative = 1e-11);
        }
    }

    #[test]
    fn h_values() {
        assert_eq!(h_hat(3, 1.0), 4.0);
        assert_relative_eq!(h_hat(2, 3.0), 25.0 / 11.0);
        assert!((h_hat(2, 1e9) - 1.0).abs() < 1e-8);
        for k in 2..=10 {
            assert_eq!(h(k - 1, k as f64).unwrap(), 1.0);
        }
        assert_relative_eq!(h(2, 25.0 / 11.0).unwrap(), 3.0, epsilon = 1e-9);
        assert!(h(2, 1.0).is_err());
        assert!(h(2, 3.1).is_err());
    }

    #[test]
    fn general_sharp() {
        assert!(check_general_sharp(3, 0.49).satisfied);
        let v = check_general_sharp(3, 0.5);
        assert!(!v.satisfied);
        assert_eq!(v.threshold, 0.5);
        assert!(check_general_sharp(1, 0.7).satisfied);
    }

    #[test]
    fn decaying() {
        for k in 1..=6 {
            let delta = 1.0 / ((k + 1) as f64).sqrt();
            let v = check_decaying(k, delta, 1.0001).unwrap();
            assert!(v.satisfied);
            // delta^-2 - 1 lands within an ulp of K, and g_K is flat to second order there
            assert_relative_eq!(v.threshold, 1.0, epsilon = 1e-6);
        }
        assert!(!check_decaying(2, SQRT2_2, 1e6).unwrap().satisfied);
        let v = check_decaying(3, 0.0, 1.5).unwrap();
        assert!(v.satisfied && v.threshold == 1.0);

        let s = 1.0 / 0.36 - 1.0;
        let v = check_decaying(4, 0.6, 10.0).unwrap();
        assert_relative_eq!(g(4, v.threshold).unwrap(), s, epsilon = 1e-9);
        assert!(v.satisfied);
        assert!(!check_decaying(4, 0.6, v.threshold * 0.99).unwrap().satisfied);
    }

    #[test]
    fn noise_general() {
        assert_eq!(noise_min_magnitude_general(3, 0.25, 0.0).unwrap(), 0.0);
        assert_relative_eq!(noise_min_magnitude_general(3, 0.25, 0.1).unwrap(), 0.4);
        assert!(matches!(
            noise_min_magnitude_general(3, 0.5, 0.1),
            Err(Error::ConditionViolated(_))
        ));
        let a = noise_min_magnitude_general(3, 0.49, 0.1).unwrap();
        let b = noise_min_magnitude_general(3, 0.499, 0.1).unwrap();
        assert!(b > a);
    }

    #[test]
    fn noise_decaying() {
        // K = 3, delta = 0.6, alpha = 5; g_3(5) = 31 * 6 / (63 * 4) * ... evaluated independently
        let g35 = (125.0f64 - 1.0) * 6.0 / ((125.0 + 1.0) * 4.0);
        let s_expect = 1.0 / (1.0 + g35).sqrt();
        let b = noise_min_magnitude_decaying(3, 0.6, 5.0, 0.05).unwrap();
        assert_relative_eq!(b.s, s_expect, epsilon = 1e-12);
        assert!(b.s > 0.6);
        assert!(g_inverse(3, b.s.powi(-2) - 1.0).unwrap() <= 5.0 + 1e-9);
        let expect = 0.1 / (1.0 - (1.0 + g35).sqrt() * 0.6);
        assert_relative_eq!(b.bound, expect, max_relative = 1e-9);

        assert_eq!(noise_min_magnitude_decaying(3, 0.6, 5.0, 0.0).unwrap().bound, 0.0);

        // K = 1: reduces to the general bound
        let b = noise_min_magnitude_decaying(1, 0.5, 3.0, 0.1).unwrap();
        let gen = noise_min_magnitude_general(1, 0.5, 0.1).unwrap();
        assert_relative_eq!(b.bound, gen, max_relative = 1e-9);

        assert!(noise_min_magnitude_decaying(3, 0.6, 1.5, 0.1).is_err());
    }

    #[test]
    fn prefix_examples() {
        let sh = BlockShape::new(5, 1).unwrap();
        // strictly decreasing profile at delta = 1/sqrt(K+1)
        let x = BlockVector::from_slice(sh, &[4.0, 3.9, 3.8, 0.0, 0.0]).unwrap();
        let p = partial_recovery_prefix(&x, 0.5).unwrap();
        assert!(p.prefix >= 1);
        assert_eq!(p.thresholds[0], 1.0);

        let x = BlockVector::from_slice(sh, &[1.0, 1.0, 1.0, 1.0, 0.0]).unwrap();
        assert_eq!(partial_recovery_prefix(&x, 0.5).unwrap().prefix, 0);

        // ratio-10 geometric profile, K = 4, delta = 0.6
        let x = BlockVector::from_slice(sh, &[1.0, 0.1, 0.01, 0.001, 0.0]).unwrap();
        let p = partial_recovery_prefix(&x, 0.6).unwrap();
        let s = 1.0 / 0.36 - 1.0;
        for j in 1..4 {
            let i = 4 - j;
            let fi = i as f64;
            let direct = (fi + (fi * fi * s + (s - s * s) * fi).sqrt()) / (s - 1.0);
            assert_relative_eq!(p.thresholds[j - 1], direct, epsilon = 1e-12);
            assert!(10.0 > direct);
        }
        assert_eq!(p.prefix, 4);

        assert!(partial_recovery_prefix(&x, SQRT2_2).is_err());
    }
}
