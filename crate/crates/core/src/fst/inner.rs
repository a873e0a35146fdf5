//! Per-sample subproblems of the score transformer. Both minimize the
//! binary cross-entropy `-r ln s - (1-r) ln(1-s)` plus a simple term in the
//! single variable `s`, and both have closed-form or bracketed solutions.

use crate::error::{Error, Result};

fn check_score(r: f64) -> Result<()> {
    if r > 0.0 && r < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("score {r} must lie in the open interval (0, 1)")))
    }
}

/// Minimizer over `s` in (0, 1) of `-r ln s - (1-r) ln(1-s) + mu * s`.
///
/// Stationarity gives `mu s² - (1 + mu) s + r = 0`. The root in (0, 1) is
/// taken from whichever quadratic formula avoids cancellation, so the
/// result is accurate for `|mu|` near zero and returns `r` exactly at
/// `mu = 0`.
pub fn primal_from_mu(r: f64, mu: f64) -> Result<f64> {
    check_score(r)?;
    if !mu.is_finite() {
        return Err(Error::invalid(format!("multiplier {mu} is not finite")));
    }
    Ok(primal_from_mu_unchecked(r, mu))
}

#[inline]
pub(crate) fn primal_from_mu_unchecked(r: f64, mu: f64) -> f64 {
    let b = 1.0 + mu;
    // (1+mu)^2 - 4 mu r, written to stay nonnegative in floating point
    let disc = ((1.0 - mu) * (1.0 - mu) + 4.0 * mu * (1.0 - r)).max(0.0);
    let root = disc.sqrt();
    let s = if b >= 0.0 {
        2.0 * r / (b + root)
    } else {
        (b - root) / (2.0 * mu)
    };
    s.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

const CUBIC_TOL: f64 = 1e-12;
const CUBIC_MAX_ITERS: usize = 200;

/// Minimizer over `s` in (0, 1) of
/// `-r ln s - (1-r) ln(1-s) + (rho/2) (s - v)²`,
/// the separable step of the ADMM splitting.
///
/// The objective is strictly convex on (0, 1); its stationary point is the
/// unique root there of `(s - r) + rho (s - v) s (1 - s)`, which is `-r` at
/// 0 and `1 - r` at 1. Solved by Newton's method safeguarded by bisection
/// on that bracket.
pub fn admm_cubic_step(r: f64, v: f64, rho: f64) -> Result<f64> {
    check_score(r)?;
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::invalid(format!("penalty rho = {rho} must be positive")));
    }
    if !v.is_finite() {
        return Err(Error::invalid(format!("consensus target {v} is not finite")));
    }
    Ok(admm_cubic_step_unchecked(r, v, rho))
}

#[inline]
pub(crate) fn admm_cubic_step_unchecked(r: f64, v: f64, rho: f64) -> f64 {
    // residual of the depressed form and its derivative
    let f = |s: f64| (s - r) + rho * (s - v) * s * (1.0 - s);
    let df = |s: f64| 1.0 + rho * (s * (1.0 - s) + (s - v) * (1.0 - 2.0 * s));

    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    // linearized guess around s = r
    let w = rho * r * (1.0 - r);
    let mut s = ((r + w * v) / (1.0 + w)).clamp(1e-300, 1.0 - 1e-16);
    if !(s > lo && s < hi) {
        s = 0.5;
    }

    for _ in 0..CUBIC_MAX_ITERS {
        let fs = f(s);
        if fs == 0.0 {
            return s;
        }
        if fs < 0.0 {
            lo = s;
        } else {
            hi = s;
        }
        let d = df(s);
        let newton = s - fs / d;
        let next = if d > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        let scale = next.min(1.0 - next).max(f64::MIN_POSITIVE);
        if (next - s).abs() <= CUBIC_TOL * scale || hi - lo <= f64::EPSILON * scale {
            return next;
        }
        s = next;
    }
    s
}

/// Binary cross-entropy `-r ln s - (1-r) ln(1-s)`.
#[inline]
pub fn cross_entropy(r: f64, s: f64) -> f64 {
    -(r * s.ln() + (1.0 - r) * (1.0 - s).ln())
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Bisection on the derivative of the one-dimensional objective; an
    /// oracle independent of both closed forms.
    fn argmin_by_derivative(dobj: impl Fn(f64) -> f64) -> f64 {
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        for _ in 0..2000 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if dobj(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn zero_multiplier_is_identity() {
        for r in [1e-9, 0.1, 0.37, 0.5, 0.999_999] {
            assert_eq!(primal_from_mu(r, 0.0).unwrap(), r);
        }
    }

    #[test]
    fn half_with_unit_multiplier() {
        let s = primal_from_mu(0.5, 1.0).unwrap();
        assert!((s - (1.0 - 0.5f64.sqrt())).abs() < 1e-15);
        let oracle = argmin_by_derivative(|s| -0.5 / s + 0.5 / (1.0 - s) + 1.0);
        assert!((s - oracle).abs() < 1e-12);
    }

    #[test]
    fn negative_multiplier_matches_oracle() {
        let s = primal_from_mu(0.8, -2.0).unwrap();
        let oracle = argmin_by_derivative(|s| -0.8 / s + 0.2 / (1.0 - s) - 2.0);
        assert!((s - oracle).abs() < 1e-8);
    }

    #[test]
    fn tiny_multiplier_has_no_cancellation() {
        let r = 0.3;
        let mu = 1e-8;
        // first-order expansion: s - r ≈ -mu r (1 - r), error O(mu²)
        let s = primal_from_mu(r, mu).unwrap();
        let expected = -mu * r * (1.0 - r);
        assert!(((s - r) - expected).abs() < 1e-6 * expected.abs());
    }

    #[test]
    fn primal_rejects_bad_scores() {
        assert!(primal_from_mu(0.0, 1.0).is_err());
        assert!(primal_from_mu(1.0, 1.0).is_err());
        assert!(primal_from_mu(0.5, f64::NAN).is_err());
    }

    #[test]
    fn cubic_symmetric_point() {
        for rho in [1e-3, 0.5, 1.0, 7.0, 1e6] {
            assert!((admm_cubic_step(0.5, 0.5, rho).unwrap() - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn cubic_large_penalty_tracks_target() {
        let s = admm_cubic_step(0.9, 0.3, 1e8).unwrap();
        assert!((s - 0.3).abs() < 1e-5);
    }

    #[test]
    fn cubic_matches_oracle() {
        let (r, v, rho) = (0.2, 0.7, 2.0);
        let s = admm_cubic_step(r, v, rho).unwrap();
        let oracle = argmin_by_derivative(|s| -r / s + (1.0 - r) / (1.0 - s) + rho * (s - v));
        assert!((s - oracle).abs() < 1e-10);
        // and it is a root of the cubic form
        let cubic = rho * s.powi(3) - rho * (1.0 + v) * s * s + (rho * v - 1.0) * s + r;
        assert!(cubic.abs() < 1e-12);
    }

    #[test]
    fn cubic_rejects_bad_inputs() {
        assert!(admm_cubic_step(0.5, 0.5, 0.0).is_err());
        assert!(admm_cubic_step(1.2, 0.5, 1.0).is_err());
        assert!(admm_cubic_step(0.5, f64::INFINITY, 1.0).is_err());
    }

    #[test]
    fn cubic_targets_outside_unit_interval() {
        for v in [-5.0, -0.1, 1.1, 40.0] {
            let s = admm_cubic_step(0.4, v, 3.0).unwrap();
            let oracle = argmin_by_derivative(|s| -0.4 / s + 0.6 / (1.0 - s) + 3.0 * (s - v));
            assert!((s - oracle).abs() < 1e-10, "v = {v}: {s} vs {oracle}");
        }
    }
}
