//! Scalar truncation maps used as test functions throughout the solver and
//! the diagnostics: the clamp `t_k`, the cutoff profiles `v_delta`, `s_n`,
//! `r_delta`, and the power truncation `t_k_pow`.

use crate::error::{Error, Result};

/// Clamp of `s` to the band `[-k, k]`.
pub fn t_k(s: f64, k: f64) -> f64 {
    debug_assert!(k > 0.0);
    s.clamp(-k, k)
}

/// Plateau-then-ramp cutoff: 1 on `[0, delta]`, linear down to 0 on
/// `(delta, 2 delta)`, 0 beyond.
pub fn v_delta(s: f64, delta: f64) -> f64 {
    debug_assert!(delta > 0.0);
    if s <= delta {
        1.0
    } else if s < 2.0 * delta {
        (2.0 * delta - s) / delta
    } else {
        0.0
    }
}

/// Unit-width descent: 1 on `[0, n]`, `-s + n + 1` on `(n, n+1)`, 0 beyond.
pub fn s_n(s: f64, n: f64) -> f64 {
    debug_assert!(n >= 1.0);
    if s <= n {
        1.0
    } else if s < n + 1.0 {
        -s + n + 1.0
    } else {
        0.0
    }
}

/// Complement of `v_delta`.
pub fn r_delta(s: f64, delta: f64) -> f64 {
    1.0 - v_delta(s, delta)
}

/// Power of the clamp, `(min(s, k))^alpha`, for nonnegative `s`.
///
/// `alpha` must be at least 1; smaller exponents are rejected.
pub fn t_k_pow(s: f64, k: f64, alpha: f64) -> Result<f64> {
    if alpha < 1.0 {
        return Err(Error::Parameter(format!(
            "t_k_pow requires alpha >= 1, got {alpha}"
        )));
    }
    debug_assert!(s >= 0.0);
    Ok(s.min(k).max(0.0).powf(alpha))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clamp_values() {
        assert_eq!(t_k(0.5, 1.0), 0.5);
        assert_eq!(t_k(3.0, 1.0), 1.0);
        assert_eq!(t_k(-3.0, 1.0), -1.0);
    }

    #[test]
    fn clamp_idempotent() {
        for i in -40..=40 {
            let s = i as f64 * 0.25;
            assert_eq!(t_k(t_k(s, 1.5), 1.5), t_k(s, 1.5));
        }
    }

    #[test]
    fn cutoff_branches() {
        let d = 0.7;
        assert_eq!(v_delta(d / 2.0, d), 1.0);
        assert!((v_delta(1.5 * d, d) - 0.5).abs() < 1e-15);
        assert_eq!(v_delta(5.0 * d, d), 0.0);
    }

    #[test]
    fn descent_branches() {
        let n = 3.0;
        assert_eq!(s_n(n, n), 1.0);
        assert!((s_n(n + 0.5, n) - 0.5).abs() < 1e-15);
        assert_eq!(s_n(n + 2.0, n), 0.0);
    }

    #[test]
    fn complement_identity() {
        let d = 0.3;
        assert_eq!(r_delta(d / 2.0, d), 0.0);
        assert!((r_delta(1.5 * d, d) - 0.5).abs() < 1e-15);
        assert_eq!(r_delta(3.0 * d, d), 1.0);
        for i in 0..200 {
            let s = i as f64 * 0.01;
            assert!((v_delta(s, d) + r_delta(s, d) - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn power_truncation() {
        assert_eq!(t_k_pow(0.5, 1.0, 2.0).unwrap(), 0.25);
        assert_eq!(t_k_pow(4.0, 1.0, 3.0).unwrap(), 1.0);
        // alpha = 1 reduces to the plain clamp on s >= 0
        for i in 0..50 {
            let s = i as f64 * 0.1;
            assert_eq!(t_k_pow(s, 1.3, 1.0).unwrap(), t_k(s, 1.3));
        }
        assert!(t_k_pow(1.0, 1.0, 0.5).is_err());
    }

    #[test]
    fn lipschitz_by_dense_sampling() {
        // All unit maps are 1-Lipschitz; t_k_pow is alpha*k^(alpha-1)-Lipschitz
        // on [0, k].
        let (k, d, n, alpha) = (2.0f64, 0.4, 2.0, 3.0);
        let h = 1e-4;
        let lip_pow = alpha * k.powf(alpha - 1.0);
        for i in 0..60_000 {
            let s = i as f64 * h;
            let t = s + h;
            assert!((t_k(t, k) - t_k(s, k)).abs() <= h + 1e-12);
            assert!((v_delta(t, d) - v_delta(s, d)).abs() <= h / d + 1e-12);
            assert!((s_n(t, n) - s_n(s, n)).abs() <= h + 1e-12);
            assert!((r_delta(t, d) - r_delta(s, d)).abs() <= h / d + 1e-12);
            let dp = (t_k_pow(t, k, alpha).unwrap() - t_k_pow(s, k, alpha).unwrap()).abs();
            assert!(dp <= lip_pow * h * (1.0 + 1e-8));
        }
    }
}
