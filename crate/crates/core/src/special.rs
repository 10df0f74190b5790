//! Normal and Student-t distribution functions.

use std::f64::consts::{PI, SQRT_2};

use libm::erfc;
use statrs::function::beta::beta_reg;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Standard normal CDF.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// Standard normal survival function `1 - norm_cdf(x)`, accurate in the upper tail.
pub fn norm_ccdf(x: f64) -> f64 {
    0.5 * erfc(x / SQRT_2)
}

fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

// Acklam's rational approximation, relative error about 1e-9.
fn acklam(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.38357751867269e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;
    let tail = |q: f64| {
        let r = (-2.0 * q.ln()).sqrt();
        (((((C[0] * r + C[1]) * r + C[2]) * r + C[3]) * r + C[4]) * r + C[5])
            / ((((D[0] * r + D[1]) * r + D[2]) * r + D[3]) * r + 1.0)
    };
    if p < P_LOW {
        tail(p)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -tail(1.0 - p)
    }
}

/// Inverse of [`norm_cdf`]. Returns `-inf`/`+inf` at 0 and 1, NaN outside `[0, 1]`.
pub fn norm_inv_cdf(p: f64) -> f64 {
    if !(0.0..=1.0).contains(&p) {
        return f64::NAN;
    }
    if p == 0.0 {
        return f64::NEG_INFINITY;
    }
    if p == 1.0 {
        return f64::INFINITY;
    }
    if p > 0.5 {
        return -lower_inv(1.0 - p);
    }
    lower_inv(p)
}

/// Inverse of [`norm_ccdf`], accurate for tiny upper-tail probabilities.
pub fn norm_inv_ccdf(q: f64) -> f64 {
    -norm_inv_cdf(q)
}

// p in (0, 0.5]
fn lower_inv(p: f64) -> f64 {
    let mut x = acklam(p);
    for _ in 0..2 {
        let e = norm_cdf(x) - p;
        let u = e / norm_pdf(x);
        if !u.is_finite() {
            break;
        }
        x -= u / (1.0 + 0.5 * x * u);
    }
    x
}

/// Student-t upper tail probability `P(T > t)` for `t >= 0`.
fn student_t_upper(nu: f64, t: f64) -> f64 {
    0.5 * beta_reg(0.5 * nu, 0.5, nu / (nu + t * t))
}

fn student_t_pdf(nu: f64, t: f64) -> f64 {
    let ln_c = ln_gamma(0.5 * (nu + 1.0)) - ln_gamma(0.5 * nu) - 0.5 * (nu * PI).ln();
    (ln_c - 0.5 * (nu + 1.0) * (t * t / nu).ln_1p()).exp()
}

/// Student-t CDF with `nu` degrees of freedom.
pub fn student_t_cdf(nu: f64, t: f64) -> f64 {
    if t >= 0.0 {
        1.0 - student_t_upper(nu, t)
    } else {
        student_t_upper(nu, -t)
    }
}

/// Inverse Student-t CDF by safeguarded Newton iteration on the regularized
/// incomplete beta form.
pub fn student_t_quantile(nu: f64, p: f64) -> Result<f64> {
    if !(nu >= 1.0) || !nu.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "degrees of freedom must be >= 1, got {nu}"
        )));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "probability must lie in (0, 1), got {p}"
        )));
    }
    if p == 0.5 {
        return Ok(0.0);
    }
    let (tail, sign) = if p > 0.5 { (1.0 - p, 1.0) } else { (p, -1.0) };
    // bracket: upper tail is decreasing in t
    let mut lo = 0.0;
    let mut hi = 1.0;
    while student_t_upper(nu, hi) > tail {
        lo = hi;
        hi *= 2.0;
        if hi > 1e300 {
            break;
        }
    }
    let mut t = norm_inv_ccdf(tail).clamp(lo, hi);
    if !(t > lo && t < hi) {
        t = 0.5 * (lo + hi);
    }
    for _ in 0..200 {
        let f = student_t_upper(nu, t) - tail;
        if f > 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        let step = f / student_t_pdf(nu, t);
        let mut next = t + step;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        if (next - t).abs() <= 1e-14 * next.abs().max(1.0) || hi - lo <= 1e-14 * hi {
            t = next;
            break;
        }
        t = next;
    }
    Ok(sign * t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_cdf_values() {
        assert_eq!(norm_cdf(0.0), 0.5);
        assert!((norm_cdf(1.0) - 0.841_344_746_068_542_9).abs() < 1e-15);
        assert!((norm_cdf(-3.0) - 0.001_349_898_031_630_094_6).abs() < 1e-17);
        assert!((norm_ccdf(8.0) - 6.220_960_574_271_785e-16).abs() < 1e-28);
    }

    #[test]
    fn inverse_normal_values() {
        assert_eq!(norm_inv_cdf(0.5), 0.0);
        assert!((norm_inv_cdf(0.975) - 1.959_963_984_540_054).abs() < 1e-13);
        assert!((norm_inv_cdf(0.995) - 2.575_829_303_548_901).abs() < 1e-13);
        assert!((norm_inv_cdf(1e-10) + 6.361_340_902_404_056).abs() < 1e-12);
        assert_eq!(norm_inv_cdf(0.0), f64::NEG_INFINITY);
        assert_eq!(norm_inv_cdf(1.0), f64::INFINITY);
        assert!(norm_inv_cdf(1.5).is_nan());
        assert!((norm_inv_ccdf(norm_ccdf(7.5)) - 7.5).abs() < 1e-12);
    }

    #[test]
    fn round_trip_grid() {
        for k in 0..=1000 {
            let x = -8.0 + 13.5 * k as f64 / 1000.0;
            assert!((norm_inv_cdf(norm_cdf(x)) - x).abs() < 1e-9, "x = {x}");
        }
        for k in 0..=100 {
            let x = 5.5 + 2.5 * k as f64 / 100.0;
            assert!((norm_inv_ccdf(norm_ccdf(x)) - x).abs() < 1e-9, "x = {x}");
        }
    }

    #[test]
    fn t_quantile_values() {
        let q = student_t_quantile(1.0, 0.995).unwrap();
        assert!((q - (0.495 * PI).tan()).abs() < 1e-8);
        assert_eq!(student_t_quantile(1.0, 0.5).unwrap(), 0.0);
        let q = student_t_quantile(1e6, 0.995).unwrap();
        assert!((q - 2.5758).abs() < 1e-3);
        // two degrees of freedom has a closed form: t = (2p - 1) sqrt(2 / (4p(1-p)))
        for &p in &[0.6f64, 0.9, 0.995, 0.1] {
            let exact = (2.0 * p - 1.0) * (2.0 / (4.0 * p * (1.0 - p))).sqrt();
            assert!((student_t_quantile(2.0, p).unwrap() - exact).abs() < 1e-8);
        }
        let q = student_t_quantile(10.0, 0.995).unwrap();
        assert!((q - 3.169_272_672_616_951).abs() < 1e-8);
    }

    #[test]
    fn t_quantile_inverts_cdf() {
        for &nu in &[1.0, 3.0, 30.0, 255.0, 4095.0] {
            for &p in &[0.01, 0.3, 0.75, 0.995, 0.9999] {
                let t = student_t_quantile(nu, p).unwrap();
                assert!((student_t_cdf(nu, t) - p).abs() < 1e-12, "nu {nu} p {p}");
            }
        }
    }

    #[test]
    fn t_quantile_rejects_bad_input() {
        assert!(student_t_quantile(1.0, 0.0).is_err());
        assert!(student_t_quantile(1.0, 1.0).is_err());
        assert!(student_t_quantile(0.5, 0.9).is_err());
        assert!(student_t_quantile(3.0, f64::NAN).is_err());
    }
}
