//! Real-branch special functions used by the closed-form allocations.
//!
//! [`lambert_w0`] is the principal branch of the inverse of `w * e^w`,
//! [`log_gamma`] the natural log of the gamma function for positive
//! arguments. [`w0_shifted`] evaluates `1 + W0((c - 1)/e)`, the quantity
//! every unequal-slot allocation is built from, without the cancellation the
//! direct composition suffers as `c -> 0`.

use std::f64::consts::{E, PI};

use crate::error::{Error, Result};

/// Slack allowed below the branch point `-1/e`.
pub const BRANCH_SLACK: f64 = 1e-12;

const MAX_ITER: usize = 50;

/// Principal branch `W0(x)` of the Lambert-W function.
///
/// Halley iteration started from `ln(1 + x)`, or from the branch-point
/// series when `x` sits close to `-1/e`. Returns exactly `-1` at the branch
/// point.
pub fn lambert_w0(x: f64) -> Result<f64> {
    let branch = -1.0 / E;
    if x.is_nan() || x < branch - BRANCH_SLACK {
        return Err(Error::Domain(format!(
            "lambert_w0 requires x >= -1/e, got {x}"
        )));
    }
    if x == f64::INFINITY {
        return Ok(f64::INFINITY);
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    let q = E * x + 1.0;
    if q <= 0.0 {
        return Ok(-1.0);
    }

    let p = (2.0 * q).sqrt();
    let mut w = if p < 0.3 {
        -1.0 + p * (1.0 + p * (-1.0 / 3.0 + p * (11.0 / 72.0 + p * (-43.0 / 540.0))))
    } else {
        x.ln_1p()
    };

    for _ in 0..MAX_ITER {
        let ew = w.exp();
        let f = w * ew - x;
        if f == 0.0 {
            break;
        }
        let wp1 = w + 1.0;
        if wp1 == 0.0 {
            break;
        }
        let fp = ew * wp1;
        let step = f / (fp - (w + 2.0) * f / (2.0 * wp1));
        let next = w - step;
        // stay on the principal branch
        let next = if next < -1.0 { 0.5 * (w - 1.0) } else { next };
        let done = (next - w).abs() <= 4.0 * f64::EPSILON * (1.0 + next.abs())
            || f.abs() <= 1e-14 * x.abs().max(f64::MIN_POSITIVE);
        w = next;
        if done {
            break;
        }
    }
    Ok(w)
}

/// `1 + W0((c - 1)/e)` for `c >= 0`.
///
/// For small `c` the argument of `W0` approaches the branch point and the
/// direct composition loses roughly half the significant digits. There the
/// value `s` is found from the equivalent equation
/// `1 + (s - 1) e^s = c` with a cancellation-free series for the left side.
pub fn w0_shifted(c: f64) -> Result<f64> {
    if c.is_nan() || c < 0.0 {
        return Err(Error::Domain(format!("w0_shifted requires c >= 0, got {c}")));
    }
    if c == 0.0 {
        return Ok(0.0);
    }
    if c >= 0.5 {
        return Ok(1.0 + lambert_w0((c - 1.0) / E)?);
    }

    let mut s = (2.0 * c).sqrt();
    s *= 1.0 - s / 3.0;
    for _ in 0..MAX_ITER {
        let es = s.exp();
        let f = shifted_series(s) - c;
        let fp = s * es;
        let fpp = (1.0 + s) * es;
        let step = f / (fp - 0.5 * f * fpp / fp);
        let next = (s - step).max(0.5 * s);
        let done = (next - s).abs() <= 2.0 * f64::EPSILON * next;
        s = next;
        if done {
            break;
        }
    }
    Ok(s)
}

/// `1 + (s - 1) e^s = sum_{n >= 2} (n - 1) s^n / n!` for `0 <= s < 1`.
fn shifted_series(s: f64) -> f64 {
    let mut pow_over_fact = s; // s^n / n! at n = 1
    let mut sum = 0.0;
    for n in 2..60 {
        pow_over_fact *= s / n as f64;
        let term = (n - 1) as f64 * pow_over_fact;
        sum += term;
        if term <= 1e-17 * sum {
            break;
        }
    }
    sum
}

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of `Γ(x)` for `x > 0` (Lanczos, g = 7).
pub fn log_gamma(x: f64) -> Result<f64> {
    if x.is_nan() || x <= 0.0 {
        return Err(Error::Domain(format!("log_gamma requires x > 0, got {x}")));
    }
    if x == 1.0 || x == 2.0 {
        return Ok(0.0);
    }
    if x < 0.5 {
        // reflection: Γ(x) Γ(1 - x) = π / sin(πx)
        return Ok((PI / (PI * x).sin()).ln() - lanczos_ln_gamma(1.0 - x));
    }
    Ok(lanczos_ln_gamma(x))
}

fn lanczos_ln_gamma(x: f64) -> f64 {
    let x = x - 1.0;
    let mut a = LANCZOS_COEF[0];
    for (i, c) in LANCZOS_COEF.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn residual(x: f64) -> f64 {
        let w = lambert_w0(x).unwrap();
        (w * w.exp() - x).abs()
    }

    fn bisect_w(x: f64, mut lo: f64, mut hi: f64) -> f64 {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid * mid.exp() < x {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn lambert_trivial_points() {
        assert_eq!(lambert_w0(0.0).unwrap(), 0.0);
        assert!((lambert_w0(E).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(lambert_w0(-1.0 / E).unwrap(), -1.0);
    }

    #[test]
    fn lambert_matches_bisection_at_ten() {
        let oracle = bisect_w(10.0, 0.0, 10.0);
        let w = lambert_w0(10.0).unwrap();
        assert!((w - oracle).abs() < 1e-13, "{w} vs {oracle}");
        assert!((w - 1.745_528_002_740_699).abs() < 1e-14);
    }

    #[test]
    fn lambert_rejects_below_branch() {
        assert!(matches!(lambert_w0(-0.4), Err(Error::Domain(_))));
        assert!(lambert_w0(f64::NAN).is_err());
        // inside the slack the branch value is returned
        assert_eq!(lambert_w0(-1.0 / E - 1e-13).unwrap(), -1.0);
    }

    #[test]
    fn lambert_near_branch_point() {
        for d in [1e-14, 1e-10, 1e-6, 1e-3, 0.01] {
            let x = -1.0 / E + d;
            let w = lambert_w0(x).unwrap();
            assert!(w >= -1.0);
            assert!(residual(x) <= 1e-12, "x = {x}");
        }
    }

    #[test]
    fn lambert_small_arguments_keep_relative_precision() {
        for x in [1e-300, 1e-30, 1e-12, -1e-12, 1e-5] {
            let w = lambert_w0(x).unwrap();
            let rel = (w * w.exp() - x).abs() / x.abs();
            assert!(rel < 1e-14, "x = {x}: rel {rel}");
        }
    }

    #[test]
    fn log_gamma_trivial_points() {
        assert_eq!(log_gamma(1.0).unwrap(), 0.0);
        assert!((log_gamma(5.0).unwrap() - 24f64.ln()).abs() < 1e-13);
        assert!((log_gamma(0.5).unwrap() - PI.sqrt().ln()).abs() < 1e-14);
        assert!((log_gamma(10.0).unwrap() - 362_880f64.ln()).abs() < 1e-12 * 362_880f64.ln());
    }

    #[test]
    fn log_gamma_rejects_nonpositive() {
        assert!(log_gamma(0.0).is_err());
        assert!(log_gamma(-2.5).is_err());
    }

    #[test]
    fn w0_shifted_agrees_with_direct_composition() {
        for c in [0.5, 0.9, 1.0, 3.0, 31.6, 1e4, 1e12] {
            let direct = 1.0 + lambert_w0((c - 1.0) / E).unwrap();
            assert!((w0_shifted(c).unwrap() - direct).abs() < 1e-13 * direct.max(1.0));
        }
        // continuity across the switch at 0.5
        let below = w0_shifted(0.5 - 1e-12).unwrap();
        let above = w0_shifted(0.5).unwrap();
        assert!((below - above).abs() < 1e-11);
    }

    #[test]
    fn w0_shifted_small_argument_identity() {
        for c in [1e-30, 1e-16, 1e-8, 1e-3, 0.1, 0.49] {
            let s = w0_shifted(c).unwrap();
            let back = shifted_series(s);
            assert!((back - c).abs() <= 1e-14 * c, "c = {c}");
        }
    }

    proptest! {
        #[test]
        fn lambert_residual_over_domain(x in -1.0 / E..1e6f64) {
            prop_assert!(residual(x) <= 1e-12 * x.abs().max(1.0));
            prop_assert!(lambert_w0(x).unwrap() >= -1.0);
        }

        #[test]
        fn lambert_strictly_increasing(a in -1.0 / E..1e3f64, b in -1.0 / E..1e3f64) {
            prop_assume!((a - b).abs() > 1e-9 * a.abs().max(b.abs()).max(1.0));
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(lambert_w0(lo).unwrap() < lambert_w0(hi).unwrap());
        }

        #[test]
        fn log_gamma_recurrence(x in 0.5f64..50.0) {
            let lhs = log_gamma(x + 1.0).unwrap().exp();
            let rhs = x * log_gamma(x).unwrap().exp();
            prop_assert!((lhs - rhs).abs() <= 1e-10 * rhs);
        }

        #[test]
        fn w0_shifted_is_monotone(a in 0.0f64..1e3, b in 0.0f64..1e3) {
            prop_assume!((a - b).abs() > 1e-9);
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(w0_shifted(lo).unwrap() < w0_shifted(hi).unwrap());
        }
    }
}
