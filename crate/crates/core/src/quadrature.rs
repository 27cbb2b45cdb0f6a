//! Deterministic expectations over the Nakagami-m power gain.
//!
//! `E{g(h)} = ∫₀^∞ g(x) f(x) dx` is split at `x = 1`. On `(0, 1]` the
//! variable change `x = u^q` absorbs an integrable power singularity at the
//! origin; on `(1, ∞)` the map `x = 1 + t/(1 - t)` folds the tail onto
//! `[0, 1)`. Each piece is integrated with globally adaptive G7/K15 panels.
//!
//! Delay and power integrands behave like `x^(m-3)` at the origin, so their
//! expectations exist only for `m > 2`; they must go through
//! [`expect_singular`], which refuses smaller orders.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::channel::{pdf_unchecked, FadingModel};
use crate::error::{Error, Result};

/// Default absolute tolerance of an expectation.
pub const DEFAULT_TOL: f64 = 1e-8;
/// Panels allowed per half-line before giving up.
pub const MAX_PANELS: usize = 2000;
/// Evaluations at or below this gain are replaced by the analytic limit.
pub const ORIGIN_CLAMP: f64 = 1e-12;
const MAX_POWER_MAP: f64 = 16.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpectationResult {
    pub value: f64,
    pub abs_error_estimate: f64,
    /// Mass on `(0, 1]` and on `(1, ∞)`.
    pub split_point_contributions: (f64, f64),
    pub evaluations: usize,
}

/// Expectations of `1/h^2`-type integrands converge only for `m > 2`.
pub fn check_convergence(fading: &FadingModel) -> bool {
    fading.m() > 2.0
}

pub(crate) fn guard(fading: &FadingModel) -> Result<()> {
    if check_convergence(fading) {
        Ok(())
    } else {
        Err(Error::ConvergenceGuard { m: fading.m() })
    }
}

/// `E{g(h)}` for an integrand bounded near the origin.
pub fn expect<G>(mut g: G, fading: &FadingModel, tol: f64) -> Result<ExpectationResult>
where
    G: FnMut(f64) -> f64,
{
    integrate(|x| Ok(g(x)), fading, tol, false)
}

/// `E{g(h)}` for a delay or power integrand growing like `1/h^2` at the
/// origin. Fails with [`Error::ConvergenceGuard`] unless `m > 2`.
pub fn expect_singular<G>(g: G, fading: &FadingModel, tol: f64) -> Result<ExpectationResult>
where
    G: FnMut(f64) -> Result<f64>,
{
    guard(fading)?;
    integrate(g, fading, tol, true)
}

/// General entry point; `singular` selects the `1/h^2` origin behaviour.
pub fn integrate<G>(mut g: G, fading: &FadingModel, tol: f64, singular: bool) -> Result<ExpectationResult>
where
    G: FnMut(f64) -> Result<f64>,
{
    if !(tol > 0.0) {
        return Err(Error::InvalidParams(format!("tolerance must be positive, got {tol}")));
    }
    let m = fading.m();
    let log_norm = fading.log_norm();
    let leading = if singular { m - 3.0 } else { m - 1.0 };
    let q = if leading < 0.0 {
        (1.0 / (leading + 1.0)).min(MAX_POWER_MAP)
    } else {
        1.0
    };

    let mut weighted = |x: f64| -> Result<f64> {
        if x <= 0.0 || (singular && x <= ORIGIN_CLAMP) {
            return Ok(0.0);
        }
        let v = g(x)? * pdf_unchecked(x, m, log_norm);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Domain(format!("integrand not finite at h = {x:e}")))
        }
    };

    let mut evaluations = 0;
    let head = adaptive(
        |u| {
            if u <= 0.0 {
                return Ok(0.0);
            }
            let x = u.powf(q);
            Ok(weighted(x)? * q * u.powf(q - 1.0))
        },
        0.0,
        1.0,
        0.5 * tol,
        &mut evaluations,
    )?;
    let tail = adaptive(
        |t| {
            if t >= 1.0 {
                return Ok(0.0);
            }
            let s = 1.0 - t;
            let x = 1.0 + t / s;
            let v = weighted(x)?;
            Ok(if v == 0.0 { 0.0 } else { v / (s * s) })
        },
        0.0,
        1.0,
        0.5 * tol,
        &mut evaluations,
    )?;

    Ok(ExpectationResult {
        value: head.0 + tail.0,
        abs_error_estimate: head.1 + tail.1,
        split_point_contributions: (head.0, tail.0),
        evaluations,
    })
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn kronrod<F>(f: &mut F, a: f64, b: f64) -> Result<Panel>
where
    F: FnMut(f64) -> Result<f64>,
{
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let f_center = f(center)?;
    let mut res_k = f_center * WGK[7];
    let mut res_g = f_center * WG[3];
    let mut res_abs = res_k.abs();
    let mut fv = [(0.0, 0.0); 7];
    for (j, slot) in fv.iter_mut().enumerate() {
        let dx = half * XGK[j];
        let f1 = f(center - dx)?;
        let f2 = f(center + dx)?;
        *slot = (f1, f2);
        res_k += WGK[j] * (f1 + f2);
        res_abs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            res_g += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * res_k;
    let mut res_asc = WGK[7] * (f_center - mean).abs();
    for (j, (f1, f2)) in fv.iter().enumerate() {
        res_asc += WGK[j] * ((f1 - mean).abs() + (f2 - mean).abs());
    }
    let value = res_k * half;
    res_abs *= half.abs();
    res_asc *= half.abs();
    let mut error = ((res_k - res_g) * half).abs();
    if res_asc != 0.0 && error != 0.0 {
        error = res_asc * (200.0 * error / res_asc).powf(1.5).min(1.0);
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        error = error.max(50.0 * f64::EPSILON * res_abs);
    }
    Ok(Panel { a, b, value, error })
}

/// Globally adaptive G7/K15 on `[a, b]`; returns `(value, error)`.
fn adaptive<F>(mut f: F, a: f64, b: f64, tol: f64, evaluations: &mut usize) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<f64>,
{
    let first = kronrod(&mut f, a, b)?;
    *evaluations += 15;
    let mut error = first.error;
    let mut heap = BinaryHeap::new();
    heap.push(first);

    while error > tol {
        if heap.len() >= MAX_PANELS {
            return Err(Error::Accuracy { tol, estimate: error });
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // interval exhausted at machine resolution
            return Err(Error::Accuracy { tol, estimate: error });
        }
        let left = kronrod(&mut f, worst.a, mid)?;
        let right = kronrod(&mut f, mid, worst.b)?;
        *evaluations += 30;
        error += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
        // re-sum to shed drift from the running updates
        if heap.len() % 64 == 0 {
            error = heap.iter().map(|p| p.error).sum();
        }
    }
    let value = heap.iter().map(|p| p.value).sum();
    let error = heap.iter().map(|p| p.error).sum();
    Ok((value, error))
}
