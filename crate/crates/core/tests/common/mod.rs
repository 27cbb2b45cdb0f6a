//! Brute-force reference solvers shared by the integration tests. None of
//! them uses the Lambert-W closed forms or the library's root finders.

#![allow(dead_code)]

use std::f64::consts::LN_2;

use wpc_delay::channel::FadingModel;
use wpc_delay::single_user::SystemParams;

pub const B: f64 = 1e5;

pub fn params(r0: f64, snr_db: f64, m: f64) -> SystemParams {
    SystemParams::new(B, r0, wpc_delay::db_to_linear(snr_db), FadingModel::new(m).unwrap()).unwrap()
}

/// Plain bisection; `f(lo)` and `f(hi)` must differ in sign.
pub fn bisect(mut f: impl FnMut(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let flo = f(lo);
    assert!(flo * f(hi) <= 0.0, "oracle bracket [{lo}, {hi}] does not straddle a root");
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if (f(mid) < 0.0) == (flo < 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Bits carried in `t2` after harvesting for `t1` at effective gain `x`.
pub fn rate(x: f64, t1: f64, t2: f64) -> f64 {
    B * t2 * (x * t1 / t2).ln_1p() / LN_2
}

/// Equal-slot duration from the rate equality `B t0 log2(1 + x) = R0`.
pub fn p1_slot(x: f64, r0: f64) -> f64 {
    bisect(|t| B * t * (1.0 + x).log2() - r0, 0.0, 1e9)
}

/// Uplink duration meeting the rate equality after downlink `t1`.
pub fn ul_slot(x: f64, t1: f64, r0: f64) -> f64 {
    let mut hi = t1;
    while rate(x, t1, hi) < r0 {
        hi *= 2.0;
        assert!(hi < 1e30, "slot infeasible");
    }
    bisect(|t| rate(x, t1, t) - r0, 1e-300, hi)
}

/// P3 minimum delay: golden-section on `ln t1` over the feasible range.
pub fn p3_delay(x: f64, r0: f64) -> f64 {
    let floor = r0 * LN_2 / (B * x);
    let td = |l: f64| {
        let t1 = l.exp();
        t1 + ul_slot(x, t1, r0)
    };
    let (mut a, mut b) = (floor.ln() + 1e-9, floor.ln() + (1.0 + x).ln() + 5.0);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        let x1 = b - g * (b - a);
        let x2 = a + g * (b - a);
        if td(x1) < td(x2) {
            b = x2;
        } else {
            a = x1;
        }
    }
    td(0.5 * (a + b))
}

/// P5 downlink slot for effective gains `x`: outer bisection on `t1`.
pub fn p5_t1(x: &[f64], r0: f64) -> f64 {
    let floor = x.iter().map(|x| r0 * LN_2 / (B * x)).fold(0.0, f64::max);
    let g = |t1: f64| x.iter().map(|x| ul_slot(*x, t1, r0)).sum::<f64>() - t1;
    let mut hi = 2.0 * floor;
    while g(hi) > 0.0 {
        hi *= 2.0;
    }
    bisect(g, floor * (1.0 + 1e-9), hi)
}

/// Smallest per-realization P4 Lagrangian `delay(βx) + μβ` on a
/// log-spaced grid of `points` values of `β` in `[1e-8, 1e8]`, where
/// `delay` is the free-slot minimum delay at a given effective gain.
pub fn p4_grid_min(x: f64, mu: f64, points: usize, delay: impl Fn(f64) -> f64) -> f64 {
    (0..points)
        .map(|i| {
            let beta = 10f64.powf(-8.0 + 16.0 * i as f64 / (points - 1) as f64);
            delay(beta * x) + mu * beta
        })
        .fold(f64::INFINITY, f64::min)
}
