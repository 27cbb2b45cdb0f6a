//! Free downlink and uplink slots (P3 and P4).
//!
//! With `s(y) = 1 + W0((y - 1)/e)` and `τ = R0 ln2 / B`, the delay-optimal
//! slots at effective gain `y` are `t2 = τ / s(y)` and
//! `t1 = t2 (e^s - 1) / y`. P3 evaluates them at `y = a0 h^2`; P4 at
//! `y = β a0 h^2` with `β` priced by `μ`.

use super::{calibrate_mu, Allocation, MultiplierState, P4Mode, SystemParams};
use crate::channel::ChannelGain;
use crate::error::{Error, Result};
use crate::montecarlo::DelayStats;
use crate::multi_user::ul_slot_for_t1;
use crate::quadrature::{expect_singular, guard, DEFAULT_TOL};
use crate::roots::brent_with_values;
use crate::specfun::w0_shifted;

/// P4 exact calibration target `|E{β*} - 1|`.
pub const P4_CALIBRATION_TOL: f64 = 1e-4;

/// Delay-optimal `(t1, t2)` for effective gain `y`, and `s(y)`.
fn free_slots(tau: f64, y: f64) -> Result<(f64, f64, f64)> {
    let s = w0_shifted(y)?;
    if !(s > 0.0) {
        return Err(Error::DegenerateChannel(y));
    }
    let t2 = tau / s;
    Ok((t2 * s.exp_m1() / y, t2, s))
}

/// P3: free slots at full power, `β = 1`.
pub fn solve_p3(params: &SystemParams, h: ChannelGain) -> Result<Allocation> {
    let c = params.snr_gain(h)?;
    let (t1, t2, _) = free_slots(params.time_scale(), c)?;
    Ok(Allocation::new(t1, t2, 1.0, params, c))
}

/// Minimum `t1 + t2` at effective gain `snr_gain` (P3 delay).
pub fn p3_delay_for_gain(params: &SystemParams, snr_gain: f64) -> Result<f64> {
    if !(snr_gain > 0.0) || !snr_gain.is_finite() {
        return Err(Error::DegenerateChannel(snr_gain));
    }
    let (t1, t2, _) = free_slots(params.time_scale(), snr_gain)?;
    Ok(t1 + t2)
}

/// Average P3 delay.
pub fn avg_td_p3(params: &SystemParams) -> Result<DelayStats> {
    let a0 = params.snr_a0;
    let r = expect_singular(|x| p3_delay_for_gain(params, a0 * x * x), &params.fading, DEFAULT_TOL)?;
    Ok(DelayStats::from_quadrature(r.value, r.abs_error_estimate, r.evaluations))
}

/// Log-spaced sign scan used to bracket roots of the P4 `β` equation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaScan {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl Default for BetaScan {
    fn default() -> Self {
        Self {
            lo: 1e-8,
            hi: 1e8,
            points: 200,
        }
    }
}

impl BetaScan {
    /// Window used by averaging paths, where quadrature nodes close to
    /// `h = 0` push `β*` far above `1e8`. Same density as the default.
    pub const WIDE: BetaScan = BetaScan {
        lo: 1e-16,
        hi: 1e16,
        points: 400,
    };

    fn validate(&self) -> Result<()> {
        if !(self.lo > 0.0 && self.hi > self.lo && self.hi.is_finite() && self.points >= 2) {
            return Err(Error::InvalidParams(format!("invalid β scan {self:?}")));
        }
        Ok(())
    }
}

/// Root of the P4 `β` equation and how many sign changes the scan saw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaRoot {
    pub beta: f64,
    /// More than one means the Lagrangian tie-break picked among roots.
    pub bracket_count: usize,
}

/// `ln` of left over right side of the P4 `β` equation
/// `(μ y β / τ) s(βy) = e^{s(βy)} - 1`, written with `y = a0 h^2`.
fn p4_log_residual(tau: f64, c: f64, mu: f64, beta: f64) -> Result<f64> {
    let s = w0_shifted(beta * c)?;
    // ln(s / (e^s - 1)), accurate for small s
    let ratio = if s < 1e-8 { -0.5 * s } else { (s / s.exp_m1()).ln() };
    Ok((mu * c * beta * beta / tau).ln() + ratio)
}

fn lagrangian_at(tau: f64, c: f64, mu: f64, beta: f64) -> Result<f64> {
    let (t1, t2, _) = free_slots(tau, beta * c)?;
    Ok(t1 + t2 + mu * beta)
}

fn exact_root(tau: f64, c: f64, mu: f64, scan: &BetaScan) -> Result<BetaRoot> {
    scan.validate()?;
    let (llo, lhi) = (scan.lo.ln(), scan.hi.ln());
    let step = (lhi - llo) / (scan.points - 1) as f64;
    let f = |l: f64| p4_log_residual(tau, c, mu, l.exp());

    let mut best: Option<(f64, f64)> = None;
    let mut count = 0;
    let mut prev_l = llo;
    let mut prev_f = f(llo)?;
    for i in 1..scan.points {
        let l = if i + 1 == scan.points { lhi } else { llo + step * i as f64 };
        let fl = f(l)?;
        if prev_f == 0.0 || prev_f.signum() != fl.signum() {
            count += 1;
            let root = brent_with_values(
                |x| f(x).unwrap_or(f64::NAN),
                prev_l,
                l,
                prev_f,
                fl,
                1e-15,
                4.0 * f64::EPSILON,
                200,
            )?;
            let beta = root.exp();
            let obj = lagrangian_at(tau, c, mu, beta)?;
            if best.is_none_or(|(_, b)| obj < b) {
                best = Some((beta, obj));
            }
        }
        prev_l = l;
        prev_f = fl;
    }
    match best {
        Some((beta, _)) => Ok(BetaRoot {
            beta,
            bracket_count: count,
        }),
        None => Err(Error::RootNotFound(format!(
            "P4 β equation has no sign change on [{:e}, {:e}] (a0h² = {c:e}, μ = {mu:e})",
            scan.lo, scan.hi
        ))),
    }
}

fn check_mu(mu: f64) -> Result<()> {
    if mu.is_finite() && mu > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("multiplier μ must be positive, got {mu}")))
    }
}

/// Root of the exact P4 `β` equation on a given scan window. When several
/// roots are bracketed the one with the smallest `t1 + t2 + μβ` wins.
pub fn p4_exact_root(params: &SystemParams, h: ChannelGain, mu: f64, scan: &BetaScan) -> Result<BetaRoot> {
    check_mu(mu)?;
    let c = params.snr_gain(h)?;
    exact_root(params.time_scale(), c, mu, scan)
}

/// Exact P4 power coefficient on the default `[1e-8, 1e8]` scan.
pub fn p4_exact_beta(params: &SystemParams, h: ChannelGain, mu: f64) -> Result<f64> {
    Ok(p4_exact_root(params, h, mu, &BetaScan::default())?.beta)
}

/// Per-realization Lagrangian `t1 + t2 + μβ`, with `(t1, t2)` the best
/// slots for power coefficient `beta`.
pub fn p4_lagrangian(params: &SystemParams, h: ChannelGain, mu: f64, beta: f64) -> Result<f64> {
    check_mu(mu)?;
    if !(beta > 0.0) {
        return Err(Error::Domain(format!("β must be positive, got {beta}")));
    }
    let c = params.snr_gain(h)?;
    lagrangian_at(params.time_scale(), c, mu, beta)
}

/// `μ*` with `E{β*} = 1` to within 1e-4, `β*` from the exact equation.
pub fn calibrate_mu_p4_exact(params: &SystemParams) -> Result<MultiplierState> {
    guard(&params.fading)?;
    let (a0, tau) = (params.snr_a0, params.time_scale());
    calibrate_mu(
        |mu| {
            let r = expect_singular(
                |x| Ok(exact_root(tau, a0 * x * x, mu, &BetaScan::WIDE)?.beta),
                &params.fading,
                DEFAULT_TOL,
            )?;
            Ok(r.value)
        },
        P4_CALIBRATION_TOL,
    )
}

/// `sqrt((e^s - 1) / (y s))` at `y = a0 h^2`, the shape of the approximate `β*`.
fn approx_shape(c: f64) -> Result<f64> {
    let s = w0_shifted(c)?;
    if !(s > 0.0) {
        return Err(Error::DegenerateChannel(c));
    }
    Ok((s.exp_m1() / (c * s)).sqrt())
}

/// Approximate P4 coefficient: `β` frozen at its mean inside `W0`.
pub fn p4_approx_beta(params: &SystemParams, h: ChannelGain, mu: f64) -> Result<f64> {
    check_mu(mu)?;
    let c = params.snr_gain(h)?;
    Ok((params.time_scale() / mu).sqrt() * approx_shape(c)?)
}

/// Closed-form multiplier of the approximation, `τ E{shape}^2`.
///
/// `E{β} = 1` holds by construction, so the stored residual is the
/// quadrature error bound propagated to `E{β}`.
pub fn p4_approx_mu(params: &SystemParams) -> Result<MultiplierState> {
    let a0 = params.snr_a0;
    let r = expect_singular(|x| approx_shape(a0 * x * x), &params.fading, DEFAULT_TOL)?;
    Ok(MultiplierState {
        mu: params.time_scale() * r.value * r.value,
        calibration_residual: r.abs_error_estimate / r.value,
    })
}

/// P4 allocation with the default scan window for exact mode.
pub fn solve_p4(params: &SystemParams, h: ChannelGain, state: &MultiplierState, mode: P4Mode) -> Result<Allocation> {
    solve_p4_with(params, h, state, mode, &BetaScan::default())
}

/// P4 allocation. Exact mode: `t1 = β μ`, `t2 = β^2 μ y / (e^s - 1)`.
/// Approx mode: `t1 = β μ` and `t2` from the rate equality, which always
/// has a solution because `β^2 μ y > τ` for the approximate `β`.
pub fn solve_p4_with(
    params: &SystemParams,
    h: ChannelGain,
    state: &MultiplierState,
    mode: P4Mode,
    scan: &BetaScan,
) -> Result<Allocation> {
    check_mu(state.mu)?;
    let c = params.snr_gain(h)?;
    let (t1, t2, beta) = p4_slots(params, c, state.mu, mode, scan)?;
    Ok(Allocation::new(t1, t2, beta, params, c))
}

fn p4_slots(params: &SystemParams, c: f64, mu: f64, mode: P4Mode, scan: &BetaScan) -> Result<(f64, f64, f64)> {
    let tau = params.time_scale();
    match mode {
        P4Mode::Exact => {
            let beta = exact_root(tau, c, mu, scan)?.beta;
            let s = w0_shifted(beta * c)?;
            Ok((beta * mu, beta * beta * mu * c / s.exp_m1(), beta))
        }
        P4Mode::Approx => {
            let beta = (tau / mu).sqrt() * approx_shape(c)?;
            let t1 = beta * mu;
            let t2 = ul_slot_for_t1(beta * c, t1, params.bandwidth_b, params.payload_r0)?;
            Ok((t1, t2, beta))
        }
    }
}

/// Average P4 delay at a multiplier calibrated for `mode`.
pub fn avg_td_p4(params: &SystemParams, state: &MultiplierState, mode: P4Mode) -> Result<DelayStats> {
    check_mu(state.mu)?;
    let a0 = params.snr_a0;
    let r = expect_singular(
        |x| {
            let (t1, t2, _) = p4_slots(params, a0 * x * x, state.mu, mode, &BetaScan::WIDE)?;
            Ok(t1 + t2)
        },
        &params.fading,
        DEFAULT_TOL,
    )?;
    Ok(DelayStats::from_quadrature(r.value, r.abs_error_estimate, r.evaluations))
}
