//! One HAP serving `K` nodes in TDMA (P5 and P6).
//!
//! All nodes harvest during the common downlink slot `t1` and then send
//! `R0` bits each in uplink slots `t2[k]` that fill the same duration,
//! `Σ t2[k] = t1`. P5 uses full power; P6 adds a power coefficient `β`
//! priced at `θ`, calibrated so that `E{β*} = 1` over the joint gains.
//!
//! Durations are handled in units of `τ = R0 ln2 / B` internally.

use std::f64::consts::LN_2;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::channel::{ChannelGain, FadingModel};
use crate::error::{Error, Result};
use crate::montecarlo::{estimate, estimate_on_panel, DelayStats, GainPanel};
use crate::quadrature::guard;
use crate::roots::{brent, brent_with_values};

/// Default cap on the number of nodes.
pub const DEFAULT_MAX_NODES: usize = 64;
/// Calibration target `|Ê{β*} - 1|`.
pub const THETA_TOL: f64 = 1e-3;
pub const MAX_SUBGRADIENT_ITERATIONS: usize = 500;
/// `ζ_i = ZETA0 / sqrt(i)`.
pub const ZETA0: f64 = 0.5;
pub const MAX_NEWTON_STEPS: usize = 200;
/// Smallest damping factor tried by the Newton line search.
pub const DAMPING_FLOOR: f64 = 1.0 / 1_048_576.0;
/// Calibration panels below this size are rejected.
pub const MIN_CALIBRATION_SAMPLES: usize = 1000;

const NEWTON_TOL: f64 = 1e-12;
const NEWTON_ACCEPT: f64 = 1e-9;
const P5_T1_CAP: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
pub struct MultiUserParams {
    /// Bandwidth `B` in Hz.
    pub bandwidth_b: f64,
    /// Payload `R0` in bits, common to every node.
    pub payload_r0: f64,
    /// Average SNR `a_k` of each node, linear.
    pub snr_a: Vec<f64>,
    pub fading: FadingModel,
}

impl MultiUserParams {
    pub fn new(bandwidth_b: f64, payload_r0: f64, snr_a: Vec<f64>, fading: FadingModel) -> Result<Self> {
        for (name, v) in [("bandwidth", bandwidth_b), ("payload", payload_r0)] {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::InvalidParams(format!("{name} must be positive, got {v}")));
            }
        }
        if snr_a.is_empty() {
            return Err(Error::InvalidParams("at least one node is required".into()));
        }
        if let Some(a) = snr_a.iter().find(|a| !a.is_finite() || **a <= 0.0) {
            return Err(Error::InvalidParams(format!("node SNR must be positive, got {a}")));
        }
        Ok(Self {
            bandwidth_b,
            payload_r0,
            snr_a,
            fading,
        })
    }

    pub fn k(&self) -> usize {
        self.snr_a.len()
    }

    /// `R0 ln2 / B`.
    pub fn time_scale(&self) -> f64 {
        self.payload_r0 * LN_2 / self.bandwidth_b
    }

    fn effective_gains(&self, gains: &[ChannelGain]) -> Result<Vec<f64>> {
        if gains.len() != self.k() {
            return Err(Error::InvalidParams(format!(
                "expected {} gains, got {}",
                self.k(),
                gains.len()
            )));
        }
        gains
            .iter()
            .zip(&self.snr_a)
            .map(|(h, a)| {
                let h = h.positive()?;
                Ok(a * h * h)
            })
            .collect()
    }

    fn effective_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter().zip(&self.snr_a).map(|(h, a)| a * h * h).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiUserAllocation {
    /// Common downlink duration (s).
    pub t1: f64,
    /// Uplink slot of each node (s).
    pub t2: Vec<f64>,
    pub beta: f64,
}

impl MultiUserAllocation {
    /// `t1 + Σ t2`.
    pub fn delay(&self) -> f64 {
        self.t1 + self.t2.iter().sum::<f64>()
    }

    /// Bits each node delivers in its slot.
    pub fn rates_bits(&self, params: &MultiUserParams, gains: &[ChannelGain]) -> Result<Vec<f64>> {
        let c = params.effective_gains(gains)?;
        Ok(c
            .iter()
            .zip(&self.t2)
            .map(|(c, t2)| params.bandwidth_b * t2 * (self.beta * c * self.t1 / t2).ln_1p() / LN_2)
            .collect())
    }

    /// `Σ t2 / t1 - 1`.
    pub fn sum_slack(&self) -> f64 {
        self.t2.iter().sum::<f64>() / self.t1 - 1.0
    }
}

/// Sub-gradient state of the power price `θ`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubgradientState {
    /// Price of `β` in seconds, never negative.
    pub theta: f64,
    /// Step schedule `ζ_i = zeta0 / sqrt(i)`, in units of the initial price.
    pub zeta0: f64,
    /// Rate multipliers `λ_k` (s/bit); panel means after calibration.
    pub lambda: Vec<f64>,
    /// Multiplier of `Σ t2 = t1`; panel mean after calibration.
    pub mu: f64,
    /// Sub-gradient iterations, or Newton steps for a single inner solve.
    pub iteration: usize,
    /// `|Ê{β*} - 1|` on the calibration panel; NaN for a single inner solve.
    pub residual: f64,
    /// `θ` before every update, then the accepted value.
    pub theta_trace: Vec<f64>,
}

impl SubgradientState {
    /// State carrying only a price, for evaluating P6 at a given `θ`.
    pub fn at_theta(theta: f64, k: usize) -> Self {
        Self {
            theta,
            zeta0: ZETA0,
            lambda: vec![f64::NAN; k],
            mu: f64::NAN,
            iteration: 0,
            residual: f64::NAN,
            theta_trace: vec![theta],
        }
    }
}

/// Ratio `u = x t1 / t2` solving `ln(1+u)/u = r` for `0 < r < 1`.
fn snr_for_ratio(r: f64) -> Result<f64> {
    if !(r > 0.0 && r < 1.0) {
        return Err(Error::Infeasible(format!("uplink ratio {r} outside (0, 1)")));
    }
    let lnr = r.ln();
    let f = |l: f64| {
        let u = l.exp();
        (u.ln_1p() / u).ln() - lnr
    };
    let guess = (2.0 * (1.0 - r) / r).ln();
    let (mut lo, mut hi) = (guess, guess);
    let (mut flo, mut fhi) = (f(lo), f(hi));
    let mut steps = 0;
    while flo <= 0.0 {
        lo -= 2.0;
        flo = f(lo);
        steps += 1;
        if steps > 400 {
            return Err(Error::BracketFailure { what: "uplink slot".into() });
        }
    }
    while fhi >= 0.0 {
        hi += 2.0;
        fhi = f(hi);
        steps += 1;
        if steps > 400 {
            return Err(Error::BracketFailure { what: "uplink slot".into() });
        }
    }
    Ok(brent_with_values(f, lo, hi, flo, fhi, 1e-15, 4.0 * f64::EPSILON, 200)?.exp())
}

/// `t2 / t1` for node gain `x` with the rate equality at downlink `t1 = t1_s τ`.
fn slot_ratio(x: f64, t1_scaled: f64) -> Result<f64> {
    Ok(x / snr_for_ratio(1.0 / (x * t1_scaled))?)
}

/// Uplink slot `t2` with `B t2 log2(1 + x t1/t2) = R0`.
///
/// The left side increases in `t2` towards `B x t1 / ln2`, so a slot exists
/// only when `x t1 > R0 ln2 / B`; otherwise [`Error::Infeasible`].
pub fn ul_slot_for_t1(snr_times_gain: f64, t1: f64, bandwidth_b: f64, payload_r0: f64) -> Result<f64> {
    for (name, v) in [
        ("gain", snr_times_gain),
        ("t1", t1),
        ("bandwidth", bandwidth_b),
        ("payload", payload_r0),
    ] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::Domain(format!("uplink slot needs positive {name}, got {v}")));
        }
    }
    let tau = payload_r0 * LN_2 / bandwidth_b;
    if snr_times_gain * t1 <= tau {
        return Err(Error::Infeasible(format!(
            "no uplink slot carries {payload_r0} bits after t1 = {t1:e} s at gain {snr_times_gain:e}"
        )));
    }
    Ok(t1 * slot_ratio(snr_times_gain, t1 / tau)?)
}

/// P5 in units of `τ`: returns `t1/τ` and the slot ratios `t2[k]/t1`.
fn p5_scaled(c: &[f64]) -> Result<(f64, Vec<f64>)> {
    let floor = c.iter().map(|c| 1.0 / c).fold(0.0, f64::max);
    let excess = |t1: f64| -> Result<f64> {
        let mut s = 0.0;
        for &x in c {
            s += slot_ratio(x, t1)?;
        }
        Ok(s - 1.0)
    };
    let lo = floor * (1.0 + 1e-9);
    let mut hi = 2.0 * floor;
    loop {
        if excess(hi)? < 0.0 {
            break;
        }
        hi *= 2.0;
        if hi > P5_T1_CAP {
            return Err(Error::BracketFailure {
                what: format!("P5 downlink slot beyond {P5_T1_CAP:e} time units"),
            });
        }
    }
    let root = brent(
        |l| excess(l.exp()).unwrap_or(f64::NAN),
        lo.ln(),
        hi.ln(),
        1e-15,
        4.0 * f64::EPSILON,
        300,
    )?;
    let t1 = root.exp();
    let ratios = c.iter().map(|&x| slot_ratio(x, t1)).collect::<Result<Vec<_>>>()?;
    Ok((t1, ratios))
}

fn scaled_to_allocation(tau: f64, t1: f64, ratios: &[f64], beta: f64) -> MultiUserAllocation {
    let t1s = tau * t1;
    MultiUserAllocation {
        t1: t1s,
        t2: ratios.iter().map(|r| r * t1s).collect(),
        beta,
    }
}

/// P5: full power, common downlink, slots filling `t1`. Total delay `2 t1`.
pub fn solve_p5(params: &MultiUserParams, gains: &[ChannelGain]) -> Result<MultiUserAllocation> {
    let c = params.effective_gains(gains)?;
    let (t1, ratios) = p5_scaled(&c)?;
    Ok(scaled_to_allocation(params.time_scale(), t1, &ratios, 1.0))
}

/// Unknowns `[ln t1, ln t2[k], ln β, Λ[k], μ]`, durations in units of `τ`,
/// `Λ_k = λ_k B / ln2`.
struct P6System<'a> {
    c: &'a [f64],
    /// `θ / τ`.
    theta: f64,
}

impl P6System<'_> {
    fn k(&self) -> usize {
        self.c.len()
    }

    fn residual(&self, z: &[f64], out: &mut DVector<f64>) {
        let k = self.k();
        let (t1, beta, mu) = (z[0].exp(), z[k + 1].exp(), z[2 * k + 2]);
        let (mut a, mut d, mut g) = (mu - 1.0, 0.0, 1.0);
        for i in 0..k {
            let (t2, lam, c) = (z[1 + i].exp(), z[k + 2 + i], self.c[i]);
            let x = c * beta * t1 / t2;
            let dd = 1.0 + x;
            let l = x.ln_1p();
            a += lam * c * beta / dd;
            out[1 + i] = -mu + lam * (l - x / dd) - 1.0;
            d += lam * c * t1 / dd;
            out[k + 2 + i] = t2 * l - 1.0;
            g -= t2 / t1;
        }
        out[0] = a;
        out[k + 1] = d / self.theta - 1.0;
        out[2 * k + 2] = g;
    }

    fn jacobian(&self, z: &[f64], jac: &mut DMatrix<f64>) {
        let k = self.k();
        let (t1, beta) = (z[0].exp(), z[k + 1].exp());
        let (ip, ib, imu) = (0, k + 1, 2 * k + 2);
        jac.fill(0.0);
        jac[(0, imu)] = 1.0;
        for i in 0..k {
            let (iq, il) = (1 + i, k + 2 + i);
            let (t2, lam, c) = (z[iq].exp(), z[il], self.c[i]);
            let x = c * beta * t1 / t2;
            let dd = 1.0 + x;
            let d2 = dd * dd;
            let l = x.ln_1p();

            // (a) μ + Σ Λ c β / D - 1
            jac[(0, ip)] -= lam * c * beta * x / d2;
            jac[(0, iq)] = lam * c * beta * x / d2;
            jac[(0, ib)] += lam * c * beta / d2;
            jac[(0, il)] = c * beta / dd;

            // (b_k) -μ + Λ (ln(1+x) - x/D) - 1
            let w = lam * x * x / d2;
            jac[(iq, ip)] = w;
            jac[(iq, iq)] = -w;
            jac[(iq, ib)] = w;
            jac[(iq, il)] = l - x / dd;
            jac[(iq, imu)] = -1.0;

            // (d) Σ Λ c t1 / D / θ - 1
            let v = lam * c * t1 / d2 / self.theta;
            jac[(ib, ip)] += v;
            jac[(ib, iq)] = v * x;
            jac[(ib, ib)] -= v * x;
            jac[(ib, il)] = c * t1 / dd / self.theta;

            // (e_k) t2 ln(1+x) - 1
            jac[(il, ip)] = t2 * x / dd;
            jac[(il, iq)] = t2 * (l - x / dd);
            jac[(il, ib)] = t2 * x / dd;

            // (g) 1 - Σ t2 / t1
            jac[(imu, ip)] += t2 / t1;
            jac[(imu, iq)] = -t2 / t1;
        }
    }

    /// Start at the P5 point with `β = 1` and the multipliers that make
    /// the `t1` and `t2` stationarity rows vanish there.
    fn initial(&self) -> Result<Vec<f64>> {
        let k = self.k();
        let (t1, ratios) = p5_scaled(self.c)?;
        let mut z = vec![0.0; 2 * k + 3];
        z[0] = t1.ln();
        let mut s = 0.0;
        let mut phi = vec![0.0; k];
        for i in 0..k {
            let t2 = ratios[i] * t1;
            z[1 + i] = t2.ln();
            let x = self.c[i] * t1 / t2;
            let dd = 1.0 + x;
            phi[i] = x.ln_1p() - x / dd;
            s += self.c[i] / dd / phi[i];
        }
        let mu = (1.0 - s) / (1.0 + s);
        for i in 0..k {
            z[k + 2 + i] = (1.0 + mu) / phi[i];
        }
        z[2 * k + 2] = mu;
        Ok(z)
    }

    /// `θ/τ` at which `β* = 1`, read off the P5 start.
    fn unit_power_price(c: &[f64]) -> Result<f64> {
        let sys = P6System { c, theta: 1.0 };
        let z = sys.initial()?;
        let k = c.len();
        let t1 = z[0].exp();
        Ok((0..k)
            .map(|i| {
                let x = c[i] * t1 / z[1 + i].exp();
                z[k + 2 + i] * c[i] * t1 / (1.0 + x)
            })
            .sum())
    }

    fn newton(&self, mut z: Vec<f64>) -> Result<(Vec<f64>, usize)> {
        let n = z.len();
        let mut f = DVector::zeros(n);
        let mut trial_f = DVector::zeros(n);
        let mut jac = DMatrix::zeros(n, n);
        let mut trial = vec![0.0; n];
        self.residual(&z, &mut f);
        let mut norm = f.norm();
        for it in 0..MAX_NEWTON_STEPS {
            if f.amax() <= NEWTON_TOL {
                return Ok((z, it));
            }
            self.jacobian(&z, &mut jac);
            let step = jac.clone().lu().solve(&(-&f));
            let Some(step) = step else {
                return self.diverged(it, f.amax());
            };
            let mut alpha = 1.0;
            let mut accepted = false;
            while alpha >= DAMPING_FLOOR {
                for i in 0..n {
                    trial[i] = z[i] + alpha * step[i];
                }
                self.residual(&trial, &mut trial_f);
                let tn = trial_f.norm();
                if tn.is_finite() && tn < norm {
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
            }
            if !accepted {
                if f.amax() <= NEWTON_ACCEPT {
                    return Ok((z, it));
                }
                return self.diverged(it, f.amax());
            }
            z.copy_from_slice(&trial);
            std::mem::swap(&mut f, &mut trial_f);
            norm = f.norm();
        }
        if f.amax() <= NEWTON_ACCEPT {
            return Ok((z, MAX_NEWTON_STEPS));
        }
        self.diverged(MAX_NEWTON_STEPS, f.amax())
    }

    fn diverged<T>(&self, iterations: usize, residual: f64) -> Result<T> {
        Err(Error::NewtonDivergence {
            iterations,
            residual,
            gains: self.c.to_vec(),
        })
    }
}

fn check_theta(theta: f64) -> Result<()> {
    // at θ = 0 the marginal value of β never vanishes and β* is unbounded
    if theta.is_finite() && theta > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("power price θ must be positive, got {theta}")))
    }
}

/// Solve P6 for one gain vector at price `θ` (s per unit `β`) by damped
/// Newton from the P5 point.
pub fn solve_p6_inner(
    params: &MultiUserParams,
    gains: &[ChannelGain],
    theta: f64,
) -> Result<(MultiUserAllocation, SubgradientState)> {
    check_theta(theta)?;
    let c = params.effective_gains(gains)?;
    let tau = params.time_scale();
    let sys = P6System { c: &c, theta: theta / tau };
    let (z, steps) = sys.newton(sys.initial()?)?;
    let k = c.len();
    let alloc = allocation_from(tau, &z, k);
    let state = SubgradientState {
        theta,
        zeta0: ZETA0,
        lambda: z[k + 2..2 * k + 2].iter().map(|l| l * LN_2 / params.bandwidth_b).collect(),
        mu: z[2 * k + 2],
        iteration: steps,
        residual: f64::NAN,
        theta_trace: vec![theta],
    };
    Ok((alloc, state))
}

fn allocation_from(tau: f64, z: &[f64], k: usize) -> MultiUserAllocation {
    MultiUserAllocation {
        t1: tau * z[0].exp(),
        t2: z[1..=k].iter().map(|q| tau * q.exp()).collect(),
        beta: z[k + 1].exp(),
    }
}

/// Price `θ` at which the P6 solution of one gain vector uses `β = 1`.
pub fn p6_unit_power_price(params: &MultiUserParams, gains: &[ChannelGain]) -> Result<f64> {
    let c = params.effective_gains(gains)?;
    Ok(params.time_scale() * P6System::unit_power_price(&c)?)
}

/// Projected sub-gradient update `max(0, θ + ζ (Ê{β} - 1))`.
///
/// `β*` falls as `θ` rises, so the price moves up while the average power
/// is exceeded.
pub fn subgradient_step(theta: f64, zeta: f64, mean_beta: f64) -> f64 {
    (theta + zeta * (mean_beta - 1.0)).max(0.0)
}

/// Calibrate `θ` so that `Ê{β*} = 1` to within 1e-3 on a fixed panel of
/// `mc_samples` gain vectors.
pub fn calibrate_theta(params: &MultiUserParams, mc_samples: usize, seed: u64) -> Result<SubgradientState> {
    guard(&params.fading)?;
    if mc_samples < MIN_CALIBRATION_SAMPLES {
        return Err(Error::InvalidParams(format!(
            "calibration needs at least {MIN_CALIBRATION_SAMPLES} samples, got {mc_samples}"
        )));
    }
    let k = params.k();
    let tau = params.time_scale();
    let panel = GainPanel::draw(&params.fading, k, mc_samples, seed);
    let rows: Vec<Vec<f64>> = panel.rows().map(|r| params.effective_row(r)).collect();

    let starts: Vec<Result<(Vec<f64>, f64)>> = rows
        .par_iter()
        .map(|c| {
            let sys = P6System { c, theta: 1.0 };
            Ok((sys.initial()?, P6System::unit_power_price(c)?))
        })
        .collect();
    let mut points = Vec::with_capacity(rows.len());
    let mut theta0 = 0.0;
    for s in starts {
        let (z, price) = s?;
        points.push(z);
        theta0 += price;
    }
    theta0 /= rows.len() as f64;

    let mut theta = theta0;
    let mut trace = Vec::new();
    let mut last = f64::NAN;
    for i in 1..=MAX_SUBGRADIENT_ITERATIONS {
        trace.push(theta * tau);
        if !(theta > 0.0) {
            break;
        }
        let solved: Vec<Result<(Vec<f64>, usize)>> = rows
            .par_iter()
            .zip(points.par_iter())
            .map(|(c, z)| P6System { c, theta }.newton(z.clone()))
            .collect();
        let mut sum_beta = 0.0;
        for (slot, s) in points.iter_mut().zip(solved) {
            let (z, _) = s?;
            sum_beta += z[k + 1].exp();
            *slot = z;
        }
        let mean_beta = sum_beta / rows.len() as f64;
        last = (mean_beta - 1.0).abs();
        if last <= THETA_TOL {
            let n = rows.len() as f64;
            let lambda = (0..k)
                .map(|j| points.iter().map(|z| z[k + 2 + j]).sum::<f64>() / n * LN_2 / params.bandwidth_b)
                .collect();
            let mu = points.iter().map(|z| z[2 * k + 2]).sum::<f64>() / n;
            trace.push(theta * tau);
            return Ok(SubgradientState {
                theta: theta * tau,
                zeta0: ZETA0,
                lambda,
                mu,
                iteration: i,
                residual: last,
                theta_trace: trace,
            });
        }
        let zeta = ZETA0 / (i as f64).sqrt();
        theta = subgradient_step(theta, zeta * theta0, mean_beta);
    }
    Err(Error::NonConvergence {
        iterations: trace.len(),
        last,
        trace,
    })
}

fn mc_guard(params: &MultiUserParams) -> Result<()> {
    guard(&params.fading)
}

/// Monte-Carlo average P5 delay `E{2 t1}`.
pub fn avg_td_p5(params: &MultiUserParams, mc_samples: usize, seed: u64) -> Result<DelayStats> {
    mc_guard(params)?;
    let tau = params.time_scale();
    estimate(
        |row| Ok(2.0 * tau * p5_scaled(&params.effective_row(row))?.0),
        &params.fading,
        params.k(),
        mc_samples,
        seed,
    )
}

/// Monte-Carlo average P6 delay at the price in `state`.
pub fn avg_td_p6(params: &MultiUserParams, state: &SubgradientState, mc_samples: usize, seed: u64) -> Result<DelayStats> {
    mc_guard(params)?;
    check_theta(state.theta)?;
    let tau = params.time_scale();
    let theta = state.theta / tau;
    estimate(
        |row| {
            let c = params.effective_row(row);
            let sys = P6System { c: &c, theta };
            let (z, _) = sys.newton(sys.initial()?)?;
            Ok(2.0 * tau * z[0].exp())
        },
        &params.fading,
        params.k(),
        mc_samples,
        seed,
    )
}

/// Panel mean of the P6 `β*` at a given price (common random numbers).
pub fn mean_beta_p6(params: &MultiUserParams, theta: f64, panel: &GainPanel) -> Result<DelayStats> {
    check_theta(theta)?;
    let tau = params.time_scale();
    estimate_on_panel(
        |row| {
            let c = params.effective_row(row);
            let sys = P6System {
                c: &c,
                theta: theta / tau,
            };
            let (z, _) = sys.newton(sys.initial()?)?;
            Ok(z[c.len() + 1].exp())
        },
        panel,
    )
}
