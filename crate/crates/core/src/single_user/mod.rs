//! Single-node allocations (P1–P4) and their fading averages.
//!
//! Per realization every solver works with the effective SNR gain
//! `c = a0 h^2`: the gain is paid once on the energy downlink and once on the
//! data uplink (slow fading, `h1 = h2`). The rate constraint
//! `B t2 log2(1 + β c t1/t2) >= R0` is always active at the optimum.
//!
//! Power allocation (P2, P4) prices `β` with a multiplier `μ` chosen so the
//! average power constraint `E{β} = 1` holds; see [`MultiplierState`].

mod equal_slots;
mod free_slots;

pub use equal_slots::{avg_td_p1, avg_td_p2, calibrate_mu_p2, p2_beta, solve_p1, solve_p2, P2_CALIBRATION_TOL};
pub use free_slots::{
    avg_td_p3, avg_td_p4, calibrate_mu_p4_exact, p3_delay_for_gain, p4_approx_beta, p4_approx_mu, p4_exact_beta,
    p4_exact_root, p4_lagrangian, solve_p3, solve_p4, solve_p4_with, BetaRoot, BetaScan, P4_CALIBRATION_TOL,
};

use std::f64::consts::LN_2;

use crate::channel::{ChannelGain, FadingModel, LinkBudget};
use crate::error::{Error, Result};

/// One single-node problem instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemParams {
    /// Bandwidth `B` in Hz.
    pub bandwidth_b: f64,
    /// Payload `R0` in bits.
    pub payload_r0: f64,
    /// Average SNR `a0`, linear.
    pub snr_a0: f64,
    pub fading: FadingModel,
}

impl SystemParams {
    pub fn new(bandwidth_b: f64, payload_r0: f64, snr_a0: f64, fading: FadingModel) -> Result<Self> {
        for (name, v) in [("bandwidth", bandwidth_b), ("payload", payload_r0), ("snr", snr_a0)] {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::InvalidParams(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(Self {
            bandwidth_b,
            payload_r0,
            snr_a0,
            fading,
        })
    }

    pub fn from_link_budget(bandwidth_b: f64, payload_r0: f64, link: &LinkBudget, fading: FadingModel) -> Result<Self> {
        Self::new(bandwidth_b, payload_r0, crate::channel::average_snr(link), fading)
    }

    pub fn with_payload(&self, payload_r0: f64) -> Result<Self> {
        Self::new(self.bandwidth_b, payload_r0, self.snr_a0, self.fading)
    }

    /// `R0 ln2 / B`: the uplink time of a unit-spectral-efficiency-in-nats link.
    pub fn time_scale(&self) -> f64 {
        self.payload_r0 * LN_2 / self.bandwidth_b
    }

    /// Effective SNR gain `a0 h^2` of a realization.
    pub fn snr_gain(&self, h: ChannelGain) -> Result<f64> {
        let h = h.positive()?;
        Ok(self.snr_a0 * h * h)
    }
}

/// Delay-minimizing allocation for one realization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Allocation {
    /// Downlink energy-transfer duration (s).
    pub t1: f64,
    /// Uplink data duration (s).
    pub t2: f64,
    /// HAP power coefficient.
    pub beta: f64,
    /// Bits deliverable in `t2`.
    pub rate_bits: f64,
}

impl Allocation {
    pub(crate) fn new(t1: f64, t2: f64, beta: f64, params: &SystemParams, snr_gain: f64) -> Self {
        Self {
            t1,
            t2,
            beta,
            rate_bits: rate_bits(params.bandwidth_b, t1, t2, beta * snr_gain),
        }
    }

    /// Transmission delay `t1 + t2`.
    pub fn delay(&self) -> f64 {
        self.t1 + self.t2
    }

    /// Energy harvested by the node, `η β P_h d^(-α) h t1` (joules).
    pub fn harvested_energy(&self, link: &LinkBudget, h: ChannelGain) -> f64 {
        link.eta * self.beta * link.p_h * link.d.powf(-link.alpha) * h.value() * self.t1
    }

    /// Node transmit power over the uplink slot (watts).
    pub fn node_power(&self, link: &LinkBudget, h: ChannelGain) -> f64 {
        self.harvested_energy(link, h) / self.t2
    }

    /// `rate_bits / R0 - 1`; zero when the rate constraint is active.
    pub fn rate_slack(&self, params: &SystemParams) -> f64 {
        self.rate_bits / params.payload_r0 - 1.0
    }
}

/// `B t2 log2(1 + βc t1 / t2)`.
pub fn rate_bits(bandwidth_b: f64, t1: f64, t2: f64, beta_snr_gain: f64) -> f64 {
    bandwidth_b * t2 * (beta_snr_gain * t1 / t2).ln_1p() / LN_2
}

/// Average-power multiplier `μ` and how well it meets `E{β} = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MultiplierState {
    pub mu: f64,
    /// `|E{β*} - 1|` at acceptance.
    pub calibration_residual: f64,
}

impl MultiplierState {
    pub fn new(mu: f64) -> Result<Self> {
        if !mu.is_finite() || mu <= 0.0 {
            return Err(Error::Domain(format!("multiplier must be positive, got {mu}")));
        }
        Ok(Self {
            mu,
            calibration_residual: f64::NAN,
        })
    }
}

/// How `P4` obtains `β*` per realization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum P4Mode {
    /// Root of the exact stationarity equation, with `μ*` calibrated by
    /// bisection.
    Exact,
    /// Closed form obtained by freezing `β = E{β} = 1` inside `W0`.
    Approx,
}

const BRACKET_STEPS: usize = 60;
const REFINE_STEPS: usize = 200;

/// Bisection on `ln μ` for the strictly decreasing map `μ ↦ E{β*(μ)}`.
pub(crate) fn calibrate_mu<F>(mut mean_beta: F, tol: f64) -> Result<MultiplierState>
where
    F: FnMut(f64) -> Result<f64>,
{
    let mut mu = 1.0;
    let mut e = mean_beta(mu)?;
    let accept = |mu: f64, e: f64| MultiplierState {
        mu,
        calibration_residual: (e - 1.0).abs(),
    };
    if (e - 1.0).abs() <= tol {
        return Ok(accept(mu, e));
    }

    // Bracket: E{β} > 1 at lo, < 1 at hi.
    let (mut lo, mut hi) = (mu, mu);
    let mut found = false;
    let grow = e > 1.0;
    for _ in 0..BRACKET_STEPS {
        mu = if grow { mu * 2.0 } else { mu * 0.5 };
        e = mean_beta(mu)?;
        if (e - 1.0).abs() <= tol {
            return Ok(accept(mu, e));
        }
        if grow {
            lo = hi;
            hi = mu;
        } else {
            hi = lo;
            lo = mu;
        }
        if (e < 1.0) == grow {
            found = true;
            break;
        }
    }
    if !found {
        return Err(Error::BracketFailure {
            what: format!("average-power multiplier (last μ = {mu:e}, E{{β}} = {e})"),
        });
    }

    let (mut llo, mut lhi) = (lo.ln(), hi.ln());
    for _ in 0..REFINE_STEPS {
        let lmid = 0.5 * (llo + lhi);
        let mid = lmid.exp();
        let e = mean_beta(mid)?;
        if (e - 1.0).abs() <= tol {
            return Ok(accept(mid, e));
        }
        if e > 1.0 {
            llo = lmid;
        } else {
            lhi = lmid;
        }
        if lhi - llo < 4.0 * f64::EPSILON * llo.abs().max(1.0) {
            return Err(Error::RootNotFound(format!(
                "μ bracket collapsed at {mid:e} with |E{{β}} - 1| = {:e} > {tol:e}",
                (e - 1.0).abs()
            )));
        }
    }
    Err(Error::RootNotFound("μ bisection exhausted".into()))
}
