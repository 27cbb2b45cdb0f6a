//! Minimum transmission delay for harvest-then-transmit wireless-powered
//! links over Nakagami-m fading.
//!
//! A hybrid access point (HAP) beams energy to one or `K` battery-less
//! nodes for `t1` seconds; each node then spends the harvested energy to
//! upload `R0` bits. The crate computes the delay-optimal downlink/uplink
//! durations and HAP power coefficient `β` for six problem variants:
//!
//! | problem | slots | power allocation |
//! |---------|-------|------------------|
//! | P1 | `t1 = t2` | no (`β = 1`) |
//! | P2 | `t1 = t2` | yes, `E{β} = 1` |
//! | P3 | free | no |
//! | P4 | free | yes (exact root or closed-form approximation) |
//! | P5 | `K` nodes, `Σ t2,k = t1` | no |
//! | P6 | `K` nodes, `Σ t2,k = t1` | yes, sub-gradient calibrated |
//!
//! Averages over the fading law use adaptive quadrature for the single-node
//! problems and seeded Monte-Carlo for the multi-node ones.

pub mod channel;
pub mod error;
pub mod montecarlo;
pub mod multi_user;
pub mod quadrature;
pub mod roots;
pub mod single_user;
pub mod specfun;

pub use channel::{average_snr, db_to_linear, gain_pdf, sample_gain, ChannelGain, FadingModel, LinkBudget};
pub use error::{Error, Result};
pub use montecarlo::{DelayStats, Method};
pub use multi_user::{MultiUserAllocation, MultiUserParams, SubgradientState};
pub use single_user::{Allocation, MultiplierState, P4Mode, SystemParams};
