//! Nakagami-m channel model: unit-mean power-gain law, sampling and the
//! link budget that sets the average SNR at the access point.

use rand::Rng;
use rand_distr::{Distribution, Gamma};

use crate::error::{Error, Result};
use crate::specfun::log_gamma;

/// Physical link budget of one node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkBudget {
    /// Energy harvesting efficiency, `0 < eta <= 1`.
    pub eta: f64,
    /// Average HAP transmit power in watts.
    pub p_h: f64,
    /// HAP to node distance in meters.
    pub d: f64,
    /// Path-loss exponent.
    pub alpha: f64,
    /// Noise power at the HAP in watts.
    pub sigma2: f64,
}

impl LinkBudget {
    pub fn new(eta: f64, p_h: f64, d: f64, alpha: f64, sigma2: f64) -> Result<Self> {
        let all_positive = [eta, p_h, d, alpha, sigma2]
            .iter()
            .all(|v| v.is_finite() && *v > 0.0);
        if !all_positive || eta > 1.0 {
            return Err(Error::InvalidParams(format!(
                "link budget needs positive fields and eta <= 1 \
                 (eta={eta}, p_h={p_h}, d={d}, alpha={alpha}, sigma2={sigma2})"
            )));
        }
        Ok(Self {
            eta,
            p_h,
            d,
            alpha,
            sigma2,
        })
    }
}

/// Average SNR `a0 = eta * P_h * d^(-2 alpha) / sigma^2` (linear).
///
/// The distance enters squared in the exponent because the path loss is
/// paid once on the energy downlink and once on the data uplink.
pub fn average_snr(link: &LinkBudget) -> f64 {
    link.eta * link.p_h * link.d.powf(-2.0 * link.alpha) / link.sigma2
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(linear: f64) -> f64 {
    10.0 * linear.log10()
}

/// Nakagami fading order `m` of the unit-mean power gain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FadingModel {
    m: f64,
}

impl FadingModel {
    pub fn new(m: f64) -> Result<Self> {
        if !m.is_finite() || m <= 0.0 {
            return Err(Error::InvalidParams(format!(
                "fading order must be positive, got {m}"
            )));
        }
        Ok(Self { m })
    }

    pub fn m(&self) -> f64 {
        self.m
    }

    /// `ln(m^m / Γ(m))`, the log normalisation of [`gain_pdf`].
    pub fn log_norm(&self) -> f64 {
        let m = self.m;
        m * m.ln() - log_gamma(m).expect("m > 0 by construction")
    }
}

/// One realization of the channel power gain `h = |h0|^2`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct ChannelGain(f64);

impl ChannelGain {
    pub fn new(h: f64) -> Result<Self> {
        if h.is_nan() || h < 0.0 {
            return Err(Error::InvalidParams(format!("channel gain must be >= 0, got {h}")));
        }
        Ok(Self(h))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// Gain usable by a solver: strictly positive.
    pub fn positive(self) -> Result<f64> {
        if self.0 > 0.0 && self.0.is_finite() {
            Ok(self.0)
        } else {
            Err(Error::DegenerateChannel(self.0))
        }
    }
}

/// Density of the unit-mean power gain, `m^m x^(m-1) e^(-mx) / Γ(m)`.
pub fn gain_pdf(x: f64, fading: &FadingModel) -> Result<f64> {
    if x.is_nan() || x <= 0.0 {
        return Err(Error::Domain(format!("gain_pdf requires x > 0, got {x}")));
    }
    Ok(pdf_unchecked(x, fading.m, fading.log_norm()))
}

#[inline]
pub(crate) fn pdf_unchecked(x: f64, m: f64, log_norm: f64) -> f64 {
    (log_norm + (m - 1.0) * x.ln() - m * x).exp()
}

/// Gamma(shape m, scale 1/m) sampler for the power gain.
#[derive(Debug, Clone, Copy)]
pub struct GainSampler {
    gamma: Gamma<f64>,
}

impl GainSampler {
    pub fn new(fading: &FadingModel) -> Self {
        let m = fading.m();
        Self {
            gamma: Gamma::new(m, 1.0 / m).expect("shape and scale positive"),
        }
    }

    /// Draw a gain strictly above `floor`, resampling otherwise.
    pub fn sample_above<R: Rng + ?Sized>(&self, rng: &mut R, floor: f64) -> ChannelGain {
        loop {
            let h = self.gamma.sample(rng);
            if h > floor {
                return ChannelGain(h);
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ChannelGain {
        self.sample_above(rng, 0.0)
    }
}

/// Draw one unit-mean Nakagami-m power gain (resampling the null event).
pub fn sample_gain<R: Rng + ?Sized>(fading: &FadingModel, rng: &mut R) -> ChannelGain {
    GainSampler::new(fading).sample(rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::E;

    #[test]
    fn pdf_exponential_special_case() {
        let f = FadingModel::new(1.0).unwrap();
        assert!((gain_pdf(1.0, &f).unwrap() - (-1f64).exp()).abs() < 1e-15);
        assert!((gain_pdf(2.0, &f).unwrap() - (-2f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn pdf_order_four_at_one() {
        let f = FadingModel::new(4.0).unwrap();
        let expected = 256.0 * E.powi(-4) / 6.0;
        assert!((gain_pdf(1.0, &f).unwrap() - expected).abs() < 1e-14 * expected);
    }

    #[test]
    fn pdf_domain() {
        let f = FadingModel::new(4.0).unwrap();
        assert!(gain_pdf(0.0, &f).is_err());
        assert!(gain_pdf(-1.0, &f).is_err());
    }

    #[test]
    fn invalid_models_rejected() {
        assert!(FadingModel::new(0.0).is_err());
        assert!(FadingModel::new(f64::NAN).is_err());
        assert!(ChannelGain::new(-0.1).is_err());
        assert!(matches!(
            ChannelGain::new(0.0).unwrap().positive(),
            Err(Error::DegenerateChannel(_))
        ));
        assert!(LinkBudget::new(1.5, 1.0, 1.0, 2.0, 1.0).is_err());
        assert!(LinkBudget::new(0.5, 1.0, 0.0, 2.0, 1.0).is_err());
    }

    #[test]
    fn average_snr_examples() {
        let cases = [
            (1.0, 1.0, 1.0, 2.0, 1.0),
            (0.5, 2.0, 1.0, 2.0, 1.0),
            (1.0, 1.0, 2.0, 1.0, 0.25),
        ];
        for (eta, p, d, a, s) in cases {
            let link = LinkBudget::new(eta, p, d, a, s).unwrap();
            assert!((average_snr(&link) - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn average_snr_is_homogeneous_in_power() {
        let link = LinkBudget::new(0.7, 0.3, 12.0, 2.7, 1e-9).unwrap();
        let doubled = LinkBudget { p_h: 0.6, ..link };
        assert_eq!(average_snr(&doubled), 2.0 * average_snr(&link));
    }

    #[test]
    fn db_conversion_round_trip() {
        assert!((db_to_linear(10.0) - 10.0).abs() < 1e-12);
        assert!((linear_to_db(db_to_linear(5.0)) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn sample_moments_order_four() {
        let f = FadingModel::new(4.0).unwrap();
        let sampler = GainSampler::new(&f);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 1_000_000;
        let (mut s1, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let h = sampler.sample(&mut rng).value();
            s1 += h;
            s2 += h * h;
        }
        let mean = s1 / n as f64;
        let second = s2 / n as f64;
        assert!((mean - 1.0).abs() < 0.01, "mean {mean}");
        assert!((second - 1.25).abs() < 0.02, "second moment {second}");
    }

    #[test]
    fn sample_mean_within_three_standard_errors() {
        for m in [0.3, 1.0, 2.5, 4.0, 10.0] {
            let f = FadingModel::new(m).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            let n = 200_000;
            let mean = (0..n).map(|_| sample_gain(&f, &mut rng).value()).sum::<f64>() / n as f64;
            // var(h) = 1/m
            let se = (1.0 / m / n as f64).sqrt();
            assert!((mean - 1.0).abs() < 3.0 * se, "m = {m}: mean {mean}, se {se}");
        }
    }

    #[test]
    fn kolmogorov_smirnov_against_integrated_pdf() {
        let f = FadingModel::new(4.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let n = 100_000;
        let mut draws: Vec<f64> = (0..n).map(|_| sample_gain(&f, &mut rng).value()).collect();
        draws.sort_by(|a, b| a.partial_cmp(b).unwrap());

        // CDF by composite Simpson on a fine grid of the density.
        let upper = 12.0;
        let cells = 240_000;
        let dx = upper / cells as f64;
        let pdf = |x: f64| if x <= 0.0 { 0.0 } else { gain_pdf(x, &f).unwrap() };
        let mut cdf = vec![0.0; cells / 2 + 1];
        for i in 0..cells / 2 {
            let a = 2.0 * i as f64 * dx;
            cdf[i + 1] = cdf[i] + dx / 3.0 * (pdf(a) + 4.0 * pdf(a + dx) + pdf(a + 2.0 * dx));
        }
        assert!((cdf[cells / 2] - 1.0).abs() < 1e-9);
        let cdf_at = |x: f64| {
            let pos = x / (2.0 * dx);
            let i = (pos.floor() as usize).min(cells / 2 - 1);
            let t = pos - i as f64;
            cdf[i] * (1.0 - t) + cdf[i + 1] * t
        };

        let mut d: f64 = 0.0;
        for (i, &x) in draws.iter().enumerate() {
            let fx = cdf_at(x);
            d = d.max((fx - i as f64 / n as f64).abs()).max(((i + 1) as f64 / n as f64 - fx).abs());
        }
        let critical = 1.628 / (n as f64).sqrt();
        assert!(d < critical, "KS statistic {d} >= {critical}");
    }
}
