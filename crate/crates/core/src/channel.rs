//! Time-correlated block fading and Shannon link rates.
//!
//! Small-scale fading follows a first-order Gauss-Markov recurrence
//! `h <- kappa * h + l`, `l ~ CN(0, 1 - kappa^2)`, with the Jakes correlation
//! `kappa = J0(2 pi f_D T)`. Rates are reported in MB per slot (1 MB = 10^6 bytes).

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub const SPEED_OF_LIGHT_MPS: f64 = 3e8;

/// Arguments below this use the power series, above it the Hankel expansion.
const J0_SERIES_LIMIT: f64 = 12.0;

/// Zeroth-order Bessel function of the first kind.
pub fn bessel_j0(x: f64) -> f64 {
    let x = x.abs();
    if x < J0_SERIES_LIMIT {
        j0_series(x)
    } else {
        j0_asymptotic(x)
    }
}

fn j0_series(x: f64) -> f64 {
    // sum_k (-1)^k (x^2/4)^k / (k!)^2
    let q = 0.25 * x * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        let kf = k as f64;
        term *= -q / (kf * kf);
        sum += term;
        if term.abs() < 1e-17 * sum.abs().max(1e-300) {
            break;
        }
    }
    sum
}

fn j0_asymptotic(x: f64) -> f64 {
    // J0(x) = sqrt(2/(pi x)) [P cos(chi) - Q sin(chi)], chi = x - pi/4,
    // a_k = prod_{j<=k} (-(2j-1)^2) / (k! 8^k).
    let mut p = 0.0;
    let mut q = 0.0;
    let mut a: f64 = 1.0; // a_0
    let mut xpow: f64 = 1.0;
    let mut last = f64::INFINITY;
    for k in 0..60 {
        let term = a / xpow;
        if term.abs() > last || term.abs() < 1e-18 {
            break;
        }
        last = term.abs();
        // even k feeds P with sign (-1)^(k/2); odd k feeds Q with sign (-1)^((k-1)/2)
        match k % 4 {
            0 => p += term,
            1 => q += term,
            2 => p -= term,
            _ => q -= term,
        }
        let next = (k + 1) as f64;
        let odd = 2.0 * next - 1.0;
        a *= -(odd * odd) / (next * 8.0);
        xpow *= x;
    }
    let chi = x - std::f64::consts::FRAC_PI_4;
    (2.0 / (std::f64::consts::PI * x)).sqrt() * (p * chi.cos() - q * chi.sin())
}

/// Jakes correlation between consecutive slots: `J0(2 pi (v f_c / c) T)`.
pub fn kappa_from_mobility(speed_mps: f64, carrier_hz: f64, slot_s: f64) -> Result<f64> {
    if !(carrier_hz > 0.0 && slot_s > 0.0 && speed_mps.is_finite()) {
        return Err(Error::usage(format!(
            "kappa_from_mobility needs carrier > 0 and slot > 0 (got {carrier_hz}, {slot_s})"
        )));
    }
    let doppler = speed_mps * carrier_hz / SPEED_OF_LIGHT_MPS;
    Ok(bessel_j0(2.0 * std::f64::consts::PI * doppler * slot_s))
}

/// Log-distance loss `(d0 / max(d, d0))^alpha` with `d0 = 1 m`.
pub fn large_scale_loss(distance_m: f64, exponent: f64) -> f64 {
    (1.0 / distance_m.max(1.0)).powf(exponent)
}

/// Draw from CN(0, variance).
pub fn complex_gaussian<R: Rng + ?Sized>(variance: f64, rng: &mut R) -> Complex64 {
    let s = (0.5 * variance).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(s * re, s * im)
}

/// Shannon rate in bits/s.
pub fn shannon_rate_bps(bandwidth_hz: f64, snr: f64) -> f64 {
    bandwidth_hz * (1.0 + snr.max(0.0)).log2()
}

pub fn bps_to_mb_per_slot(bps: f64, slot_s: f64) -> f64 {
    bps * slot_s / 8e6
}

/// One vehicle-to-server link.
#[derive(Debug, Clone, PartialEq)]
pub struct FadingLink {
    pub h: Complex64,
    pub kappa: f64,
    /// Linear large-scale power gain.
    pub large_scale: f64,
    pub bandwidth_hz: f64,
    pub noise_power_w: f64,
}

impl FadingLink {
    /// New link with `h ~ CN(0, 1)`.
    pub fn new<R: Rng + ?Sized>(
        kappa: f64,
        large_scale: f64,
        bandwidth_hz: f64,
        noise_power_w: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if !(kappa.abs() <= 1.0) {
            return Err(Error::validation(format!("|kappa| must be <= 1, got {kappa}")));
        }
        if !(large_scale > 0.0 && bandwidth_hz > 0.0 && noise_power_w > 0.0) {
            return Err(Error::validation("link large_scale, bandwidth and noise must be > 0"));
        }
        Ok(FadingLink { h: complex_gaussian(1.0, rng), kappa, large_scale, bandwidth_hz, noise_power_w })
    }

    /// One Gauss-Markov step.
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Complex64 {
        let innovation = complex_gaussian(1.0 - self.kappa * self.kappa, rng);
        self.h = self.h * self.kappa + innovation;
        self.h
    }

    /// `|h|^2 * large_scale`.
    pub fn gain(&self) -> f64 {
        self.h.norm_sqr() * self.large_scale
    }

    pub fn snr(&self, tx_power_w: f64) -> f64 {
        self.gain() * tx_power_w / self.noise_power_w
    }

    pub fn rate_bps(&self, tx_power_w: f64) -> f64 {
        shannon_rate_bps(self.bandwidth_hz, self.snr(tx_power_w))
    }

    pub fn rate_mb_per_slot(&self, tx_power_w: f64, slot_s: f64) -> f64 {
        bps_to_mb_per_slot(self.rate_bps(tx_power_w), slot_s)
    }
}

/// Rate in MB/slot for a given gain, without a link object (used when
/// converting gain histories).
pub fn rate_from_gain(gain: f64, tx_power_w: f64, noise_power_w: f64, bandwidth_hz: f64, slot_s: f64) -> f64 {
    bps_to_mb_per_slot(shannon_rate_bps(bandwidth_hz, gain * tx_power_w / noise_power_w), slot_s)
}
