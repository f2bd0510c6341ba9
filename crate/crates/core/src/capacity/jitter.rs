use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

use crate::error::{param, Result};

/// Detector jitter at a given repetition rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JitterSpec {
    pub frequency_hz: f64,
    /// Full width at half maximum, seconds.
    pub fwhm_s: f64,
}

impl JitterSpec {
    /// `sigma = T_FWHM / (2 sqrt(2 ln 2))`.
    pub fn sigma_s(&self) -> f64 {
        self.fwhm_s / (2.0 * (2.0 * std::f64::consts::LN_2).sqrt())
    }
}

/// Error rate from photons leaving their slot: `P = erf(1/(2f) / (sigma sqrt 2))`,
/// `E = (1 - P) / 2`.
pub fn jitter_qber(spec: &JitterSpec) -> f64 {
    let sigma = spec.sigma_s();
    if sigma == 0.0 {
        return 0.0;
    }
    let half_slot = 0.5 / spec.frequency_hz;
    (1.0 - erf(half_slot / (sigma * std::f64::consts::SQRT_2))) / 2.0
}

/// Largest FWHM jitter whose error rate stays at `e_max`, by bisection.
pub fn max_jitter(frequency_hz: f64, e_max: f64) -> Result<f64> {
    if !(frequency_hz > 0.0) || !(e_max > 0.0 && e_max < 0.5) {
        return Err(param("need f > 0 and E_max in (0, 0.5)"));
    }
    let at = |fwhm_s: f64| {
        jitter_qber(&JitterSpec {
            frequency_hz,
            fwhm_s,
        })
    };
    let mut lo = 0.0;
    let mut hi = 1.0 / frequency_hz;
    while at(hi) < e_max {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if at(mid) < e_max {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-22 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}
