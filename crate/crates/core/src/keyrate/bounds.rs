use serde::{Deserialize, Serialize};

use super::tally::SiftedTally;
use crate::error::{check_probability, param, Result};
use crate::protocol::{Basis, Intensity};

/// `h(x) = -x log2 x - (1 - x) log2 (1 - x)`.
pub fn binary_entropy(x: f64) -> Result<f64> {
    check_probability("entropy argument", x)?;
    if x == 0.0 || x == 1.0 {
        return Ok(0.0);
    }
    Ok(-x * x.log2() - (1.0 - x) * (1.0 - x).log2())
}

/// Error-correction leakage `n_z f_e h(e_z)`.
pub fn lambda_ec(n_z: f64, e_z: f64, f_e: f64) -> Result<f64> {
    if n_z < 0.0 || f_e < 1.0 {
        return Err(param("need n_z >= 0 and f_e >= 1"));
    }
    Ok(n_z * f_e * binary_entropy(e_z)?)
}

/// Partition of the secrecy parameter: `hoeffding` terms inside every
/// concentration bound and `key` terms in the privacy-amplification cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SecurityBudget {
    pub hoeffding: f64,
    pub key: f64,
}

impl Default for SecurityBudget {
    fn default() -> Self {
        SecurityBudget {
            hoeffding: 21.0,
            key: 19.0,
        }
    }
}

/// `6 log2(key / eps_sec) + log2(2 / eps_cor)`.
pub fn security_cost_bits(eps_sec: f64, eps_cor: f64, budget: &SecurityBudget) -> f64 {
    6.0 * (budget.key / eps_sec).log2() + (2.0 / eps_cor).log2()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecoyBounds {
    pub s0_lower: f64,
    pub s0_upper: f64,
    pub s1_lower: f64,
    /// Single-photon X-basis events, lower bound.
    pub x1_lower: f64,
    /// Single-photon X-basis errors, upper bound.
    pub v1_upper: f64,
    /// Upper bound on the single-photon phase error rate in Z.
    pub phase_error: f64,
}

struct Intensities {
    k: [f64; 2],
    p: [f64; 2],
}

impl Intensities {
    /// `tau_n = sum_k p_k e^-k k^n / n!` for n = 0, 1.
    fn tau(&self, n: i32) -> f64 {
        (0..2)
            .map(|i| self.p[i] * (-self.k[i]).exp() * self.k[i].powi(n))
            .sum()
    }

    /// Hoeffding-shifted, prior-corrected count `e^k / p_k (c_k +- delta)`.
    fn shifted(&self, counts: [f64; 2], i: usize, sign: f64, eps: f64, budget: f64) -> f64 {
        let total: f64 = counts.iter().sum();
        let delta = (total / 2.0 * (budget / eps).ln()).sqrt();
        self.k[i].exp() / self.p[i] * (counts[i] + sign * delta)
    }
}

/// Vacuum and single-photon bounds of one basis: `(s0_lower, s0_upper, s1_lower)`.
fn basis_bounds(iv: &Intensities, n: [f64; 2], m: [f64; 2], eps: f64, h: f64) -> (f64, f64, f64) {
    let (mu, nu) = (iv.k[0], iv.k[1]);
    let (t0, t1) = (iv.tau(0), iv.tau(1));
    let n_mu_up = iv.shifted(n, 0, 1.0, eps, h);
    let n_nu_lo = iv.shifted(n, 1, -1.0, eps, h);
    let total: f64 = n.iter().sum();
    let s0_lower = (t0 / (mu - nu) * (mu * n_nu_lo - nu * n_mu_up)).max(0.0);
    let s0_upper = 2.0 * (t0 * nu.exp() / iv.p[1] * m[1] + (total / 2.0 * (h / eps).ln()).sqrt());
    let s1_lower = t1 * mu / (nu * (mu - nu))
        * (n_nu_lo
            - nu * nu / (mu * mu) * n_mu_up
            - (mu * mu - nu * nu) / (mu * mu) * s0_upper / t0);
    (s0_lower, s0_upper, s1_lower)
}

/// Serfling-type correction transferring the X-basis single-photon error
/// rate `b` to the Z basis, with `c` Z and `d` X single-photon events.
fn phase_correction(eps: f64, b: f64, c: f64, d: f64, h: f64) -> f64 {
    let arg = (c + d) / (c * d * (1.0 - b) * b) * h * h / (eps * eps);
    ((c + d) * (1.0 - b) * b / (c * d * std::f64::consts::LN_2) * arg.log2()).sqrt()
}

/// Two-intensity finite-key decoy bounds. When the single-photon bounds
/// cross zero the phase error is reported as 1/2, which yields a zero rate.
pub fn decoy_bounds(
    tally: &SiftedTally,
    intensities: (f64, f64),
    probs: (f64, f64),
    eps_sec: f64,
    budget: &SecurityBudget,
) -> Result<DecoyBounds> {
    let (mu, nu) = intensities;
    if !(mu > nu && nu > 0.0) {
        return Err(param(format!("need mu > nu > 0, got {mu}, {nu}")));
    }
    check_probability("P_mu", probs.0)?;
    check_probability("P_nu", probs.1)?;
    if !(eps_sec > 0.0 && eps_sec < 1.0) {
        return Err(param("eps_sec must lie in (0, 1)"));
    }
    tally.validate()?;
    let iv = Intensities {
        k: [mu, nu],
        p: [probs.0, probs.1],
    };
    let per = |b: Basis, f: fn(&super::tally::Counts) -> f64| {
        [
            f(&tally.get(b, Intensity::Signal)),
            f(&tally.get(b, Intensity::Decoy)),
        ]
    };
    let (nz, mz) = (per(Basis::Z, |c| c.detected), per(Basis::Z, |c| c.errors));
    let (nx, mx) = (per(Basis::X, |c| c.detected), per(Basis::X, |c| c.errors));
    let h = budget.hoeffding;
    let (s0_lower, s0_upper, s1_lower) = basis_bounds(&iv, nz, mz, eps_sec, h);
    let (_, _, x1_lower) = basis_bounds(&iv, nx, mx, eps_sec, h);
    let v1_upper = iv.tau(1) / (mu - nu)
        * (iv.shifted(mx, 0, 1.0, eps_sec, h) - iv.shifted(mx, 1, -1.0, eps_sec, h));

    let phase_error = if s1_lower > 0.0 && x1_lower > 0.0 {
        let b = (v1_upper / x1_lower).clamp(1e-12, 0.5);
        (b + phase_correction(eps_sec, b, s1_lower, x1_lower, h)).min(0.5)
    } else {
        0.5
    };
    Ok(DecoyBounds {
        s0_lower,
        s0_upper,
        s1_lower,
        x1_lower,
        v1_upper,
        phase_error,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyRateInputs {
    pub tally: SiftedTally,
    pub mu: f64,
    pub nu: f64,
    pub p_mu: f64,
    pub p_nu: f64,
    pub eps_sec: f64,
    pub eps_cor: f64,
    pub f_e: f64,
    pub frequency_hz: f64,
    /// All emitted pulses, sync and random, over the accounted span.
    pub total_pulses: f64,
    /// Duty ratio `M / (M + 1)`.
    pub q: f64,
    pub budget: SecurityBudget,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyRateResult {
    pub n_z: f64,
    pub e_z: f64,
    pub s0_lower: f64,
    pub s1_lower: f64,
    pub phase_error: f64,
    pub lambda_ec: f64,
    pub security_bits: f64,
    /// Secret key length, clamped at 0.
    pub length_bits: f64,
    pub rate_bps: f64,
}

/// Key length and rate `R = l q f / N`.
pub fn secure_key_rate(inputs: &KeyRateInputs) -> Result<KeyRateResult> {
    if !(inputs.eps_cor > 0.0 && inputs.eps_cor < 1.0) {
        return Err(param("eps_cor must lie in (0, 1)"));
    }
    if !(inputs.q > 0.0 && inputs.q < 1.0) || !(inputs.frequency_hz > 0.0) {
        return Err(param("need q in (0, 1) and a positive frequency"));
    }
    let b = decoy_bounds(
        &inputs.tally,
        (inputs.mu, inputs.nu),
        (inputs.p_mu, inputs.p_nu),
        inputs.eps_sec,
        &inputs.budget,
    )?;
    let n_z = inputs.tally.n_z();
    let e_z = inputs.tally.e_z();
    let lec = lambda_ec(n_z, e_z, inputs.f_e)?;
    let security_bits = security_cost_bits(inputs.eps_sec, inputs.eps_cor, &inputs.budget);
    let raw = b.s0_lower + b.s1_lower.max(0.0) * (1.0 - binary_entropy(b.phase_error)?)
        - lec
        - security_bits;
    let length_bits = raw.max(0.0);
    let rate_bps = if inputs.total_pulses > 0.0 {
        length_bits * inputs.q * inputs.frequency_hz / inputs.total_pulses
    } else {
        0.0
    };
    Ok(KeyRateResult {
        n_z,
        e_z,
        s0_lower: b.s0_lower,
        s1_lower: b.s1_lower,
        phase_error: b.phase_error,
        lambda_ec: lec,
        security_bits,
        length_bits,
        rate_bps,
    })
}
