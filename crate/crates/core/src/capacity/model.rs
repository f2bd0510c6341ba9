use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::channel::db_to_transmittance;
use crate::error::{check_probability, param, Result};
use crate::keyrate::{
    secure_key_rate, Counts, KeyRateInputs, KeyRateResult, SecurityBudget, SiftedTally,
};

/// Excess loss of the reference 1x64 splitter above the ideal `10 log10 64`.
pub const SPLITTER_EXCESS_DB: f64 = 19.5 - 18.061_799_739_838_87;

/// Loss of a `1 x ports` splitter with the reference excess loss.
pub fn splitter_loss_db(ports: usize) -> f64 {
    if ports <= 1 {
        0.0
    } else {
        10.0 * (ports as f64).log10() + SPLITTER_EXCESS_DB
    }
}

fn d_capacity() -> usize {
    64
}
fn d_p_opt() -> f64 {
    0.01
}
fn d_p_dc() -> f64 {
    6e-8
}
fn d_p_t() -> f64 {
    0.0098
}
fn d_eta_r() -> f64 {
    0.388
}
fn d_alpha() -> f64 {
    0.2
}
fn d_splitter() -> f64 {
    19.5
}
fn d_mu() -> f64 {
    0.52
}
fn d_nu() -> f64 {
    0.13
}
fn d_p_mu() -> f64 {
    0.69
}
fn d_p_z() -> f64 {
    0.9
}
fn d_eps_sec() -> f64 {
    1e-9
}
fn d_eps_cor() -> f64 {
    1e-15
}
fn d_f_e() -> f64 {
    1.16
}
fn d_freq() -> f64 {
    50e6
}
fn d_n_z() -> f64 {
    1e7
}
fn d_one() -> usize {
    1
}

/// Parameters of the cross-talk/loss gain model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CapacityParams {
    /// Network capacity `N_c`.
    #[serde(default = "d_capacity")]
    pub capacity: usize,
    /// Active users `n`.
    #[serde(default = "d_capacity")]
    pub active: usize,
    #[serde(default = "d_p_dc")]
    pub p_dc: f64,
    #[serde(default = "d_p_opt")]
    pub p_opt: f64,
    #[serde(default = "d_p_t")]
    pub p_t: f64,
    /// Receiver transmittance `eta_r`.
    #[serde(default = "d_eta_r")]
    pub eta_r: f64,
    #[serde(default = "d_splitter")]
    pub splitter_loss_db: f64,
    #[serde(default = "d_alpha")]
    pub attenuation_db_per_km: f64,
    #[serde(default)]
    pub distance_km: f64,
    #[serde(default = "d_mu")]
    pub mu: f64,
    #[serde(default = "d_nu")]
    pub nu: f64,
    #[serde(default = "d_p_mu")]
    pub p_mu: f64,
    /// Basis probability at the transmitter and basis split at the receiver.
    #[serde(default = "d_p_z")]
    pub p_z: f64,
    #[serde(default = "d_eps_sec")]
    pub eps_sec: f64,
    #[serde(default = "d_eps_cor")]
    pub eps_cor: f64,
    #[serde(default = "d_f_e")]
    pub f_e: f64,
    #[serde(default = "d_freq")]
    pub frequency_hz: f64,
    /// Sifted Z block size the tallies are scaled to.
    #[serde(default = "d_n_z")]
    pub n_z: f64,
    #[serde(default = "d_one")]
    pub interleave: usize,
}

impl Default for CapacityParams {
    fn default() -> Self {
        CapacityParams {
            capacity: 64,
            active: 64,
            p_dc: 6e-8,
            p_opt: 0.01,
            p_t: 0.0098,
            eta_r: 0.388,
            splitter_loss_db: 19.5,
            attenuation_db_per_km: 0.2,
            distance_km: 0.0,
            mu: 0.52,
            nu: 0.13,
            p_mu: 0.69,
            p_z: 0.9,
            eps_sec: 1e-9,
            eps_cor: 1e-15,
            f_e: 1.16,
            frequency_hz: 50e6,
            n_z: 1e7,
            interleave: 1,
        }
    }
}

impl CapacityParams {
    pub fn total_loss_db(&self) -> f64 {
        self.attenuation_db_per_km * self.distance_km + self.splitter_loss_db
            - 10.0 * self.eta_r.log10()
    }

    /// `eta = eta_ch eta_spl eta_r`.
    pub fn eta(&self) -> f64 {
        db_to_transmittance(self.attenuation_db_per_km * self.distance_km + self.splitter_loss_db)
            * self.eta_r
    }

    pub fn validate(&self) -> Result<()> {
        if self.active == 0 || self.active > self.capacity {
            return Err(param(format!(
                "active users {} must be in 1..={}",
                self.active, self.capacity
            )));
        }
        for (n, p) in [
            ("p_dc", self.p_dc),
            ("p_opt", self.p_opt),
            ("p_T", self.p_t),
            ("P_mu", self.p_mu),
            ("P_Z", self.p_z),
        ] {
            check_probability(n, p)?;
        }
        if !(self.eta_r > 0.0 && self.eta_r <= 1.0)
            || self.distance_km < 0.0
            || self.splitter_loss_db < 0.0
        {
            return Err(param("transmittances must lie in (0, 1]"));
        }
        if !(self.mu > self.nu && self.nu > 0.0) || self.interleave == 0 || !(self.n_z > 0.0) {
            return Err(param("need mu > nu > 0, M >= 1 and n_z > 0"));
        }
        Ok(())
    }

    fn crosstalk_factor(&self) -> f64 {
        if self.capacity > 1 {
            self.p_t * (self.active - 1) as f64 / (self.capacity - 1) as f64
        } else {
            0.0
        }
    }
}

/// Z-basis gain and error rate for intensity `k`:
/// `Q = k eta (1 + x) + p_dc`, `E = (k eta (p_opt + x/2) + p_dc/2) / Q`
/// with `x = p_T (n - 1) / (N_c - 1)`.
pub fn gain_qber(k: f64, params: &CapacityParams) -> Result<(f64, f64)> {
    params.validate()?;
    let x = params.crosstalk_factor();
    let ke = k * params.eta();
    let q = ke * (1.0 + x) + params.p_dc;
    if q <= 0.0 {
        return Err(param("zero gain"));
    }
    let e = (ke * (params.p_opt + 0.5 * x) + 0.5 * params.p_dc) / q;
    Ok((q, e))
}

/// Gain-weighted Z-basis error rate over both intensities.
pub fn weighted_qber(params: &CapacityParams) -> Result<f64> {
    let (qm, em) = gain_qber(params.mu, params)?;
    let (qn, en) = gain_qber(params.nu, params)?;
    let p_nu = 1.0 - params.p_mu;
    let den = params.p_mu * qm + p_nu * qn;
    if den <= 0.0 {
        return Err(param("zero gain"));
    }
    Ok((params.p_mu * em * qm + p_nu * en * qn) / den)
}

/// Expected tallies scaled so that the sifted Z block equals `n_z`, and the
/// total pulse count (sync and random) needed to collect it.
pub fn expected_tally(params: &CapacityParams) -> Result<(SiftedTally, f64)> {
    let (qm, em) = gain_qber(params.mu, params)?;
    let (qn, en) = gain_qber(params.nu, params)?;
    let pk = [params.p_mu, 1.0 - params.p_mu];
    let gains = [(qm, em), (qn, en)];
    let pz = params.p_z;
    let px = 1.0 - pz;
    let per_pulse_z: f64 = pz * pz * (0..2).map(|i| pk[i] * gains[i].0).sum::<f64>();
    let random = params.n_z / per_pulse_z;
    let mut t = SiftedTally::default();
    for (b, pb) in [pz, px].into_iter().enumerate() {
        for i in 0..2 {
            let (q, e) = gains[i];
            let sent = random * pb * pk[i];
            t.counts[b][i] = Counts {
                sent,
                detected: sent * pb * q,
                errors: sent * pb * q * e,
            };
        }
    }
    let m = params.interleave as f64;
    Ok((t, random * (m + 1.0) / m))
}

fn key_rate(params: &CapacityParams) -> Result<KeyRateResult> {
    let (tally, total) = expected_tally(params)?;
    let m = params.interleave as f64;
    secure_key_rate(&KeyRateInputs {
        tally,
        mu: params.mu,
        nu: params.nu,
        p_mu: params.p_mu,
        p_nu: 1.0 - params.p_mu,
        eps_sec: params.eps_sec,
        eps_cor: params.eps_cor,
        f_e: params.f_e,
        frequency_hz: params.frequency_hz,
        total_pulses: total,
        q: m / (m + 1.0),
        budget: SecurityBudget::default(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityPoint {
    pub n_users: usize,
    pub distance_km: f64,
    pub total_loss_db: f64,
    pub e_z: f64,
    pub rate_bps: f64,
}

/// Per-user secure key rate from expected tallies; every user runs at the
/// full repetition rate in its own slot.
pub fn simulate_capacity(params: &CapacityParams) -> Result<CapacityPoint> {
    let r = key_rate(params)?;
    Ok(CapacityPoint {
        n_users: params.active,
        distance_km: params.distance_km,
        total_loss_db: params.total_loss_db(),
        e_z: weighted_qber(params)?,
        rate_bps: r.rate_bps,
    })
}

/// Evaluates every `(users, distance)` combination.
pub fn sweep(
    base: &CapacityParams,
    users: &[usize],
    distances_km: &[f64],
) -> Result<Vec<CapacityPoint>> {
    let mut out = Vec::with_capacity(users.len() * distances_km.len());
    for &n in users {
        for &d in distances_km {
            let p = CapacityParams {
                active: n,
                distance_km: d,
                ..base.clone()
            };
            out.push(simulate_capacity(&p)?);
        }
    }
    Ok(out)
}

/// Columns: `n_users,distance_km,total_loss_db,e_z,R_bps`.
pub fn write_capacity_csv<W: Write>(w: &mut W, points: &[CapacityPoint]) -> Result<()> {
    writeln!(w, "n_users,distance_km,total_loss_db,e_z,R_bps")?;
    for p in points {
        writeln!(
            w,
            "{},{},{:.4},{:.6e},{:.3}",
            p.n_users, p.distance_km, p.total_loss_db, p.e_z, p.rate_bps
        )?;
    }
    Ok(())
}
