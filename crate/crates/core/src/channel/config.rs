use serde::{Deserialize, Serialize};

use crate::error::{check_probability, Error, Result};
use crate::protocol::{default_period_len, FrameSpec, SourceProbabilities};

/// 50 MHz repetition.
pub const DEFAULT_PERIOD_PS: f64 = 20_000.0;

/// Converts a loss in dB to a transmittance.
pub fn db_to_transmittance(db: f64) -> f64 {
    10f64.powf(-db / 10.0)
}

pub fn transmittance_to_db(eta: f64) -> f64 {
    -10.0 * eta.log10()
}

fn default_period() -> f64 {
    DEFAULT_PERIOD_PS
}
fn default_attenuation() -> f64 {
    0.2
}
fn default_sync_len() -> usize {
    100_000
}
fn default_interleave() -> usize {
    1
}
fn default_mu() -> f64 {
    0.52
}
fn default_nu() -> f64 {
    0.13
}
fn default_p_signal() -> f64 {
    0.69
}
fn default_p_z() -> f64 {
    0.9
}

/// One user's transmitter and the fiber feeding the node.
///
/// Pulse `n` (with `n >= start_index`) arrives at receiver time
/// `t0 + (n - start_index) * period * (1 + clock_error)`, where
/// `t0 = start_periods * period + slot * slot_spacing + delay_ps`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransmitterConfig {
    pub id: u32,
    pub slot: usize,
    #[serde(default = "default_period")]
    pub period_ps: f64,
    #[serde(default)]
    pub clock_error_ppm: f64,
    /// Unknown propagation delay in whole periods.
    #[serde(default)]
    pub start_periods: u64,
    #[serde(default)]
    pub delay_ps: f64,
    /// Transmitter pulse counter at `t0`.
    #[serde(default)]
    pub start_index: u64,
    #[serde(default)]
    pub fiber_km: f64,
    #[serde(default = "default_attenuation")]
    pub attenuation_db_per_km: f64,
    /// Additional channel loss (connectors, DWDM, or a measured link loss).
    #[serde(default)]
    pub extra_loss_db: f64,
    #[serde(default = "default_sync_len")]
    pub sync_len: usize,
    #[serde(default)]
    pub period_len: Option<usize>,
    #[serde(default = "default_interleave")]
    pub interleave: usize,
    #[serde(default = "default_mu")]
    pub mu: f64,
    #[serde(default = "default_nu")]
    pub nu: f64,
    #[serde(default = "default_p_signal")]
    pub p_signal: f64,
    #[serde(default = "default_p_z")]
    pub p_z: f64,
    /// Misalignment bit-flip probability `p_opt`.
    #[serde(default)]
    pub misalignment: f64,
    #[serde(default)]
    pub sync_seed: u64,
    #[serde(default)]
    pub payload_seed: u64,
}

impl TransmitterConfig {
    pub fn new(id: u32, slot: usize) -> Self {
        TransmitterConfig {
            id,
            slot,
            period_ps: DEFAULT_PERIOD_PS,
            clock_error_ppm: 0.0,
            start_periods: 0,
            delay_ps: 0.0,
            start_index: 0,
            fiber_km: 0.0,
            attenuation_db_per_km: 0.2,
            extra_loss_db: 0.0,
            sync_len: default_sync_len(),
            period_len: None,
            interleave: 1,
            mu: 0.52,
            nu: 0.13,
            p_signal: 0.69,
            p_z: 0.9,
            misalignment: 0.0,
            sync_seed: u64::from(id),
            payload_seed: 0x1000 + u64::from(id),
        }
    }

    pub fn channel_loss_db(&self) -> f64 {
        self.attenuation_db_per_km * self.fiber_km + self.extra_loss_db
    }

    /// `eta_ch = 10^(-loss/10)`.
    pub fn channel_transmittance(&self) -> f64 {
        db_to_transmittance(self.channel_loss_db())
    }

    pub fn frame_spec(&self) -> Result<FrameSpec> {
        let l1 = self
            .period_len
            .unwrap_or_else(|| default_period_len(self.sync_len));
        FrameSpec::new(self.sync_len, l1, self.interleave)
    }

    pub fn probabilities(&self) -> Result<SourceProbabilities> {
        SourceProbabilities::new(
            (self.p_signal, 1.0 - self.p_signal),
            (self.p_z, 1.0 - self.p_z),
        )
    }

    /// Mean photon number per pulse, `P_mu mu + P_nu nu`.
    pub fn mean_intensity(&self) -> f64 {
        self.p_signal * self.mu + (1.0 - self.p_signal) * self.nu
    }

    /// Actual pulse period including the clock error.
    pub fn true_period_ps(&self) -> f64 {
        self.period_ps * (1.0 + self.clock_error_ppm * 1e-6)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("transmitter {}: {m}", self.id)));
        if !(self.period_ps > 0.0) {
            return bad("period must be positive".into());
        }
        if self.clock_error_ppm.abs() > 1000.0 {
            return bad("clock error above 1000 ppm".into());
        }
        if self.channel_loss_db() < 0.0 {
            return bad("channel loss must be non-negative".into());
        }
        if !(self.mu > self.nu && self.nu >= 0.0) {
            return bad(format!(
                "need mu > nu >= 0, got mu={} nu={}",
                self.mu, self.nu
            ));
        }
        check_probability("misalignment", self.misalignment)?;
        self.probabilities()?;
        self.frame_spec()?;
        Ok(())
    }
}

fn default_slots() -> usize {
    20
}
fn default_gate() -> f64 {
    1000.0
}
fn default_one() -> f64 {
    1.0
}
fn default_receiver_transmittance() -> f64 {
    0.388
}
fn default_dark() -> f64 {
    6e-8
}
fn default_jitter() -> f64 {
    50.0
}

/// The shared receiver at the network node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReceiverConfig {
    #[serde(default = "default_period")]
    pub period_ps: f64,
    /// Number of TDM slots per period (`N_c`).
    #[serde(default = "default_slots")]
    pub slots: usize,
    #[serde(default = "default_gate")]
    pub gate_width_ps: f64,
    #[serde(default = "default_one")]
    pub detector_efficiency: f64,
    /// Receiver transmittance `eta_r`.
    #[serde(default = "default_receiver_transmittance")]
    pub transmittance: f64,
    #[serde(default)]
    pub splitter_loss_db: f64,
    /// Dark-count probability per gate per detector (`p_dc`).
    #[serde(default = "default_dark")]
    pub dark_count_prob: f64,
    /// Gaussian timing jitter standard deviation.
    #[serde(default = "default_jitter")]
    pub jitter_ps: f64,
    /// Passive basis split, fraction of photons sent to the Z detectors.
    #[serde(default = "default_p_z")]
    pub z_fraction: f64,
}

impl Default for ReceiverConfig {
    fn default() -> Self {
        ReceiverConfig {
            period_ps: DEFAULT_PERIOD_PS,
            slots: 20,
            gate_width_ps: 1000.0,
            detector_efficiency: 1.0,
            transmittance: 0.388,
            splitter_loss_db: 0.0,
            dark_count_prob: 6e-8,
            jitter_ps: 50.0,
            z_fraction: 0.9,
        }
    }
}

impl ReceiverConfig {
    pub fn slot_spacing_ps(&self) -> f64 {
        self.period_ps / self.slots as f64
    }

    /// `eta_spl * eta_r * detector efficiency`.
    pub fn transmittance_total(&self) -> f64 {
        db_to_transmittance(self.splitter_loss_db) * self.transmittance * self.detector_efficiency
    }

    /// Dark counts per picosecond per detector for a free-running detector.
    pub fn dark_rate_per_ps(&self) -> f64 {
        self.dark_count_prob / self.gate_width_ps
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("receiver: {m}")));
        if !(self.period_ps > 0.0) || self.slots == 0 {
            return bad("period and slot count must be positive");
        }
        if !(self.gate_width_ps > 0.0) || self.gate_width_ps > self.slot_spacing_ps() + 1e-9 {
            return bad("gate width must be positive and fit in one slot");
        }
        if self.jitter_ps < 0.0 || self.splitter_loss_db < 0.0 {
            return bad("jitter and splitter loss must be non-negative");
        }
        check_probability("detector efficiency", self.detector_efficiency)?;
        check_probability("receiver transmittance", self.transmittance)?;
        check_probability("dark count probability", self.dark_count_prob)?;
        check_probability("z fraction", self.z_fraction)?;
        Ok(())
    }
}
