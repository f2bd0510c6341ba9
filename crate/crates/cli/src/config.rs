use std::path::Path;

use qan_core::capacity::CapacityParams;
use qan_core::channel::{ReceiverConfig, TransmitterConfig};
use qan_core::keyrate::SecurityBudget;
use qan_core::pipeline::{Alignment, PipelineOptions};
use qan_core::sync::{IdentifyOptions, LtsOptions};
use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::Failure;

/// A scenario file. Every section is optional; each command checks for the
/// sections it needs.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub name: String,
    pub seed: Option<u64>,
    /// Simulated receiver time for `simulate`.
    #[serde(default)]
    pub duration_s: f64,
    #[serde(default)]
    pub receiver: ReceiverConfig,
    #[serde(default, rename = "transmitter")]
    pub transmitters: Vec<TransmitterConfig>,
    #[serde(default)]
    pub pipeline: PipelineSection,
    #[serde(default)]
    pub keyrate: KeyrateSection,
    pub capacity: Option<CapacitySection>,
    pub jitter: Option<JitterSection>,
    pub crosstalk: Option<CrosstalkSection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineSection {
    pub target_n_z: f64,
    pub window_s: f64,
    pub max_duration_s: f64,
    pub alignment: Alignment,
    pub frame_attempts: usize,
    pub min_snr: f64,
    pub ambiguity_margin: f64,
    pub eps_sec: f64,
    pub eps_cor: f64,
    pub f_e: f64,
}

impl Default for PipelineSection {
    fn default() -> Self {
        let o = PipelineOptions::default();
        PipelineSection {
            target_n_z: o.target_n_z,
            window_s: o.window_s,
            max_duration_s: o.max_duration_s,
            alignment: o.alignment,
            frame_attempts: o.frame_attempts,
            min_snr: o.identify.min_snr,
            ambiguity_margin: o.identify.ambiguity_margin,
            eps_sec: o.eps_sec,
            eps_cor: o.eps_cor,
            f_e: o.f_e,
        }
    }
}

impl PipelineSection {
    pub fn options(&self) -> PipelineOptions {
        PipelineOptions {
            window_s: self.window_s,
            max_duration_s: self.max_duration_s,
            target_n_z: self.target_n_z,
            alignment: self.alignment,
            frame_attempts: self.frame_attempts,
            identify: IdentifyOptions {
                min_snr: self.min_snr,
                ambiguity_margin: self.ambiguity_margin,
            },
            lts: LtsOptions::default(),
            eps_sec: self.eps_sec,
            eps_cor: self.eps_cor,
            f_e: self.f_e,
            ..PipelineOptions::default()
        }
    }
}

/// Protocol constants for evaluating a tally read from CSV.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KeyrateSection {
    pub mu: f64,
    pub nu: f64,
    pub p_mu: f64,
    pub eps_sec: f64,
    pub eps_cor: f64,
    pub f_e: f64,
    pub frequency_hz: f64,
    /// All pulses emitted while the tally was collected.
    pub total_pulses: f64,
    /// Fraction of random (non-sync) symbols.
    pub q: f64,
    pub budget: SecurityBudget,
}

impl Default for KeyrateSection {
    fn default() -> Self {
        KeyrateSection {
            mu: 0.52,
            nu: 0.13,
            p_mu: 0.69,
            eps_sec: 1e-9,
            eps_cor: 1e-15,
            f_e: 1.16,
            frequency_hz: 50e6,
            total_pulses: 0.0,
            q: 0.5,
            budget: SecurityBudget::default(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CapacitySection {
    pub users: Vec<usize>,
    pub distances_km: Vec<f64>,
    #[serde(default)]
    pub model: CapacityParams,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JitterSection {
    pub frequency_hz: f64,
    pub e_max: Option<f64>,
    pub fwhm_ps: Option<f64>,
    /// A quoted jitter bound to compare the computed threshold against.
    pub reference_fwhm_ps: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrosstalkSection {
    pub victim_slot: usize,
    /// Adjacent-slot relative count increases to calibrate jitter and gate
    /// placement to. Without them the receiver jitter is used with a centred gate.
    pub earlier: Option<f64>,
    pub later: Option<f64>,
    pub offsets: Vec<i64>,
    pub duration_s: f64,
    pub repeats: u64,
}

pub struct Loaded {
    pub config: RunConfig,
    pub sha256: Option<String>,
}

impl Loaded {
    pub fn none() -> Self {
        Loaded {
            config: RunConfig::default(),
            sha256: None,
        }
    }

    pub fn section<'a, T>(&'a self, s: &'a Option<T>, name: &str) -> Result<&'a T, Failure> {
        s.as_ref()
            .ok_or_else(|| Failure::Config(format!("missing [{name}] section")))
    }
}

pub fn load(path: &Path) -> Result<Loaded, Failure> {
    let bytes = std::fs::read(path)
        .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    let text = std::str::from_utf8(&bytes)
        .map_err(|_| Failure::Config(format!("{}: not UTF-8", path.display())))?;
    let config: RunConfig = toml::from_str(text)
        .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    for t in &config.transmitters {
        t.validate().map_err(|e| {
            Failure::Config(format!(
                "{}:{}: {e}",
                path.display(),
                transmitter_line(text, t.id)
            ))
        })?;
    }
    config
        .receiver
        .validate()
        .map_err(|e| Failure::Config(format!("{}: [receiver]: {e}", path.display())))?;
    Ok(Loaded {
        config,
        sha256: Some(hex::encode(Sha256::digest(&bytes))),
    })
}

/// Line of the `id = <id>` key of a transmitter table, for error messages.
fn transmitter_line(text: &str, id: u32) -> usize {
    let mut in_tx = false;
    for (i, line) in text.lines().enumerate() {
        let l = line.trim();
        if l.starts_with('[') {
            in_tx = l == "[[transmitter]]";
        } else if in_tx {
            let mut kv = l.splitn(2, '=').map(str::trim);
            if kv.next() == Some("id") && kv.next().and_then(|v| v.parse::<u32>().ok()) == Some(id) {
                return i + 1;
            }
        }
    }
    0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transmitter_errors_point_at_their_table() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(
            &p,
            "seed = 1\n\n[[transmitter]]\nid = 1\nslot = 0\n\n[[transmitter]]\nid = 2\nslot = 1\nmu = -1.0\n",
        )
        .unwrap();
        let Err(Failure::Config(msg)) = load(&p) else { panic!() };
        assert!(msg.contains("c.toml:8:") && msg.contains("transmitter 2"), "{msg}");
    }

    #[test]
    fn parse_errors_carry_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(&p, "seed = 1\n[receiver]\nslots = \"many\"\n").unwrap();
        let Err(Failure::Config(msg)) = load(&p) else { panic!() };
        assert!(msg.contains("line 3"), "{msg}");
    }
}
