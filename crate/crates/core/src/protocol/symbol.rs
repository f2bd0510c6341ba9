use serde::{Deserialize, Serialize};

use crate::error::{check_probability, param, Result};
use crate::prf;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Basis {
    Z,
    X,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Intensity {
    Signal,
    Decoy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Role {
    Sync,
    Random,
}

impl Basis {
    pub fn index(self) -> usize {
        match self {
            Basis::Z => 0,
            Basis::X => 1,
        }
    }
}

impl Intensity {
    pub fn index(self) -> usize {
        match self {
            Intensity::Signal => 0,
            Intensity::Decoy => 1,
        }
    }
}

/// One prepared BB84 pulse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct QubitSymbol {
    pub basis: Basis,
    pub bit: u8,
    pub intensity: Intensity,
    pub role: Role,
}

impl QubitSymbol {
    /// Sync symbols are always Z-basis; `+1` encodes bit 0 and `-1` bit 1.
    pub fn sync(value: i8, intensity: Intensity) -> Self {
        QubitSymbol {
            basis: Basis::Z,
            bit: u8::from(value < 0),
            intensity,
            role: Role::Sync,
        }
    }

    /// Ternary wire value: Z-basis maps to +-1, X-basis to 0.
    pub fn ternary(&self) -> i8 {
        match self.basis {
            Basis::Z if self.bit == 0 => 1,
            Basis::Z => -1,
            Basis::X => 0,
        }
    }
}

/// Preparation probabilities for intensity and basis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceProbabilities {
    pub p_signal: f64,
    pub p_decoy: f64,
    pub p_z: f64,
    pub p_x: f64,
}

impl SourceProbabilities {
    pub fn new(intensity: (f64, f64), basis: (f64, f64)) -> Result<Self> {
        let p = SourceProbabilities {
            p_signal: intensity.0,
            p_decoy: intensity.1,
            p_z: basis.0,
            p_x: basis.1,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        check_probability("P_mu", self.p_signal)?;
        check_probability("P_nu", self.p_decoy)?;
        check_probability("P_Z", self.p_z)?;
        check_probability("P_X", self.p_x)?;
        if (self.p_signal + self.p_decoy - 1.0).abs() > 1e-9 {
            return Err(param("intensity probabilities must sum to 1"));
        }
        if (self.p_z + self.p_x - 1.0).abs() > 1e-9 {
            return Err(param("basis probabilities must sum to 1"));
        }
        Ok(())
    }
}

/// Random-access source of secret payload symbols.
///
/// Every symbol is a pure function of `(seed, index)`, so a transmitter can
/// regenerate exactly what it sent at any pulse index without storing the
/// stream.
#[derive(Debug, Clone)]
pub struct PayloadSource {
    key: u64,
    signal_threshold: u64,
    z_threshold: u64,
}

impl PayloadSource {
    pub fn new(probs: SourceProbabilities, seed: u64) -> Result<Self> {
        probs.validate()?;
        Ok(PayloadSource {
            key: prf::derive(seed, &[0x5041_594C]),
            signal_threshold: threshold32(probs.p_signal),
            z_threshold: threshold31(probs.p_z),
        })
    }

    #[inline]
    fn word(&self, index: u64) -> u64 {
        prf::keyed(self.key, index)
    }

    /// Intensity label drawn for pulse `index` (used for sync pulses too).
    #[inline]
    pub fn intensity(&self, index: u64) -> Intensity {
        intensity_of(self.word(index), self.signal_threshold)
    }

    #[inline]
    pub fn symbol(&self, index: u64) -> QubitSymbol {
        let w = self.word(index);
        let basis = if (w >> 32) & 0x7FFF_FFFF < self.z_threshold {
            Basis::Z
        } else {
            Basis::X
        };
        QubitSymbol {
            basis,
            bit: (w >> 63) as u8,
            intensity: intensity_of(w, self.signal_threshold),
            role: Role::Random,
        }
    }
}

#[inline]
fn intensity_of(w: u64, threshold: u64) -> Intensity {
    if w & 0xFFFF_FFFF < threshold {
        Intensity::Signal
    } else {
        Intensity::Decoy
    }
}

fn threshold32(p: f64) -> u64 {
    (p * (1u64 << 32) as f64).round() as u64
}

fn threshold31(p: f64) -> u64 {
    (p * (1u64 << 31) as f64).round() as u64
}

/// I.i.d. random-role symbols with the given marginals.
pub fn generate_random_payload(
    count: usize,
    intensity_probs: (f64, f64),
    basis_probs: (f64, f64),
    seed: u64,
) -> Result<Vec<QubitSymbol>> {
    let probs = SourceProbabilities::new(intensity_probs, basis_probs)?;
    let source = PayloadSource::new(probs, seed)?;
    Ok((0..count as u64).map(|i| source.symbol(i)).collect())
}
