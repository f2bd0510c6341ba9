use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::channel::Channel;
use crate::error::{Error, Result};
use crate::protocol::{Basis, Intensity, QubitSymbol, Role};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Counts {
    pub sent: f64,
    pub detected: f64,
    pub errors: f64,
}

/// Sent, detected and error counts per basis and intensity. Counts are
/// real-valued so that expected (analytic) tallies share the type.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SiftedTally {
    /// Indexed `[basis][intensity]`.
    pub counts: [[Counts; 2]; 2],
}

impl SiftedTally {
    pub fn get(&self, basis: Basis, intensity: Intensity) -> Counts {
        self.counts[basis.index()][intensity.index()]
    }

    pub fn get_mut(&mut self, basis: Basis, intensity: Intensity) -> &mut Counts {
        &mut self.counts[basis.index()][intensity.index()]
    }

    pub fn detected(&self, basis: Basis) -> f64 {
        self.counts[basis.index()].iter().map(|c| c.detected).sum()
    }

    pub fn errors(&self, basis: Basis) -> f64 {
        self.counts[basis.index()].iter().map(|c| c.errors).sum()
    }

    /// Sifted Z-basis block size `n_z`.
    pub fn n_z(&self) -> f64 {
        self.detected(Basis::Z)
    }

    /// `e_z = m_z / n_z`, zero for an empty block.
    pub fn e_z(&self) -> f64 {
        let n = self.n_z();
        if n > 0.0 {
            self.errors(Basis::Z) / n
        } else {
            0.0
        }
    }

    pub fn add(&mut self, other: &SiftedTally) {
        for b in 0..2 {
            for k in 0..2 {
                let (a, o) = (&mut self.counts[b][k], other.counts[b][k]);
                a.sent += o.sent;
                a.detected += o.detected;
                a.errors += o.errors;
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        for row in &self.counts {
            for c in row {
                if !(0.0 <= c.errors && c.errors <= c.detected && c.detected <= c.sent) {
                    return Err(Error::Parameter(format!("inconsistent tally entry {c:?}")));
                }
            }
        }
        Ok(())
    }
}

/// Tallies basis-matched detections of random-role pulses. `sent` holds the
/// random-role pulse counts per `[basis][intensity]` over the same span.
pub fn sift<I>(detections: I, sent: [[u64; 2]; 2]) -> SiftedTally
where
    I: IntoIterator<Item = (QubitSymbol, Channel)>,
{
    let mut t = SiftedTally::default();
    for (b, row) in sent.iter().enumerate() {
        for (k, &n) in row.iter().enumerate() {
            t.counts[b][k].sent = n as f64;
        }
    }
    for (sym, ch) in detections {
        if sym.role != Role::Random || ch.basis() != sym.basis {
            continue;
        }
        let c = t.get_mut(sym.basis, sym.intensity);
        c.detected += 1.0;
        if ch.bit() != sym.bit {
            c.errors += 1.0;
        }
    }
    t
}

const HEADER: &str = "basis,intensity,sent,detected,errors";

/// CSV layout: header `basis,intensity,sent,detected,errors`, four rows with
/// basis `Z`/`X` and intensity `mu`/`nu`.
pub fn write_tally_csv<W: Write>(w: &mut W, t: &SiftedTally) -> Result<()> {
    writeln!(w, "{HEADER}")?;
    for (b, bl) in ["Z", "X"].iter().enumerate() {
        for (k, kl) in ["mu", "nu"].iter().enumerate() {
            let c = t.counts[b][k];
            writeln!(w, "{bl},{kl},{},{},{}", c.sent, c.detected, c.errors)?;
        }
    }
    Ok(())
}

pub fn read_tally_csv<R: BufRead>(r: &mut R) -> Result<SiftedTally> {
    let mut t = SiftedTally::default();
    let mut lines = r.lines().enumerate().filter(|(_, l)| {
        l.as_ref()
            .map(|s| !s.trim().is_empty() && !s.starts_with('#'))
            .unwrap_or(true)
    });
    match lines.next() {
        Some((_, Ok(h))) if h.trim() == HEADER => {}
        _ => {
            return Err(Error::Format(format!(
                "tally CSV must start with '{HEADER}'"
            )))
        }
    }
    for (i, line) in lines {
        let line = line?;
        let bad = || Error::Format(format!("tally line {}: '{line}'", i + 1));
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 5 {
            return Err(bad());
        }
        let b = match f[0] {
            "Z" => 0,
            "X" => 1,
            _ => return Err(bad()),
        };
        let k = match f[1] {
            "mu" => 0,
            "nu" => 1,
            _ => return Err(bad()),
        };
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
        t.counts[b][k] = Counts {
            sent: num(f[2])?,
            detected: num(f[3])?,
            errors: num(f[4])?,
        };
    }
    t.validate()?;
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sift_keeps_matching_random_symbols() {
        let z0 = QubitSymbol {
            basis: Basis::Z,
            bit: 0,
            intensity: Intensity::Signal,
            role: Role::Random,
        };
        let x1 = QubitSymbol {
            basis: Basis::X,
            bit: 1,
            intensity: Intensity::Decoy,
            role: Role::Random,
        };
        let sync = QubitSymbol::sync(1, Intensity::Signal);
        let t = sift(
            [
                (z0, Channel::H),
                (z0, Channel::V),
                (z0, Channel::D),
                (x1, Channel::A),
                (sync, Channel::H),
            ],
            [[10, 0], [0, 5]],
        );
        assert_eq!(t.n_z(), 2.0);
        assert_eq!(t.e_z(), 0.5);
        assert_eq!(t.get(Basis::X, Intensity::Decoy).detected, 1.0);
        assert_eq!(t.get(Basis::X, Intensity::Decoy).errors, 0.0);
    }

    #[test]
    fn csv_round_trip() {
        let mut t = SiftedTally::default();
        t.counts[0][0] = Counts {
            sent: 1e9,
            detected: 1.5e6,
            errors: 1.25e4,
        };
        let mut buf = Vec::new();
        write_tally_csv(&mut buf, &t).unwrap();
        let back = read_tally_csv(&mut buf.as_slice()).unwrap();
        assert_eq!(back, t);
        let mut again = Vec::new();
        write_tally_csv(&mut again, &back).unwrap();
        assert_eq!(again, buf);
        assert!(read_tally_csv(
            &mut "basis,intensity,sent,detected,errors\nZ,mu,1,2,0\n".as_bytes()
        )
        .is_err());
    }
}
