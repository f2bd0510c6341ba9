use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::correlate::matrix_correlation;
use super::frame::ReceivedFrame;
use crate::error::{param, Error, Result};
use crate::protocol::SyncString;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentifyOptions {
    /// Minimum `peak / sqrt(nonzero)` for a declared identification.
    pub min_snr: f64,
    /// Refuse when the runner-up peak is within this fraction of the best.
    pub ambiguity_margin: f64,
}

impl Default for IdentifyOptions {
    fn default() -> Self {
        IdentifyOptions {
            min_snr: 6.0,
            ambiguity_margin: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentificationResult {
    pub slot: usize,
    pub transmitter: u32,
    /// Transmitter frame position of received position 0, in `[0, (M + 1) L)`.
    pub offset_symbols: u64,
    /// Receiver period of received position 0, copied from the frame.
    pub origin_period: i64,
    pub peak: i64,
    /// Nonzero entries of the correlated subsequence.
    pub nonzero: usize,
    /// `peak / sqrt(nonzero)`.
    pub snr: f64,
    pub runner_up: i64,
}

impl IdentificationResult {
    /// Receiver period at which the transmitter's frame position 0 arrives
    /// (one representative; others differ by whole frames).
    pub fn frame_start_period(&self, frame_len: u64) -> i64 {
        self.origin_period + ((frame_len - self.offset_symbols) % frame_len) as i64
    }
}

/// `sqrt(L eta)`.
pub fn snr_delta(len: usize, eta: f64) -> f64 {
    (len as f64 * eta).sqrt()
}

/// Shortest sync string giving 100 expected detections, `ceil(100 / eta)`.
pub fn min_sync_length(eta: f64) -> Result<usize> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(param(format!("transmittance {eta} outside (0, 1]")));
    }
    let raw = 100.0 / eta;
    let near = raw.round();
    let l = if (raw - near).abs() <= 1e-9 * raw {
        near
    } else {
        raw.ceil()
    };
    Ok(l as usize)
}

/// Correlates the sync-rate subsequences of a frame against every public
/// code at every cyclic lag and picks the best positive peak.
pub fn identify_transmitter(
    frame: &ReceivedFrame,
    codes: &[SyncString],
    opts: &IdentifyOptions,
) -> Result<IdentificationResult> {
    let spec = frame.spec;
    let stride = spec.stride();
    let usable: Vec<&SyncString> = codes.iter().filter(|c| c.len() == spec.sync_len).collect();
    if usable.is_empty() {
        return Err(param("no public code matches the frame's sync length"));
    }
    struct Peak {
        value: i64,
        code: usize,
        u: usize,
        lag: usize,
        nonzero: usize,
    }
    let mut best: Option<Peak> = None;
    let mut runner_up = 0i64;
    for u in 0..stride {
        let x = frame.subsequence(u);
        let nonzero = x.iter().filter(|&&v| v != 0).count();
        if nonzero == 0 {
            continue;
        }
        for (ci, code) in usable.iter().enumerate() {
            let corr = matrix_correlation(&x, code);
            for (lag, &v) in corr.iter().enumerate() {
                match &best {
                    Some(b) if v <= b.value => runner_up = runner_up.max(v),
                    _ => {
                        if let Some(b) = &best {
                            runner_up = runner_up.max(b.value);
                        }
                        best = Some(Peak {
                            value: v,
                            code: ci,
                            u,
                            lag,
                            nonzero,
                        });
                    }
                }
            }
        }
    }
    let best = best
        .filter(|b| b.value > 0)
        .ok_or(Error::IdentificationFailed {
            best_snr: 0.0,
            threshold: opts.min_snr,
        })?;
    let snr = best.value as f64 / (best.nonzero as f64).sqrt();
    if snr < opts.min_snr {
        return Err(Error::IdentificationFailed {
            best_snr: snr,
            threshold: opts.min_snr,
        });
    }
    if runner_up as f64 >= (1.0 - opts.ambiguity_margin) * best.value as f64 {
        return Err(Error::AmbiguousIdentification {
            first: best.value,
            second: runner_up,
        });
    }
    let frame_len = spec.frame_len() as i64;
    let offset = (best.lag as i64 * stride as i64 - best.u as i64).rem_euclid(frame_len) as u64;
    Ok(IdentificationResult {
        slot: frame.slot,
        transmitter: usable[best.code].id(),
        offset_symbols: offset,
        origin_period: frame.origin_period,
        peak: best.value,
        nonzero: best.nonzero,
        snr,
        runner_up,
    })
}

/// One slot line of an identification report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportEntry {
    pub slot: usize,
    pub residue_ps: f64,
    pub transmitter: u32,
    pub offset_symbols: u64,
    pub frame_start_ps: f64,
    pub snr: f64,
    pub peak: i64,
    pub nonzero: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentificationReport {
    pub period_ps: f64,
    pub entries: Vec<ReportEntry>,
}

/// Text layout: header `qan-ident 1`, `period_ps <tau_R>`, then one line
/// per slot of space-separated `key value` pairs.
pub fn write_report<W: Write>(w: &mut W, report: &IdentificationReport) -> Result<()> {
    writeln!(w, "qan-ident 1")?;
    writeln!(w, "period_ps {:.6}", report.period_ps)?;
    for e in &report.entries {
        writeln!(
            w,
            "slot {} residue_ps {:.1} transmitter {} offset_symbols {} frame_start_ps {:.1} snr {:.3} peak {} nonzero {}",
            e.slot, e.residue_ps, e.transmitter, e.offset_symbols, e.frame_start_ps, e.snr, e.peak, e.nonzero
        )?;
    }
    Ok(())
}

pub fn read_report<R: BufRead>(r: &mut R) -> Result<IdentificationReport> {
    let bad = |n: usize, m: &str| Error::Format(format!("report line {n}: {m}"));
    let mut lines = r.lines().enumerate();
    match lines.next() {
        Some((_, Ok(l))) if l.trim() == "qan-ident 1" => {}
        _ => return Err(bad(1, "expected header qan-ident 1")),
    }
    let period_ps = match lines.next() {
        Some((_, Ok(l))) => l
            .trim()
            .strip_prefix("period_ps ")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| bad(2, "expected period_ps"))?,
        _ => return Err(bad(2, "missing period")),
    };
    let mut entries = Vec::new();
    for (i, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 16 {
            return Err(bad(i + 1, "expected 8 key/value pairs"));
        }
        let get = |k: &str| -> Result<&str> {
            toks.chunks(2)
                .find(|p| p[0] == k)
                .map(|p| p[1])
                .ok_or_else(|| bad(i + 1, &format!("missing {k}")))
        };
        macro_rules! num {
            ($k:expr) => {
                get($k)?
                    .parse()
                    .map_err(|_| bad(i + 1, concat!("bad ", $k)))?
            };
        }
        entries.push(ReportEntry {
            slot: num!("slot"),
            residue_ps: num!("residue_ps"),
            transmitter: num!("transmitter"),
            offset_symbols: num!("offset_symbols"),
            frame_start_ps: num!("frame_start_ps"),
            snr: num!("snr"),
            peak: num!("peak"),
            nonzero: num!("nonzero"),
        });
    }
    Ok(IdentificationReport { period_ps, entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::{generate_sync_string, FrameSpec};

    fn frame_from(values: Vec<i8>, m: usize, l: usize, l1: usize) -> ReceivedFrame {
        ReceivedFrame {
            slot: 0,
            spec: FrameSpec::new(l, l1, m).unwrap(),
            origin_period: 0,
            values,
            conflicts: 0,
        }
    }

    #[test]
    fn noiseless_frame_at_offset_zero() {
        let a = generate_sync_string(1024, 32, 1, 7).unwrap();
        let b = generate_sync_string(1024, 32, 2, 7).unwrap();
        let mut v = vec![0i8; 2048];
        for (k, &s) in a.values().iter().enumerate() {
            v[2 * k] = s;
        }
        let r = identify_transmitter(
            &frame_from(v, 1, 1024, 32),
            &[b, a],
            &IdentifyOptions::default(),
        )
        .unwrap();
        assert_eq!(r.transmitter, 1);
        assert_eq!(r.offset_symbols, 0);
        assert_eq!(r.peak, 1024);
    }

    #[test]
    fn empty_frame_fails() {
        let a = generate_sync_string(64, 8, 1, 7).unwrap();
        let err = identify_transmitter(
            &frame_from(vec![0; 128], 1, 64, 8),
            &[a],
            &IdentifyOptions::default(),
        );
        assert!(matches!(err, Err(Error::IdentificationFailed { .. })));
    }

    #[test]
    fn delta_rules() {
        assert_eq!(snr_delta(100, 1.0), 10.0);
        assert!((snr_delta(100_000, 1e-3) - 10.0).abs() < 1e-12);
        assert!((snr_delta(10_000, 0.04) - 20.0).abs() < 1e-12);
        assert_eq!(min_sync_length(1.0).unwrap(), 100);
        assert_eq!(min_sync_length(1e-3).unwrap(), 100_000);
        assert_eq!(min_sync_length(0.5).unwrap(), 200);
        assert_eq!(min_sync_length(0.3).unwrap(), 334);
        assert!(min_sync_length(0.0).is_err());
    }

    #[test]
    fn report_text() {
        let rep = IdentificationReport {
            period_ps: 20_000.4,
            entries: vec![ReportEntry {
                slot: 1,
                residue_ps: 13_000.0,
                transmitter: 2,
                offset_symbols: 99,
                frame_start_ps: 1.5e9,
                snr: 28.25,
                peak: 800,
                nonzero: 802,
            }],
        };
        let mut buf = Vec::new();
        write_report(&mut buf, &rep).unwrap();
        assert_eq!(read_report(&mut buf.as_slice()).unwrap(), rep);
        assert!(read_report(&mut "qan-ident 1\nperiod_ps 1\nslot 1\n".as_bytes()).is_err());
    }
}
