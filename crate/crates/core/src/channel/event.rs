use std::io::{BufRead, Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::protocol::Basis;

/// Detector channel: H and V measure Z, D and A measure X.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum Channel {
    H = 0,
    V = 1,
    D = 2,
    A = 3,
}

impl Channel {
    pub const ALL: [Channel; 4] = [Channel::H, Channel::V, Channel::D, Channel::A];

    pub fn from_index(i: u8) -> Option<Channel> {
        Channel::ALL.get(i as usize).copied()
    }

    pub fn from_measurement(basis: Basis, bit: u8) -> Channel {
        Channel::ALL[basis.index() * 2 + (bit & 1) as usize]
    }

    pub fn basis(self) -> Basis {
        match self {
            Channel::H | Channel::V => Basis::Z,
            Channel::D | Channel::A => Basis::X,
        }
    }

    pub fn bit(self) -> u8 {
        self as u8 & 1
    }

    pub fn letter(self) -> char {
        ['H', 'V', 'D', 'A'][self as usize]
    }

    pub fn from_letter(c: &str) -> Option<Channel> {
        match c {
            "H" => Some(Channel::H),
            "V" => Some(Channel::V),
            "D" => Some(Channel::D),
            "A" => Some(Channel::A),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct DetectionEvent {
    pub timestamp_ps: u64,
    pub channel: Channel,
}

/// A time-ordered detection record from one receiver.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct EventRecord {
    /// Nominal receiver period.
    pub period_ps: u64,
    pub events: Vec<DetectionEvent>,
}

impl EventRecord {
    pub fn new(period_ps: u64) -> Self {
        EventRecord {
            period_ps,
            events: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn timestamps(&self) -> Vec<u64> {
        self.events.iter().map(|e| e.timestamp_ps).collect()
    }

    pub fn is_sorted(&self) -> bool {
        self.events
            .windows(2)
            .all(|w| w[0].timestamp_ps <= w[1].timestamp_ps)
    }
}

/// Where a simulated event came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Origin {
    Signal {
        transmitter: u32,
        pulse: u64,
    },
    Dark,
    /// Extra count injected by the cross-talk model while `victim` was gated.
    Crosstalk {
        victim: u32,
    },
}

/// Per-event provenance, parallel to [`EventRecord::events`].
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct GroundTruth {
    pub origins: Vec<Origin>,
}

const EVENT_MAGIC: &[u8; 4] = b"QEVT";
const TRUTH_MAGIC: &[u8; 4] = b"QGTR";
const VERSION: u32 = 1;
const EVENT_SIZE: usize = 9;
const ORIGIN_SIZE: usize = 13;

fn format_err(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

/// Binary layout: magic `QEVT`, `u32` version, `u64` period in ps, then
/// `(u64 timestamp_ps, u8 channel)` records, all little-endian.
pub fn write_events_binary<W: Write>(w: &mut W, rec: &EventRecord) -> Result<()> {
    w.write_all(EVENT_MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&rec.period_ps.to_le_bytes())?;
    let mut buf = Vec::with_capacity(rec.len() * EVENT_SIZE);
    for e in &rec.events {
        buf.extend_from_slice(&e.timestamp_ps.to_le_bytes());
        buf.push(e.channel as u8);
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_events_binary<R: Read>(r: &mut R) -> Result<EventRecord> {
    let mut data = Vec::new();
    r.read_to_end(&mut data)?;
    if data.len() < 16 || &data[..4] != EVENT_MAGIC {
        return Err(format_err("not an event file"));
    }
    let version = u32::from_le_bytes(data[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(format_err(format!(
            "unsupported event file version {version}"
        )));
    }
    let period_ps = u64::from_le_bytes(data[8..16].try_into().unwrap());
    let body = &data[16..];
    if body.len() % EVENT_SIZE != 0 {
        return Err(format_err(format!(
            "truncated event record at byte {}",
            16 + body.len() / EVENT_SIZE * EVENT_SIZE
        )));
    }
    let mut events = Vec::with_capacity(body.len() / EVENT_SIZE);
    let mut last = 0u64;
    for (i, chunk) in body.chunks_exact(EVENT_SIZE).enumerate() {
        let ts = u64::from_le_bytes(chunk[..8].try_into().unwrap());
        let channel = Channel::from_index(chunk[8])
            .ok_or_else(|| format_err(format!("event {i}: bad channel {}", chunk[8])))?;
        if ts < last {
            return Err(format_err(format!("event {i}: timestamps not ordered")));
        }
        last = ts;
        events.push(DetectionEvent {
            timestamp_ps: ts,
            channel,
        });
    }
    Ok(EventRecord { period_ps, events })
}

/// CSV layout: `# period_ps=<n>` comment, header `timestamp_ps,channel`,
/// one row per event with the channel as H, V, D or A.
pub fn write_events_csv<W: Write>(w: &mut W, rec: &EventRecord) -> Result<()> {
    writeln!(w, "# period_ps={}", rec.period_ps)?;
    writeln!(w, "timestamp_ps,channel")?;
    for e in &rec.events {
        writeln!(w, "{},{}", e.timestamp_ps, e.channel.letter())?;
    }
    Ok(())
}

pub fn read_events_csv<R: BufRead>(r: &mut R) -> Result<EventRecord> {
    let mut rec = EventRecord::new(0);
    let mut seen_header = false;
    let mut last = 0u64;
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            if let Some(v) = rest.trim().strip_prefix("period_ps=") {
                rec.period_ps = v
                    .parse()
                    .map_err(|_| format_err(format!("line {}: bad period", lineno + 1)))?;
            }
            continue;
        }
        if !seen_header {
            if line != "timestamp_ps,channel" {
                return Err(format_err(format!(
                    "line {}: expected header timestamp_ps,channel",
                    lineno + 1
                )));
            }
            seen_header = true;
            continue;
        }
        let bad = || format_err(format!("line {}: malformed event '{line}'", lineno + 1));
        let (ts, ch) = line.split_once(',').ok_or_else(bad)?;
        let timestamp_ps: u64 = ts.trim().parse().map_err(|_| bad())?;
        let channel = Channel::from_letter(ch.trim()).ok_or_else(bad)?;
        if timestamp_ps < last {
            return Err(format_err(format!(
                "line {}: timestamps not ordered",
                lineno + 1
            )));
        }
        last = timestamp_ps;
        rec.events.push(DetectionEvent {
            timestamp_ps,
            channel,
        });
    }
    if !seen_header {
        return Err(format_err("missing header"));
    }
    Ok(rec)
}

/// Sidecar layout: magic `QGTR`, `u32` version, `u64` count, then per event
/// `u8` kind (0 signal, 1 dark, 2 cross-talk), `u32` transmitter, `u64` pulse.
pub fn write_ground_truth<W: Write>(w: &mut W, truth: &GroundTruth) -> Result<()> {
    w.write_all(TRUTH_MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(truth.origins.len() as u64).to_le_bytes())?;
    let mut buf = Vec::with_capacity(truth.origins.len() * ORIGIN_SIZE);
    for o in &truth.origins {
        let (kind, tx, pulse) = match *o {
            Origin::Signal { transmitter, pulse } => (0u8, transmitter, pulse),
            Origin::Dark => (1, 0, 0),
            Origin::Crosstalk { victim } => (2, victim, 0),
        };
        buf.push(kind);
        buf.extend_from_slice(&tx.to_le_bytes());
        buf.extend_from_slice(&pulse.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_ground_truth<R: Read>(r: &mut R) -> Result<GroundTruth> {
    let mut data = Vec::new();
    r.read_to_end(&mut data)?;
    if data.len() < 16 || &data[..4] != TRUTH_MAGIC {
        return Err(format_err("not a ground-truth file"));
    }
    let count = u64::from_le_bytes(data[8..16].try_into().unwrap()) as usize;
    let body = &data[16..];
    if body.len() != count * ORIGIN_SIZE {
        return Err(format_err("ground-truth length does not match its count"));
    }
    let origins = body
        .chunks_exact(ORIGIN_SIZE)
        .map(|c| {
            let tx = u32::from_le_bytes(c[1..5].try_into().unwrap());
            let pulse = u64::from_le_bytes(c[5..13].try_into().unwrap());
            match c[0] {
                0 => Ok(Origin::Signal {
                    transmitter: tx,
                    pulse,
                }),
                1 => Ok(Origin::Dark),
                2 => Ok(Origin::Crosstalk { victim: tx }),
                k => Err(format_err(format!("bad origin kind {k}"))),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GroundTruth { origins })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> EventRecord {
        EventRecord {
            period_ps: 20_000,
            events: vec![
                DetectionEvent {
                    timestamp_ps: 5,
                    channel: Channel::V,
                },
                DetectionEvent {
                    timestamp_ps: 20_005,
                    channel: Channel::D,
                },
                DetectionEvent {
                    timestamp_ps: u64::MAX / 2,
                    channel: Channel::A,
                },
            ],
        }
    }

    #[test]
    fn binary_and_csv_agree() {
        let rec = sample();
        let mut bin = Vec::new();
        write_events_binary(&mut bin, &rec).unwrap();
        assert_eq!(bin.len(), 16 + 27);
        let mut csv = Vec::new();
        write_events_csv(&mut csv, &rec).unwrap();
        assert_eq!(read_events_binary(&mut bin.as_slice()).unwrap(), rec);
        assert_eq!(read_events_csv(&mut csv.as_slice()).unwrap(), rec);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let mut bin = Vec::new();
        write_events_binary(&mut bin, &sample()).unwrap();
        assert!(read_events_binary(&mut &bin[..bin.len() - 1]).is_err());
        let mut bad = bin.clone();
        bad[16 + 8] = 7;
        assert!(read_events_binary(&mut bad.as_slice()).is_err());
        assert!(read_events_csv(&mut "timestamp_ps,channel\n10,H\n5,V\n".as_bytes()).is_err());
        assert!(read_events_csv(&mut "timestamp_ps,channel\n10,X\n".as_bytes()).is_err());
    }

    #[test]
    fn channel_mapping() {
        assert_eq!(Channel::from_measurement(Basis::X, 1), Channel::A);
        assert_eq!(Channel::V.basis(), Basis::Z);
        assert_eq!(Channel::V.bit(), 1);
    }

    #[test]
    fn ground_truth_sidecar() {
        let t = GroundTruth {
            origins: vec![
                Origin::Signal {
                    transmitter: 3,
                    pulse: 1 << 40,
                },
                Origin::Dark,
                Origin::Crosstalk { victim: 2 },
            ],
        };
        let mut buf = Vec::new();
        write_ground_truth(&mut buf, &t).unwrap();
        assert_eq!(read_ground_truth(&mut buf.as_slice()).unwrap(), t);
    }
}
