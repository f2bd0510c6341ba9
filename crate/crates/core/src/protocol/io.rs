//! Text and binary records for sync strings and frames.
//!
//! Both carry the fields `id, L, L1, M, values` in that order. Sync strings
//! are written with `M = 0`.
//!
//! Text form, one `key value` pair per line:
//!
//! ```text
//! qan-sync 1            (or qan-frame 1)
//! id 1
//! L 8
//! L1 4
//! M 0
//! values ++-+--+-
//! ```
//!
//! Sync values are `+`/`-`. Frame symbols are `H V D A` for signal pulses
//! and `h v d a` for decoy pulses; the role follows from the position.
//!
//! Binary form (little-endian): 4-byte magic (`QSYN` / `QFRM`), `u8`
//! version, `u32` id, `u32` L, `u32` L1, `u32` M, then the values. Sync
//! values are bit-packed LSB first (bit set = +1); frame symbols take one
//! byte each: bit 0 = bit value, bit 1 = X basis, bit 2 = decoy.

use std::io::{BufRead, Read, Write};

use super::frame::BitFrame;
use super::symbol::{Basis, Intensity, QubitSymbol, Role};
use super::sync_code::SyncString;
use crate::error::{Error, Result};

const SYNC_MAGIC: &[u8; 4] = b"QSYN";
const FRAME_MAGIC: &[u8; 4] = b"QFRM";
const VERSION: u8 = 1;

fn fmt_err(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

pub fn write_sync_text<W: Write>(w: &mut W, s: &SyncString) -> Result<()> {
    writeln!(w, "qan-sync 1")?;
    writeln!(w, "id {}", s.id())?;
    writeln!(w, "L {}", s.len())?;
    writeln!(w, "L1 {}", s.period_len())?;
    writeln!(w, "M 0")?;
    let values: String = s
        .values()
        .iter()
        .map(|&v| if v > 0 { '+' } else { '-' })
        .collect();
    writeln!(w, "values {values}")?;
    Ok(())
}

pub fn write_frame_text<W: Write>(w: &mut W, f: &BitFrame) -> Result<()> {
    writeln!(w, "qan-frame 1")?;
    writeln!(w, "id {}", f.id)?;
    writeln!(w, "L {}", f.len() / (f.interleave + 1))?;
    writeln!(w, "L1 {}", f.period_len)?;
    writeln!(w, "M {}", f.interleave)?;
    let values: String = f.symbols.iter().map(symbol_char).collect();
    writeln!(w, "values {values}")?;
    Ok(())
}

fn symbol_char(s: &QubitSymbol) -> char {
    let c = match (s.basis, s.bit) {
        (Basis::Z, 0) => 'H',
        (Basis::Z, _) => 'V',
        (Basis::X, 0) => 'D',
        (Basis::X, _) => 'A',
    };
    match s.intensity {
        Intensity::Signal => c,
        Intensity::Decoy => c.to_ascii_lowercase(),
    }
}

fn char_symbol(c: char, role: Role) -> Result<QubitSymbol> {
    let intensity = if c.is_ascii_lowercase() {
        Intensity::Decoy
    } else {
        Intensity::Signal
    };
    let (basis, bit) = match c.to_ascii_uppercase() {
        'H' => (Basis::Z, 0),
        'V' => (Basis::Z, 1),
        'D' => (Basis::X, 0),
        'A' => (Basis::X, 1),
        other => return Err(fmt_err(format!("unknown symbol character {other:?}"))),
    };
    Ok(QubitSymbol {
        basis,
        bit,
        intensity,
        role,
    })
}

struct TextHeader {
    kind: String,
    id: u32,
    len: usize,
    period_len: usize,
    interleave: usize,
    values: String,
}

fn read_text_record<R: BufRead>(r: &mut R) -> Result<Option<TextHeader>> {
    let mut lines = Vec::with_capacity(6);
    let mut buf = String::new();
    while lines.len() < 6 {
        buf.clear();
        if r.read_line(&mut buf)? == 0 {
            if lines.is_empty() {
                return Ok(None);
            }
            return Err(fmt_err("truncated text record"));
        }
        let line = buf.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        lines.push(line.to_string());
    }
    let field = |i: usize, key: &str| -> Result<String> {
        let (k, v) = lines[i]
            .split_once(' ')
            .ok_or_else(|| fmt_err(format!("line {:?} is not `key value`", lines[i])))?;
        if k != key {
            return Err(fmt_err(format!("expected field {key:?}, found {k:?}")));
        }
        Ok(v.trim().to_string())
    };
    let num = |i: usize, key: &str| -> Result<usize> {
        field(i, key)?
            .parse()
            .map_err(|_| fmt_err(format!("field {key} is not a number")))
    };
    let (kind, version) = lines[0]
        .split_once(' ')
        .ok_or_else(|| fmt_err("missing record header"))?;
    if version != "1" {
        return Err(fmt_err(format!("unsupported version {version}")));
    }
    Ok(Some(TextHeader {
        kind: kind.to_string(),
        id: num(1, "id")? as u32,
        len: num(2, "L")?,
        period_len: num(3, "L1")?,
        interleave: num(4, "M")?,
        values: field(5, "values")?,
    }))
}

/// Reads one sync record; `Ok(None)` at end of input. Several records may
/// be concatenated in one file.
pub fn read_sync_text<R: BufRead>(r: &mut R) -> Result<Option<SyncString>> {
    let Some(h) = read_text_record(r)? else {
        return Ok(None);
    };
    if h.kind != "qan-sync" {
        return Err(fmt_err(format!(
            "expected qan-sync record, found {}",
            h.kind
        )));
    }
    let values = h
        .values
        .chars()
        .map(|c| match c {
            '+' => Ok(1),
            '-' => Ok(-1),
            other => Err(fmt_err(format!("bad sync value {other:?}"))),
        })
        .collect::<Result<Vec<i8>>>()?;
    if values.len() != h.len || h.interleave != 0 {
        return Err(fmt_err("sync record length or M mismatch"));
    }
    SyncString::from_values(h.id, &values, h.period_len).map(Some)
}

pub fn read_sync_text_all<R: BufRead>(r: &mut R) -> Result<Vec<SyncString>> {
    let mut out = Vec::new();
    while let Some(s) = read_sync_text(r)? {
        out.push(s);
    }
    Ok(out)
}

pub fn read_frame_text<R: BufRead>(r: &mut R) -> Result<BitFrame> {
    let h = read_text_record(r)?.ok_or_else(|| fmt_err("empty input"))?;
    if h.kind != "qan-frame" {
        return Err(fmt_err(format!(
            "expected qan-frame record, found {}",
            h.kind
        )));
    }
    if h.interleave < 1 {
        return Err(fmt_err("frame record needs M >= 1"));
    }
    let stride = h.interleave + 1;
    let symbols = h
        .values
        .chars()
        .enumerate()
        .map(|(i, c)| {
            let role = if i % stride == 0 {
                Role::Sync
            } else {
                Role::Random
            };
            char_symbol(c, role)
        })
        .collect::<Result<Vec<_>>>()?;
    if symbols.len() != stride * h.len {
        return Err(fmt_err("frame length does not match (M + 1) * L"));
    }
    if symbols
        .iter()
        .any(|s| s.role == Role::Sync && s.basis != Basis::Z)
    {
        return Err(fmt_err("sync position holds an X-basis symbol"));
    }
    Ok(BitFrame {
        id: h.id,
        period_len: h.period_len,
        interleave: h.interleave,
        symbols,
    })
}

fn write_binary_header<W: Write>(w: &mut W, magic: &[u8; 4], fields: [u32; 4]) -> Result<()> {
    w.write_all(magic)?;
    w.write_all(&[VERSION])?;
    for f in fields {
        w.write_all(&f.to_le_bytes())?;
    }
    Ok(())
}

fn read_binary_header<R: Read>(r: &mut R, magic: &[u8; 4]) -> Result<[u32; 4]> {
    let mut m = [0u8; 5];
    r.read_exact(&mut m)?;
    if &m[..4] != magic {
        return Err(fmt_err("bad magic"));
    }
    if m[4] != VERSION {
        return Err(fmt_err(format!("unsupported version {}", m[4])));
    }
    let mut fields = [0u32; 4];
    for f in &mut fields {
        let mut b = [0u8; 4];
        r.read_exact(&mut b)?;
        *f = u32::from_le_bytes(b);
    }
    Ok(fields)
}

fn to_u32(v: usize) -> Result<u32> {
    u32::try_from(v).map_err(|_| fmt_err("value does not fit in u32"))
}

pub fn write_sync_binary<W: Write>(w: &mut W, s: &SyncString) -> Result<()> {
    write_binary_header(
        w,
        SYNC_MAGIC,
        [s.id(), to_u32(s.len())?, to_u32(s.period_len())?, 0],
    )?;
    let mut packed = vec![0u8; s.len().div_ceil(8)];
    for (i, &v) in s.values().iter().enumerate() {
        if v > 0 {
            packed[i / 8] |= 1 << (i % 8);
        }
    }
    w.write_all(&packed)?;
    Ok(())
}

pub fn read_sync_binary<R: Read>(r: &mut R) -> Result<SyncString> {
    let [id, len, period_len, m] = read_binary_header(r, SYNC_MAGIC)?;
    if m != 0 {
        return Err(fmt_err("sync record must have M = 0"));
    }
    let len = len as usize;
    let mut packed = vec![0u8; len.div_ceil(8)];
    r.read_exact(&mut packed)?;
    let values: Vec<i8> = (0..len)
        .map(|i| {
            if packed[i / 8] >> (i % 8) & 1 == 1 {
                1
            } else {
                -1
            }
        })
        .collect();
    SyncString::from_values(id, &values, period_len as usize)
}

pub fn write_frame_binary<W: Write>(w: &mut W, f: &BitFrame) -> Result<()> {
    let len = f.len() / (f.interleave + 1);
    write_binary_header(
        w,
        FRAME_MAGIC,
        [
            f.id,
            to_u32(len)?,
            to_u32(f.period_len)?,
            to_u32(f.interleave)?,
        ],
    )?;
    let bytes: Vec<u8> = f
        .symbols
        .iter()
        .map(|s| {
            s.bit
                | (u8::from(s.basis == Basis::X) << 1)
                | (u8::from(s.intensity == Intensity::Decoy) << 2)
        })
        .collect();
    w.write_all(&bytes)?;
    Ok(())
}

pub fn read_frame_binary<R: Read>(r: &mut R) -> Result<BitFrame> {
    let [id, len, period_len, m] = read_binary_header(r, FRAME_MAGIC)?;
    if m < 1 {
        return Err(fmt_err("frame record needs M >= 1"));
    }
    let stride = m as usize + 1;
    let mut bytes = vec![0u8; stride * len as usize];
    r.read_exact(&mut bytes)?;
    let symbols = bytes
        .iter()
        .enumerate()
        .map(|(i, &b)| {
            if b >> 3 != 0 {
                return Err(fmt_err(format!("reserved bits set in symbol byte {b:#x}")));
            }
            Ok(QubitSymbol {
                basis: if b & 2 != 0 { Basis::X } else { Basis::Z },
                bit: b & 1,
                intensity: if b & 4 != 0 {
                    Intensity::Decoy
                } else {
                    Intensity::Signal
                },
                role: if i % stride == 0 {
                    Role::Sync
                } else {
                    Role::Random
                },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BitFrame {
        id,
        period_len: period_len as usize,
        interleave: m as usize,
        symbols,
    })
}
