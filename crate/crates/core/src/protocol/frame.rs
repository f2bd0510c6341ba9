use serde::{Deserialize, Serialize};

use super::symbol::{Basis, Intensity, PayloadSource, QubitSymbol, Role, SourceProbabilities};
use super::sync_code::SyncString;
use crate::error::{param, Result};

/// Frame geometry: sync length `L`, small period `L1`, interleave `M`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameSpec {
    pub sync_len: usize,
    pub period_len: usize,
    pub interleave: usize,
}

impl FrameSpec {
    pub fn new(sync_len: usize, period_len: usize, interleave: usize) -> Result<Self> {
        let spec = FrameSpec {
            sync_len,
            period_len,
            interleave,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.interleave < 1 {
            return Err(param("interleave interval M must be at least 1"));
        }
        if self.period_len < 2 || self.sync_len == 0 || self.sync_len % self.period_len != 0 {
            return Err(param(format!(
                "L = {} must be a positive multiple of L1 = {} >= 2",
                self.sync_len, self.period_len
            )));
        }
        Ok(())
    }

    /// `(M + 1) * L`.
    pub fn frame_len(&self) -> usize {
        (self.interleave + 1) * self.sync_len
    }

    pub fn stride(&self) -> usize {
        self.interleave + 1
    }

    /// Key-generation duty ratio `q = M / (M + 1)`.
    pub fn duty_ratio(&self) -> f64 {
        self.interleave as f64 / (self.interleave + 1) as f64
    }

    pub fn is_sync_position(&self, pos: usize) -> bool {
        pos % self.stride() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitFrame {
    pub id: u32,
    pub period_len: usize,
    pub interleave: usize,
    pub symbols: Vec<QubitSymbol>,
}

impl BitFrame {
    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn spec(&self) -> FrameSpec {
        FrameSpec {
            sync_len: self.symbols.len() / (self.interleave + 1),
            period_len: self.period_len,
            interleave: self.interleave,
        }
    }

    /// Splits the frame back into sync values and payload symbols.
    pub fn parse(&self) -> (Vec<i8>, Vec<QubitSymbol>) {
        let stride = self.interleave + 1;
        let mut sync = Vec::with_capacity(self.symbols.len() / stride);
        let mut payload = Vec::with_capacity(self.symbols.len() - self.symbols.len() / stride);
        for (i, s) in self.symbols.iter().enumerate() {
            if i % stride == 0 {
                sync.push(s.ternary());
            } else {
                payload.push(*s);
            }
        }
        (sync, payload)
    }
}

/// Interleaves sync symbol `k` at index `k * (M + 1)` followed by `M`
/// payload symbols. Sync pulses are labelled with the signal intensity.
pub fn build_frame(
    sync: &SyncString,
    payload: &[QubitSymbol],
    interleave: usize,
) -> Result<BitFrame> {
    if interleave < 1 {
        return Err(param("interleave interval M must be at least 1"));
    }
    if payload.len() != interleave * sync.len() {
        return Err(param(format!(
            "payload has {} symbols, expected M * L = {}",
            payload.len(),
            interleave * sync.len()
        )));
    }
    let mut symbols = Vec::with_capacity((interleave + 1) * sync.len());
    for (k, &v) in sync.values().iter().enumerate() {
        symbols.push(QubitSymbol::sync(v, Intensity::Signal));
        symbols.extend(
            payload[k * interleave..(k + 1) * interleave]
                .iter()
                .map(|s| QubitSymbol {
                    role: Role::Random,
                    ..*s
                }),
        );
    }
    Ok(BitFrame {
        id: sync.id(),
        period_len: sync.period_len(),
        interleave,
        symbols,
    })
}

/// The endless pulse stream of one transmitter: frames back to back, the
/// sync string reused in every frame and fresh payload everywhere else.
/// Pulse `n` sits at frame position `n mod ((M + 1) L)`.
#[derive(Debug, Clone)]
pub struct PulseStream {
    sync: SyncString,
    spec: FrameSpec,
    payload: PayloadSource,
}

impl PulseStream {
    pub fn new(
        sync: SyncString,
        interleave: usize,
        probs: SourceProbabilities,
        seed: u64,
    ) -> Result<Self> {
        let spec = FrameSpec::new(sync.len(), sync.period_len(), interleave)?;
        Ok(PulseStream {
            sync,
            spec,
            payload: PayloadSource::new(probs, seed)?,
        })
    }

    pub fn spec(&self) -> FrameSpec {
        self.spec
    }

    pub fn sync(&self) -> &SyncString {
        &self.sync
    }

    #[inline]
    pub fn symbol(&self, pulse: u64) -> QubitSymbol {
        let pos = (pulse % self.spec.frame_len() as u64) as usize;
        let stride = self.spec.stride();
        if pos % stride == 0 {
            QubitSymbol::sync(
                self.sync.values()[pos / stride],
                self.payload.intensity(pulse),
            )
        } else {
            self.payload.symbol(pulse)
        }
    }

    /// Materialises frame number `index`.
    pub fn frame(&self, index: u64) -> BitFrame {
        let start = index * self.spec.frame_len() as u64;
        BitFrame {
            id: self.sync.id(),
            period_len: self.spec.period_len,
            interleave: self.spec.interleave,
            symbols: (0..self.spec.frame_len() as u64)
                .map(|p| self.symbol(start + p))
                .collect(),
        }
    }

    /// Counts random-role pulses per `[basis][intensity]` over a pulse range.
    pub fn count_random(&self, pulses: std::ops::Range<u64>) -> [[u64; 2]; 2] {
        let mut counts = [[0u64; 2]; 2];
        let frame_len = self.spec.frame_len() as u64;
        let stride = self.spec.stride() as u64;
        for n in pulses {
            if (n % frame_len) % stride == 0 {
                continue;
            }
            let s = self.payload.symbol(n);
            counts[s.basis.index()][s.intensity.index()] += 1;
        }
        counts
    }
}

impl Basis {
    pub fn from_index(i: usize) -> Basis {
        if i == 0 {
            Basis::Z
        } else {
            Basis::X
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::symbol::generate_random_payload;
    use crate::protocol::sync_code::generate_sync_string;
    use proptest::prelude::*;

    #[test]
    fn interleave_arithmetic() {
        let sync = generate_sync_string(4, 2, 1, 0).unwrap();
        let payload = generate_random_payload(12, (0.5, 0.5), (0.5, 0.5), 1).unwrap();
        let f = build_frame(&sync, &payload, 3).unwrap();
        assert_eq!(f.len(), 16);
        let sync_idx: Vec<usize> = f
            .symbols
            .iter()
            .enumerate()
            .filter(|(_, s)| s.role == Role::Sync)
            .map(|(i, _)| i)
            .collect();
        assert_eq!(sync_idx, vec![0, 4, 8, 12]);
    }

    #[test]
    fn reference_frame_length() {
        let spec = FrameSpec::new(100_000, 1000, 1).unwrap();
        assert_eq!(spec.frame_len(), 200_000);
        assert_eq!(spec.duty_ratio(), 0.5);
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let sync = generate_sync_string(4, 2, 1, 0).unwrap();
        let payload = generate_random_payload(5, (0.5, 0.5), (0.5, 0.5), 1).unwrap();
        assert!(build_frame(&sync, &payload, 1).is_err());
        assert!(build_frame(&sync, &payload[..0], 0).is_err());
    }

    #[test]
    fn stream_frame_matches_build() {
        let probs = SourceProbabilities::new((0.69, 0.31), (0.9, 0.1)).unwrap();
        let sync = generate_sync_string(20, 5, 2, 0).unwrap();
        let stream = PulseStream::new(sync.clone(), 2, probs, 77).unwrap();
        let f = stream.frame(3);
        let (s, payload) = f.parse();
        assert_eq!(s, sync.values());
        let rebuilt = build_frame(&sync, &payload, 2).unwrap();
        let ternary = |fr: &BitFrame| {
            fr.symbols
                .iter()
                .map(|s| (s.ternary(), s.role))
                .collect::<Vec<_>>()
        };
        assert_eq!(ternary(&rebuilt), ternary(&f));
        let counts = stream.count_random(0..f.len() as u64 * 10);
        assert_eq!(counts.iter().flatten().sum::<u64>(), 10 * 40);
    }

    proptest! {
        #[test]
        fn parse_inverts_build(periods in 1usize..8, l1 in 2usize..9, m in 1usize..5, seed in any::<u64>()) {
            let sync = generate_sync_string(periods * l1, l1, 1, seed).unwrap();
            let payload = generate_random_payload(m * sync.len(), (0.69, 0.31), (0.9, 0.1), seed).unwrap();
            let frame = build_frame(&sync, &payload, m).unwrap();
            let (s, p) = frame.parse();
            prop_assert_eq!(s, sync.values().to_vec());
            prop_assert_eq!(p, payload);
            let syncs = frame.symbols.iter().filter(|s| s.role == Role::Sync).count();
            prop_assert_eq!(syncs, sync.len());
            prop_assert_eq!(frame.len() - syncs, m * sync.len());
            prop_assert!(frame.symbols.iter().filter(|s| s.role == Role::Sync).all(|s| s.basis == Basis::Z));
            let q = (frame.len() - syncs) as f64 / frame.len() as f64;
            prop_assert_eq!(q, frame.spec().duty_ratio());
        }
    }
}
