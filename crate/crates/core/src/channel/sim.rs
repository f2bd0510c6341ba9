use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric, Poisson, StandardNormal};

use super::config::{ReceiverConfig, TransmitterConfig};
use super::event::{Channel, DetectionEvent, EventRecord, GroundTruth, Origin};
use crate::error::{Error, Result};
use crate::prf;
use crate::protocol::{generate_sync_string, Basis, Intensity, PulseStream};

const BLOCK_PULSES: u64 = 1 << 20;
const DARK_BLOCK_PS: u64 = 1_000_000_000;
const TAG_SIGNAL: u64 = 0x5349_474E;
const TAG_DARK: u64 = 0x4441_524B;

/// Picoseconds per second.
pub const PS_PER_S: f64 = 1e12;

/// Builds the pulse stream a transmitter emits from its configuration.
pub fn pulse_stream(tx: &TransmitterConfig) -> Result<PulseStream> {
    let spec = tx.frame_spec()?;
    let sync = generate_sync_string(spec.sync_len, spec.period_len, tx.id, tx.sync_seed)?;
    PulseStream::new(sync, spec.interleave, tx.probabilities()?, tx.payload_seed)
}

#[derive(Debug, Clone)]
struct Source {
    cfg: TransmitterConfig,
    stream: PulseStream,
    eta: f64,
    p_max: f64,
    t0: f64,
    period: f64,
}

impl Source {
    fn emission_ps(&self, local: u64) -> f64 {
        self.t0 + local as f64 * self.period
    }

    /// Local pulse indices whose emission time lies in `[start, end)`.
    fn pulses_in(&self, start: f64, end: f64) -> std::ops::Range<u64> {
        let first = ((start - self.t0) / self.period).ceil().max(0.0) as u64;
        let last = ((end - self.t0) / self.period).ceil().max(0.0) as u64;
        first..last
    }
}

/// Seed-deterministic detection simulator for a set of transmitters sharing
/// one receiver. Randomness is keyed on `(seed, transmitter, pulse block)`
/// and `(seed, detector, time block)`, so a run split into windows yields the
/// same events as one long run, and adding a transmitter leaves the events of
/// the others unchanged.
#[derive(Debug, Clone)]
pub struct ChannelSimulator {
    sources: Vec<Source>,
    rx: ReceiverConfig,
    seed: u64,
}

impl ChannelSimulator {
    pub fn new(transmitters: &[TransmitterConfig], rx: &ReceiverConfig, seed: u64) -> Result<Self> {
        if transmitters.is_empty() {
            return Err(Error::Config("at least one transmitter is required".into()));
        }
        rx.validate()?;
        let mut sources = Vec::with_capacity(transmitters.len());
        for (i, tx) in transmitters.iter().enumerate() {
            tx.validate()?;
            if tx.slot >= rx.slots {
                return Err(Error::Config(format!(
                    "transmitter {}: slot {} outside 0..{}",
                    tx.id, tx.slot, rx.slots
                )));
            }
            if let Some(other) = transmitters[..i].iter().find(|o| o.slot == tx.slot) {
                return Err(Error::Config(format!(
                    "transmitters {} and {} share slot {}",
                    other.id, tx.id, tx.slot
                )));
            }
            if transmitters[..i].iter().any(|o| o.id == tx.id) {
                return Err(Error::Config(format!("duplicate transmitter id {}", tx.id)));
            }
            let eta = tx.channel_transmittance() * rx.transmittance_total();
            let p_max = 1.0 - (-tx.mu * eta).exp();
            sources.push(Source {
                stream: pulse_stream(tx)?,
                eta,
                p_max,
                t0: tx.start_periods as f64 * tx.period_ps
                    + tx.slot as f64 * rx.slot_spacing_ps()
                    + tx.delay_ps,
                period: tx.true_period_ps(),
                cfg: tx.clone(),
            });
        }
        Ok(ChannelSimulator {
            sources,
            rx: rx.clone(),
            seed,
        })
    }

    pub fn receiver(&self) -> &ReceiverConfig {
        &self.rx
    }

    pub fn transmitters(&self) -> impl Iterator<Item = &TransmitterConfig> {
        self.sources.iter().map(|s| &s.cfg)
    }

    pub fn stream(&self, id: u32) -> Option<&PulseStream> {
        self.sources
            .iter()
            .find(|s| s.cfg.id == id)
            .map(|s| &s.stream)
    }

    /// Total transmittance `eta_ch * eta_spl * eta_r * efficiency` of one transmitter.
    pub fn transmittance(&self, id: u32) -> Option<f64> {
        self.sources.iter().find(|s| s.cfg.id == id).map(|s| s.eta)
    }

    /// Transmitter pulse counter range emitted during `[start_ps, end_ps)`.
    pub fn pulse_range(&self, id: u32, start_ps: f64, end_ps: f64) -> Option<std::ops::Range<u64>> {
        self.sources.iter().find(|s| s.cfg.id == id).map(|s| {
            let r = s.pulses_in(start_ps, end_ps);
            r.start + s.cfg.start_index..r.end + s.cfg.start_index
        })
    }

    /// Receiver-clock arrival time (before jitter) of a transmitter pulse.
    pub fn arrival_ps(&self, id: u32, pulse: u64) -> Option<f64> {
        self.sources
            .iter()
            .find(|s| s.cfg.id == id)
            .map(|s| s.t0 + (pulse as f64 - s.cfg.start_index as f64) * s.period)
    }

    /// Events from pulses emitted and dark counts occurring in `[start_ps, end_ps)`.
    pub fn simulate(&self, start_ps: u64, end_ps: u64) -> (EventRecord, GroundTruth) {
        let mut tagged: Vec<(DetectionEvent, Origin)> = Vec::new();
        for src in &self.sources {
            self.signal_events(src, start_ps as f64, end_ps as f64, &mut tagged);
        }
        self.dark_events(start_ps, end_ps, &mut tagged);
        tagged.sort_by_key(|(e, _)| (e.timestamp_ps, e.channel));
        let (events, origins) = tagged.into_iter().unzip();
        (
            EventRecord {
                period_ps: self.rx.period_ps.round() as u64,
                events,
            },
            GroundTruth { origins },
        )
    }

    fn signal_events(
        &self,
        src: &Source,
        start: f64,
        end: f64,
        out: &mut Vec<(DetectionEvent, Origin)>,
    ) {
        let range = src.pulses_in(start, end);
        if range.is_empty() || src.p_max <= 0.0 {
            return;
        }
        let skip = Geometric::new(src.p_max).expect("p_max is a probability");
        let rx = &self.rx;
        for block in range.start / BLOCK_PULSES..=(range.end - 1) / BLOCK_PULSES {
            let mut rng = ChaCha8Rng::seed_from_u64(prf::derive(
                self.seed,
                &[TAG_SIGNAL, u64::from(src.cfg.id), block],
            ));
            let block_end = (block + 1) * BLOCK_PULSES;
            let mut k = block * BLOCK_PULSES;
            loop {
                k = k.saturating_add(skip.sample(&mut rng));
                if k >= block_end {
                    break;
                }
                let local = k;
                k += 1;
                let pulse = local + src.cfg.start_index;
                let sym = src.stream.symbol(pulse);
                let mean = match sym.intensity {
                    Intensity::Signal => src.cfg.mu,
                    Intensity::Decoy => src.cfg.nu,
                } * src.eta;
                let p_click = 1.0 - (-mean).exp();
                let u: f64 = rng.random();
                if u * src.p_max >= p_click {
                    continue;
                }
                let photons = zero_truncated_poisson(mean, &mut rng);
                let mut mask = 0u8;
                for _ in 0..photons {
                    let basis = if rng.random::<f64>() < rx.z_fraction {
                        Basis::Z
                    } else {
                        Basis::X
                    };
                    let bit = if basis == sym.basis {
                        sym.bit ^ u8::from(rng.random::<f64>() < src.cfg.misalignment)
                    } else {
                        rng.random::<u8>() & 1
                    };
                    mask |= 1 << Channel::from_measurement(basis, bit) as u8;
                }
                let t = src.emission_ps(local);
                let in_window = range.contains(&local);
                for ch in Channel::ALL {
                    if mask & (1 << ch as u8) == 0 {
                        continue;
                    }
                    let jitter: f64 = if rx.jitter_ps > 0.0 {
                        rx.jitter_ps * rng.sample::<f64, _>(StandardNormal)
                    } else {
                        0.0
                    };
                    if in_window {
                        out.push((
                            DetectionEvent {
                                timestamp_ps: (t + jitter).round().max(0.0) as u64,
                                channel: ch,
                            },
                            Origin::Signal {
                                transmitter: src.cfg.id,
                                pulse,
                            },
                        ));
                    }
                }
            }
        }
    }

    fn dark_events(&self, start: u64, end: u64, out: &mut Vec<(DetectionEvent, Origin)>) {
        let rate = self.rx.dark_rate_per_ps();
        if rate <= 0.0 || end <= start {
            return;
        }
        let per_block = Poisson::new(rate * DARK_BLOCK_PS as f64).expect("positive rate");
        for ch in Channel::ALL {
            for block in start / DARK_BLOCK_PS..=(end - 1) / DARK_BLOCK_PS {
                let mut rng = ChaCha8Rng::seed_from_u64(prf::derive(
                    self.seed,
                    &[TAG_DARK, ch as u64, block],
                ));
                let n = per_block.sample(&mut rng) as u64;
                for _ in 0..n {
                    let t = block * DARK_BLOCK_PS + rng.random_range(0..DARK_BLOCK_PS);
                    if (start..end).contains(&t) {
                        out.push((
                            DetectionEvent {
                                timestamp_ps: t,
                                channel: ch,
                            },
                            Origin::Dark,
                        ));
                    }
                }
            }
        }
    }
}

/// Photon number given that at least one photon is present.
fn zero_truncated_poisson<R: Rng>(mean: f64, rng: &mut R) -> u32 {
    if mean > 1.0 {
        let p = Poisson::new(mean).expect("positive mean");
        loop {
            let n = p.sample(rng) as u32;
            if n > 0 {
                return n;
            }
        }
    }
    // Inversion on P(k | k >= 1) = e^-m m^k / (k! (1 - e^-m)).
    let mut u: f64 = rng.random::<f64>() * -(-mean).exp_m1();
    let mut term = mean * (-mean).exp();
    let mut k = 1u32;
    while u > term && k < 64 {
        u -= term;
        k += 1;
        term *= mean / k as f64;
    }
    k
}

/// Simulates `duration_s` seconds starting at receiver time zero. Timestamps
/// pushed outside `[0, duration]` by jitter are dropped.
pub fn simulate_transmission(
    transmitters: &[TransmitterConfig],
    receiver: &ReceiverConfig,
    duration_s: f64,
    seed: u64,
) -> Result<(EventRecord, GroundTruth)> {
    if !(duration_s > 0.0) {
        return Err(Error::Config("duration must be positive".into()));
    }
    let sim = ChannelSimulator::new(transmitters, receiver, seed)?;
    let end = (duration_s * PS_PER_S).round() as u64;
    let (mut rec, mut truth) = sim.simulate(0, end);
    if rec.events.last().is_some_and(|e| e.timestamp_ps > end) {
        let keep = rec.events.partition_point(|e| e.timestamp_ps <= end);
        rec.events.truncate(keep);
        truth.origins.truncate(keep);
    }
    Ok((rec, truth))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noiseless() -> (TransmitterConfig, ReceiverConfig) {
        let mut tx = TransmitterConfig::new(1, 3);
        tx.mu = 60.0;
        tx.nu = 50.0;
        tx.p_z = 1.0;
        tx.sync_len = 1000;
        tx.period_len = Some(100);
        let rx = ReceiverConfig {
            transmittance: 1.0,
            dark_count_prob: 0.0,
            jitter_ps: 0.0,
            z_fraction: 1.0,
            ..ReceiverConfig::default()
        };
        (tx, rx)
    }

    #[test]
    fn noiseless_limit_gives_one_event_per_period() {
        let (tx, rx) = noiseless();
        let (rec, truth) = simulate_transmission(&[tx], &rx, 1e-5, 1).unwrap();
        assert_eq!(rec.len(), 500);
        for (i, (e, o)) in rec.events.iter().zip(&truth.origins).enumerate() {
            assert_eq!(e.timestamp_ps, 3000 + 20_000 * i as u64);
            assert_eq!(
                *o,
                Origin::Signal {
                    transmitter: 1,
                    pulse: i as u64
                }
            );
        }
    }

    #[test]
    fn zero_truncated_poisson_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for m in [0.05, 0.5, 3.0] {
            let n = 200_000;
            let mean = (0..n)
                .map(|_| zero_truncated_poisson(m, &mut rng) as f64)
                .sum::<f64>()
                / n as f64;
            let expect = m / -(-m).exp_m1();
            assert!(
                (mean - expect).abs() < 0.01 * expect,
                "{m}: {mean} vs {expect}"
            );
        }
    }

    #[test]
    fn windows_compose() {
        let mut tx = TransmitterConfig::new(1, 0);
        tx.sync_len = 1000;
        tx.period_len = Some(100);
        tx.clock_error_ppm = 3.0;
        let rx = ReceiverConfig {
            dark_count_prob: 1e-3,
            ..ReceiverConfig::default()
        };
        let sim = ChannelSimulator::new(&[tx], &rx, 9).unwrap();
        let (whole, _) = sim.simulate(0, 30_000_000_000);
        let (a, _) = sim.simulate(0, 12_345_678_901);
        let (b, _) = sim.simulate(12_345_678_901, 30_000_000_000);
        let mut joined: Vec<_> = a.events.into_iter().chain(b.events).collect();
        joined.sort();
        let mut whole_sorted = whole.events.clone();
        whole_sorted.sort();
        assert_eq!(joined, whole_sorted);
    }

    #[test]
    fn shared_slots_are_rejected() {
        let rx = ReceiverConfig::default();
        let a = TransmitterConfig::new(1, 2);
        let b = TransmitterConfig::new(2, 2);
        assert!(matches!(
            ChannelSimulator::new(&[a, b], &rx, 0),
            Err(Error::Config(_))
        ));
    }
}
