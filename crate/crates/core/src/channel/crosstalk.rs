use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use statrs::function::erf::erf;

use super::config::{ReceiverConfig, TransmitterConfig};
use super::event::{Channel, DetectionEvent, EventRecord, GroundTruth, Origin};
use super::sim::{ChannelSimulator, PS_PER_S};
use crate::error::{check_probability, param, Error, Result};

/// Spread, in receiver periods, of the pulses an injected count may borrow
/// its timing from.
const BORROW_PERIODS: i64 = 1000;

/// Phenomenological cross-talk: every signal count of a victim spawns an
/// extra in-slot count with probability `p_t (n - 1) / (n_c - 1)`. The extra
/// count keeps the basis of the borrowed count and carries a random bit.
pub fn apply_crosstalk(
    record: &EventRecord,
    truth: &GroundTruth,
    p_t: f64,
    active: usize,
    capacity: usize,
    seed: u64,
) -> Result<(EventRecord, GroundTruth)> {
    if !(0.0..1.0).contains(&p_t) {
        return Err(param(format!(
            "cross-talk probability {p_t} outside [0, 1)"
        )));
    }
    if active == 0 || active > capacity {
        return Err(param(format!(
            "active users {active} must be in 1..={capacity}"
        )));
    }
    if truth.origins.len() != record.events.len() {
        return Err(param("ground truth does not match the event record"));
    }
    if active == 1 {
        return Ok((record.clone(), truth.clone()));
    }
    let rate = p_t * (active - 1) as f64 / (capacity - 1) as f64;
    let mut victims: Vec<u32> = truth
        .origins
        .iter()
        .filter_map(|o| match o {
            Origin::Signal { transmitter, .. } => Some(*transmitter),
            _ => None,
        })
        .collect();
    victims.sort_unstable();
    victims.dedup();

    let period = record.period_ps as i64;
    let span = record
        .events
        .first()
        .zip(record.events.last())
        .map(|(a, b)| (a.timestamp_ps, b.timestamp_ps));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut extra: Vec<(DetectionEvent, Origin)> = Vec::new();
    for victim in victims {
        let own: Vec<usize> = truth
            .origins
            .iter()
            .enumerate()
            .filter(
                |(_, o)| matches!(o, Origin::Signal { transmitter, .. } if *transmitter == victim),
            )
            .map(|(i, _)| i)
            .collect();
        let n = Binomial::new(own.len() as u64, rate)
            .expect("valid binomial")
            .sample(&mut rng);
        for _ in 0..n {
            let src = record.events[own[rng.random_range(0..own.len())]];
            let (lo, hi) = span.unwrap();
            let shift = rng.random_range(-BORROW_PERIODS..=BORROW_PERIODS) * period;
            let mut t = src.timestamp_ps as i64 + shift;
            if t < lo as i64 || t > hi as i64 {
                t = src.timestamp_ps as i64;
            }
            let channel = Channel::from_measurement(src.channel.basis(), rng.random::<u8>() & 1);
            extra.push((
                DetectionEvent {
                    timestamp_ps: t as u64,
                    channel,
                },
                Origin::Crosstalk { victim },
            ));
        }
    }
    let mut merged: Vec<(DetectionEvent, Origin)> = record
        .events
        .iter()
        .copied()
        .zip(truth.origins.iter().copied())
        .chain(extra)
        .collect();
    merged.sort_by_key(|(e, _)| e.timestamp_ps);
    let (events, origins) = merged.into_iter().unzip();
    Ok((
        EventRecord {
            period_ps: record.period_ps,
            events,
        },
        GroundTruth { origins },
    ))
}

fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + erf(x / std::f64::consts::SQRT_2))
}

/// Probability that a Gaussian arrival centred `distance_ps` after the
/// victim's pulse lands in the victim's gate `[offset - g/2, offset + g/2]`.
pub fn gate_capture(jitter_ps: f64, distance_ps: f64, gate_ps: f64, gate_offset_ps: f64) -> f64 {
    let lo = gate_offset_ps - gate_ps / 2.0 - distance_ps;
    let hi = gate_offset_ps + gate_ps / 2.0 - distance_ps;
    if jitter_ps == 0.0 {
        return f64::from(u8::from(lo <= 0.0 && 0.0 <= hi));
    }
    normal_cdf(hi / jitter_ps) - normal_cdf(lo / jitter_ps)
}

/// Jitter and gate placement reproducing a measured pair of adjacent-slot leaks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrosstalkCalibration {
    pub jitter_ps: f64,
    /// Victim gate centre relative to the nominal pulse arrival.
    pub gate_offset_ps: f64,
}

impl CrosstalkCalibration {
    /// Expected relative count increase from an aggressor `offset` slots away
    /// (positive = later slot), with equal aggressor and victim rates.
    pub fn relative_increase(&self, offset: i64, slot_spacing_ps: f64, gate_ps: f64) -> f64 {
        let own = gate_capture(self.jitter_ps, 0.0, gate_ps, self.gate_offset_ps);
        gate_capture(
            self.jitter_ps,
            offset as f64 * slot_spacing_ps,
            gate_ps,
            self.gate_offset_ps,
        ) / own
    }
}

fn bisect(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    let increasing = f(hi) > f(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (f(mid) > 0.0) == increasing {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Solves for the jitter and gate offset at which the earlier and later
/// adjacent aggressors raise the victim count by `earlier` and `later`.
pub fn calibrate_crosstalk(
    earlier: f64,
    later: f64,
    slot_spacing_ps: f64,
    gate_ps: f64,
) -> Result<CrosstalkCalibration> {
    if !(earlier > 0.0 && later > 0.0 && earlier < 0.5 && later < 0.5) {
        return Err(param("adjacent leak targets must lie in (0, 0.5)"));
    }
    if !(gate_ps > 0.0 && gate_ps <= slot_spacing_ps) {
        return Err(param("gate must be positive and no wider than a slot"));
    }
    let log_ratio = (later / earlier).ln();
    let half_gap = slot_spacing_ps / 2.0;
    let offset_for = |sigma: f64| {
        bisect(-half_gap * 0.9, half_gap * 0.9, |d| {
            let c = CrosstalkCalibration {
                jitter_ps: sigma,
                gate_offset_ps: d,
            };
            (c.relative_increase(1, slot_spacing_ps, gate_ps)
                / c.relative_increase(-1, slot_spacing_ps, gate_ps))
            .ln()
                - log_ratio
        })
    };
    let target = (earlier * later).sqrt();
    let jitter_ps = bisect(slot_spacing_ps * 1e-3, slot_spacing_ps * 2.0, |sigma| {
        let c = CrosstalkCalibration {
            jitter_ps: sigma,
            gate_offset_ps: offset_for(sigma),
        };
        (c.relative_increase(1, slot_spacing_ps, gate_ps)
            * c.relative_increase(-1, slot_spacing_ps, gate_ps))
        .sqrt()
            - target
    });
    Ok(CrosstalkCalibration {
        jitter_ps,
        gate_offset_ps: offset_for(jitter_ps),
    })
}

/// Relative victim count increase for one aggressor offset, over repeated seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct CrosstalkPoint {
    pub offset: i64,
    pub mean: f64,
    pub std: f64,
    pub samples: Vec<f64>,
}

/// Physical cross-talk measurement: for each aggressor slot offset and seed,
/// simulates the victim alone and with the aggressor under identical
/// randomness, and compares the counts inside the victim's gate.
pub fn measure_crosstalk(
    victim: &TransmitterConfig,
    receiver: &ReceiverConfig,
    gate_offset_ps: f64,
    offsets: &[i64],
    duration_s: f64,
    seeds: &[u64],
) -> Result<Vec<CrosstalkPoint>> {
    if seeds.is_empty() || !(duration_s > 0.0) {
        return Err(param("need at least one seed and a positive duration"));
    }
    let slots = receiver.slots as i64;
    let end = (duration_s * PS_PER_S).round() as u64;
    let t0 = victim.start_periods as f64 * victim.period_ps
        + victim.slot as f64 * receiver.slot_spacing_ps()
        + victim.delay_ps;
    let period = victim.true_period_ps();
    let in_gate = |t: u64| {
        let mut r = (t as f64 - t0).rem_euclid(period);
        if r > period / 2.0 {
            r -= period;
        }
        (r - gate_offset_ps).abs() <= receiver.gate_width_ps / 2.0
    };
    let count = |rec: &EventRecord| {
        rec.events
            .iter()
            .filter(|e| in_gate(e.timestamp_ps))
            .count() as f64
    };

    let mut baselines = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let (rec, _) =
            ChannelSimulator::new(std::slice::from_ref(victim), receiver, seed)?.simulate(0, end);
        let base = count(&rec);
        if base == 0.0 {
            return Err(Error::Measurement(
                "victim has no counts in its gate".into(),
            ));
        }
        baselines.push(base);
    }

    let mut out = Vec::with_capacity(offsets.len());
    for &offset in offsets {
        if offset.rem_euclid(slots) == 0 {
            return Err(param(format!(
                "aggressor offset {offset} coincides with the victim slot"
            )));
        }
        let mut aggressor = victim.clone();
        aggressor.id = victim.id.wrapping_add(1 + offset.unsigned_abs() as u32);
        aggressor.slot = (victim.slot as i64 + offset).rem_euclid(slots) as usize;
        aggressor.sync_seed = victim.sync_seed ^ 0xA66;
        aggressor.payload_seed = victim.payload_seed ^ 0xA66;
        let pair = [victim.clone(), aggressor];
        let mut samples = Vec::with_capacity(seeds.len());
        for (&seed, &base) in seeds.iter().zip(&baselines) {
            let (rec, _) = ChannelSimulator::new(&pair, receiver, seed)?.simulate(0, end);
            samples.push((count(&rec) - base) / base);
        }
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let std = if samples.len() > 1 {
            (samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        out.push(CrosstalkPoint {
            offset,
            mean,
            std,
            samples,
        });
    }
    Ok(out)
}

/// Cross-talk-inflated relative rate `p_t (n - 1) / (n_c - 1)`.
pub fn crosstalk_rate(p_t: f64, active: usize, capacity: usize) -> Result<f64> {
    check_probability("cross-talk probability", p_t)?;
    if active == 0 || active > capacity {
        return Err(param(format!(
            "active users {active} must be in 1..={capacity}"
        )));
    }
    if capacity == 1 {
        return Ok(0.0);
    }
    Ok(p_t * (active - 1) as f64 / (capacity - 1) as f64)
}
