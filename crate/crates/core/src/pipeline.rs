//! Windowed receiver chain: clock recovery, slot demarcation,
//! identification, alignment and sifting over a simulated detection stream.

use serde::{Deserialize, Serialize};

use crate::channel::{Channel, ChannelSimulator, DetectionEvent, EventRecord, GroundTruth, Origin, ReceiverConfig, TransmitterConfig, PS_PER_S};
use crate::error::{Error, Result};
use crate::keyrate::{secure_key_rate, KeyRateInputs, KeyRateResult, SecurityBudget, SiftedTally};
use crate::protocol::{FrameSpec, PulseStream, QubitSymbol, SyncString};
use crate::sync::{
    demarcate_slots, estimate_clock_fft, frame_from_clicks, identify_transmitter, refine_clock_lts, slot_clicks, ClockEstimate,
    IdentificationReport, IdentificationResult, IdentifyOptions, LtsOptions, ReportEntry, SlotAssignment, DEFAULT_FFT_SAMPLES,
};

/// How received periods are tied to transmitter pulse numbers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Alignment {
    /// From the sync-string correlation (the receiver's only option).
    Identification,
    /// From simulator provenance; an oracle for tests.
    GroundTruth,
}

#[derive(Debug, Clone)]
pub struct PipelineOptions {
    pub window_s: f64,
    pub max_duration_s: f64,
    /// Stop once every transmitter has this many sifted Z bits.
    pub target_n_z: f64,
    pub fft_samples: usize,
    pub lts: LtsOptions,
    pub identify: IdentifyOptions,
    pub alignment: Alignment,
    /// Frames tried per slot and window before the slot is skipped.
    pub frame_attempts: usize,
    pub eps_sec: f64,
    pub eps_cor: f64,
    pub f_e: f64,
    pub budget: SecurityBudget,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            window_s: 1.0,
            max_duration_s: 120.0,
            target_n_z: 1e7,
            fft_samples: DEFAULT_FFT_SAMPLES,
            lts: LtsOptions::default(),
            identify: IdentifyOptions::default(),
            alignment: Alignment::Identification,
            frame_attempts: 3,
            eps_sec: 1e-9,
            eps_cor: 1e-15,
            f_e: 1.16,
            budget: SecurityBudget::default(),
        }
    }
}

/// Pulse-number mapping of one slot in one window.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotAlignment {
    pub slot: usize,
    pub transmitter: u32,
    /// Transmitter pulse number emitted in receiver period `origin_period`.
    pub origin_pulse: u64,
    pub origin_period: i64,
    pub identification: Option<IdentificationResult>,
}

impl SlotAlignment {
    pub fn pulse_at(&self, period: i64) -> Option<u64> {
        u64::try_from(self.origin_pulse as i64 + (period - self.origin_period)).ok()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowReport {
    pub start_s: f64,
    pub events: usize,
    pub clock: ClockEstimate,
    pub slots: Vec<SlotAlignment>,
    /// Slots found by demarcation that could not be aligned.
    pub unidentified: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserOutcome {
    pub transmitter: u32,
    pub tally: SiftedTally,
    /// All pulses emitted during the accounted windows.
    pub pulses: u64,
    pub windows: usize,
    /// Identified slot offsets that disagree with the simulator provenance.
    pub misaligned: usize,
    pub key: Option<KeyRateResult>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutcome {
    pub windows: Vec<WindowReport>,
    pub users: Vec<UserOutcome>,
    pub duration_s: f64,
}

/// The receiver's expected pulse number of `tx` at receiver time `t_ps`,
/// from the coarse alignment of network set-up.
fn pulse_hint(tx: &TransmitterConfig, rx: &ReceiverConfig, t_ps: f64) -> f64 {
    let t0 = tx.start_periods as f64 * tx.period_ps + tx.slot as f64 * rx.slot_spacing_ps() + tx.delay_ps;
    tx.start_index as f64 + (t_ps - t0) / tx.period_ps
}

/// Sifts the gated clicks of one aligned slot. Periods with clicks on more
/// than one detector are discarded.
pub fn sift_slot(
    clicks: &[(i64, u8)],
    alignment: Option<&SlotAlignment>,
    slot: usize,
    stream: &PulseStream,
) -> Result<SiftedTally> {
    let a = alignment.ok_or(Error::UnidentifiedSlot(slot))?;
    let detections = clicks.iter().filter_map(|&(p, mask)| {
        if mask.count_ones() != 1 {
            return None;
        }
        let n = a.pulse_at(p)?;
        Some((stream.symbol(n), Channel::from_index(mask.trailing_zeros() as u8)?))
    });
    Ok(crate::keyrate::sift(detections.collect::<Vec<(QubitSymbol, Channel)>>(), [[0; 2]; 2]))
}

struct Receiver<'a> {
    sim: &'a ChannelSimulator,
    codes: Vec<SyncString>,
    spec: FrameSpec,
    opts: &'a PipelineOptions,
}

impl Receiver<'_> {
    fn clock(&self, timestamps: &[u64]) -> Result<ClockEstimate> {
        let rx = self.sim.receiver();
        let coarse = estimate_clock_fft(timestamps, rx.period_ps, self.opts.fft_samples)?;
        refine_clock_lts(timestamps, coarse, &self.opts.lts)
    }

    fn align_by_identification(&self, clicks: &[(i64, u8)], slot: usize, assignment: &SlotAssignment) -> Option<SlotAlignment> {
        let rx = self.sim.receiver();
        let (origin, id) = identify_slot(clicks, slot, self.spec, &self.codes, self.opts)?;
        let tx = self.sim.transmitters().find(|t| t.id == id.transmitter)?;
        let frame_len = self.spec.frame_len() as f64;
        let t = origin as f64 * assignment.period_ps + assignment.clusters[slot].centre_ps;
        let hint = pulse_hint(tx, rx, t);
        let k = ((hint - id.offset_symbols as f64) / frame_len).round();
        let pulse = k * frame_len + id.offset_symbols as f64;
        if pulse < 0.0 {
            return None;
        }
        Some(SlotAlignment {
            slot,
            transmitter: id.transmitter,
            origin_pulse: pulse as u64,
            origin_period: origin,
            identification: Some(id),
        })
    }
}

/// Identifies the transmitter of one slot from the first complete frames of
/// its clicks. Returns the frame origin period and the result.
pub fn identify_slot(
    clicks: &[(i64, u8)],
    slot: usize,
    spec: FrameSpec,
    codes: &[SyncString],
    opts: &PipelineOptions,
) -> Option<(i64, IdentificationResult)> {
    let frame_len = spec.frame_len() as i64;
    let first = clicks.first()?.0;
    for attempt in 0..opts.frame_attempts as i64 {
        let origin = first + attempt * frame_len;
        if clicks.last()?.0 < origin + frame_len - 1 {
            return None;
        }
        let frame = frame_from_clicks(clicks, slot, spec, origin).ok()?;
        if let Ok(id) = identify_transmitter(&frame, codes, &opts.identify) {
            return Some((origin, id));
        }
    }
    None
}

/// Receiver chain over a recorded detection stream: clock recovery, slot
/// demarcation and identification of every occupied slot. Fails on the
/// first slot that cannot be identified.
pub fn identify_record(
    record: &EventRecord,
    codes: &[SyncString],
    spec: FrameSpec,
    receiver: &ReceiverConfig,
    opts: &PipelineOptions,
) -> Result<IdentificationReport> {
    let timestamps = record.timestamps();
    let coarse = estimate_clock_fft(&timestamps, receiver.period_ps, opts.fft_samples)?;
    let clock = refine_clock_lts(&timestamps, coarse, &opts.lts)?;
    let assignment = demarcate_slots(&timestamps, &clock, receiver.gate_width_ps, receiver.slots)?;
    let frame_len = spec.frame_len() as u64;
    let mut entries = Vec::new();
    for (slot, cluster) in assignment.clusters.iter().enumerate() {
        let clicks = slot_clicks(&record.events, &assignment, slot);
        let (_, id) = identify_slot(&clicks, slot, spec, codes, opts).ok_or(Error::UnidentifiedSlot(slot))?;
        entries.push(ReportEntry {
            slot,
            residue_ps: cluster.centre_ps,
            transmitter: id.transmitter,
            offset_symbols: id.offset_symbols,
            frame_start_ps: id.frame_start_period(frame_len) as f64 * assignment.period_ps + cluster.centre_ps,
            snr: id.snr,
            peak: id.peak,
            nonzero: id.nonzero,
        });
    }
    Ok(IdentificationReport {
        period_ps: assignment.period_ps,
        entries,
    })
}

/// Alignment implied by simulator provenance: the majority `(transmitter,
/// pulse - period)` among signal events gated into the slot.
fn align_by_truth(events: &[DetectionEvent], truth: &GroundTruth, assignment: &SlotAssignment, slot: usize) -> Option<SlotAlignment> {
    let mut votes: std::collections::HashMap<(u32, i64), usize> = std::collections::HashMap::new();
    for ((e, o), l) in events.iter().zip(&truth.origins).zip(&assignment.labels) {
        if let (Some(s), Origin::Signal { transmitter, pulse }) = (l, o) {
            if *s == slot {
                let p = assignment.period_index(e.timestamp_ps, slot);
                *votes.entry((*transmitter, *pulse as i64 - p)).or_default() += 1;
            }
        }
    }
    let ((transmitter, shift), _) = votes.into_iter().max_by_key(|&(k, v)| (v, std::cmp::Reverse(k)))?;
    let origin_period = (-shift).max(0);
    Some(SlotAlignment {
        slot,
        transmitter,
        origin_pulse: (origin_period + shift) as u64,
        origin_period,
        identification: None,
    })
}

/// Runs windows of simulation and receiver processing until every
/// transmitter has `target_n_z` sifted bits (or the duration cap), then
/// evaluates the key rate of each user.
pub fn run_pipeline(
    transmitters: &[TransmitterConfig],
    receiver: &ReceiverConfig,
    seed: u64,
    opts: &PipelineOptions,
) -> Result<PipelineOutcome> {
    let sim = ChannelSimulator::new(transmitters, receiver, seed)?;
    let spec = transmitters[0].frame_spec()?;
    if transmitters.iter().any(|t| t.frame_spec().ok() != Some(spec)) {
        return Err(Error::Config("all transmitters must share one frame layout".into()));
    }
    let codes: Vec<SyncString> = transmitters.iter().map(|t| sim.stream(t.id).unwrap().sync().clone()).collect();
    let rx = Receiver {
        sim: &sim,
        codes,
        spec,
        opts,
    };
    let mut users: Vec<UserOutcome> = transmitters
        .iter()
        .map(|t| UserOutcome {
            transmitter: t.id,
            tally: SiftedTally::default(),
            pulses: 0,
            windows: 0,
            misaligned: 0,
            key: None,
        })
        .collect();
    let window_ps = (opts.window_s * PS_PER_S).round() as u64;
    let mut windows = Vec::new();
    let mut start = 0u64;
    while (start as f64) < opts.max_duration_s * PS_PER_S
        && users.iter().any(|u| u.tally.n_z() < opts.target_n_z)
    {
        let end = start + window_ps;
        let (record, truth) = sim.simulate(start, end);
        let timestamps = record.timestamps();
        let clock = rx.clock(&timestamps)?;
        let assignment = demarcate_slots(&timestamps, &clock, receiver.gate_width_ps, receiver.slots)?;
        let mut report = WindowReport {
            start_s: start as f64 / PS_PER_S,
            events: record.len(),
            clock,
            slots: Vec::new(),
            unidentified: Vec::new(),
        };
        for slot in 0..assignment.clusters.len() {
            let clicks = slot_clicks(&record.events, &assignment, slot);
            let oracle = align_by_truth(&record.events, &truth, &assignment, slot);
            let aligned = match opts.alignment {
                Alignment::Identification => rx.align_by_identification(&clicks, slot, &assignment),
                Alignment::GroundTruth => oracle.clone(),
            };
            let Some(a) = aligned else {
                report.unidentified.push(slot);
                continue;
            };
            let Some(user) = users.iter_mut().find(|u| u.transmitter == a.transmitter) else {
                report.unidentified.push(slot);
                continue;
            };
            if user.tally.n_z() >= opts.target_n_z {
                report.slots.push(a);
                continue;
            }
            if let Some(o) = &oracle {
                if o.transmitter != a.transmitter || o.pulse_at(a.origin_period) != Some(a.origin_pulse) {
                    user.misaligned += 1;
                }
            }
            let stream = sim.stream(a.transmitter).unwrap();
            let mut tally = sift_slot(&clicks, Some(&a), slot, stream)?;
            let pulses = sim.pulse_range(a.transmitter, start as f64, end as f64).unwrap();
            tally_sent(&mut tally, stream.count_random(pulses.clone()));
            user.tally.add(&tally);
            user.pulses += pulses.end - pulses.start;
            user.windows += 1;
            report.slots.push(a);
        }
        windows.push(report);
        start = end;
    }
    for (u, tx) in users.iter_mut().zip(transmitters) {
        if u.windows == 0 {
            continue;
        }
        u.key = Some(secure_key_rate(&KeyRateInputs {
            tally: u.tally,
            mu: tx.mu,
            nu: tx.nu,
            p_mu: tx.p_signal,
            p_nu: 1.0 - tx.p_signal,
            eps_sec: opts.eps_sec,
            eps_cor: opts.eps_cor,
            f_e: opts.f_e,
            frequency_hz: 1e12 / tx.period_ps,
            total_pulses: u.pulses as f64,
            q: spec.duty_ratio(),
            budget: opts.budget,
        })?);
    }
    Ok(PipelineOutcome {
        windows,
        users,
        duration_s: start as f64 / PS_PER_S,
    })
}

fn tally_sent(t: &mut SiftedTally, sent: [[u64; 2]; 2]) {
    for (b, row) in sent.iter().enumerate() {
        for (k, &n) in row.iter().enumerate() {
            t.counts[b][k].sent = n as f64;
        }
    }
}
