use super::slots::SlotAssignment;
use crate::channel::{Channel, DetectionEvent};
use crate::error::{param, Result};
use crate::protocol::FrameSpec;

/// Ternary view of one frame length of a slot, starting at a receiver period.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceivedFrame {
    pub slot: usize,
    pub spec: FrameSpec,
    /// Receiver period index of position 0; position `k` is period `origin_period + k`.
    pub origin_period: i64,
    /// `+1` for an H click, `-1` for V, `0` for no click, an X click or a conflict.
    pub values: Vec<i8>,
    /// Positions with clicks on more than one detector.
    pub conflicts: usize,
}

impl ReceivedFrame {
    pub fn nonzero(&self) -> usize {
        self.values.iter().filter(|&&v| v != 0).count()
    }

    /// Values at frame positions `u, u + M + 1, ...`.
    pub fn subsequence(&self, u: usize) -> Vec<i8> {
        self.values
            .iter()
            .skip(u)
            .step_by(self.spec.stride())
            .copied()
            .collect()
    }
}

/// Per-period detector bitmask of the gated events of one slot, in period order.
pub fn slot_clicks(
    events: &[DetectionEvent],
    assignment: &SlotAssignment,
    slot: usize,
) -> Vec<(i64, u8)> {
    let mut out: Vec<(i64, u8)> = Vec::new();
    for (e, label) in events.iter().zip(&assignment.labels) {
        if *label != Some(slot) {
            continue;
        }
        let p = assignment.period_index(e.timestamp_ps, slot);
        out.push((p, 1 << e.channel as u8));
    }
    out.sort_unstable_by_key(|&(p, _)| p);
    out.dedup_by(|b, a| {
        if a.0 == b.0 {
            a.1 |= b.1;
            true
        } else {
            false
        }
    });
    out
}

/// Ternary value of a detector bitmask; `None` marks a conflict.
pub fn ternary_of(mask: u8) -> Option<i8> {
    match mask {
        0 => Some(0),
        m if m == 1 << Channel::H as u8 => Some(1),
        m if m == 1 << Channel::V as u8 => Some(-1),
        m if m.count_ones() == 1 => Some(0),
        _ => None,
    }
}

/// Builds the frame of `slot` covering receiver periods
/// `origin_period .. origin_period + (M + 1) L`.
pub fn extract_received_frame(
    events: &[DetectionEvent],
    assignment: &SlotAssignment,
    slot: usize,
    spec: FrameSpec,
    origin_period: i64,
) -> Result<ReceivedFrame> {
    if slot >= assignment.clusters.len() || events.len() != assignment.labels.len() {
        return Err(param("slot or event list does not match the assignment"));
    }
    frame_from_clicks(
        &slot_clicks(events, assignment, slot),
        slot,
        spec,
        origin_period,
    )
}

pub fn frame_from_clicks(
    clicks: &[(i64, u8)],
    slot: usize,
    spec: FrameSpec,
    origin_period: i64,
) -> Result<ReceivedFrame> {
    spec.validate()?;
    let len = spec.frame_len();
    let mut values = vec![0i8; len];
    let mut conflicts = 0;
    let start = clicks.partition_point(|&(p, _)| p < origin_period);
    for &(p, mask) in &clicks[start..] {
        let k = p - origin_period;
        if k >= len as i64 {
            break;
        }
        match ternary_of(mask) {
            Some(v) => values[k as usize] = v,
            None => conflicts += 1,
        }
    }
    Ok(ReceivedFrame {
        slot,
        spec,
        origin_period,
        values,
        conflicts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conflicts_become_zero() {
        let spec = FrameSpec::new(4, 2, 1).unwrap();
        let clicks = [
            (10, 1u8),
            (11, 2),
            (12, 1 | 2),
            (13, 4),
            (14, 1 | 4),
            (18, 1),
        ];
        let f = frame_from_clicks(&clicks, 0, spec, 10).unwrap();
        assert_eq!(f.values, vec![1, -1, 0, 0, 0, 0, 0, 0]);
        assert_eq!(f.conflicts, 2);
        assert_eq!(f.subsequence(1), vec![-1, 0, 0, 0]);
    }
}
