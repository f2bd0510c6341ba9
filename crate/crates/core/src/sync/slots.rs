use serde::{Deserialize, Serialize};

use super::clock::{circular_diff, find_clusters, ClockEstimate};
use crate::error::{param, Error, Result};

/// One demarcated TDM slot: a residue cluster whose centre follows
/// `centre_ps + drift * (t - reference_ps)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotCluster {
    pub centre_ps: f64,
    /// Residue drift in ps per ps of elapsed time.
    pub drift: f64,
    pub reference_ps: f64,
    pub events: usize,
}

impl SlotCluster {
    pub fn centre_at(&self, t: f64, period: f64) -> f64 {
        (self.centre_ps + self.drift * (t - self.reference_ps)).rem_euclid(period)
    }
}

/// Per-event residues and slot labels.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotAssignment {
    pub period_ps: f64,
    /// `T_n = t mod tau_R`.
    pub residues: Vec<f64>,
    /// Slot label, or `None` when the event falls outside every gate.
    pub labels: Vec<Option<usize>>,
    pub clusters: Vec<SlotCluster>,
    pub gate_width_ps: f64,
}

impl SlotAssignment {
    pub fn gated(&self) -> usize {
        self.labels.iter().filter(|l| l.is_some()).count()
    }

    /// Receiver period index of a gated arrival.
    pub fn period_index(&self, t: u64, slot: usize) -> i64 {
        let t = t as f64;
        let centre = self.clusters[slot].centre_at(t, self.period_ps);
        let r = circular_diff(t.rem_euclid(self.period_ps), centre, self.period_ps);
        ((t - r - centre) / self.period_ps).round() as i64
    }
}

#[inline]
fn residue(t: u64, period: f64) -> f64 {
    (t as f64).rem_euclid(period)
}

/// Finds the occupied slots from the circular residue histogram (bin width
/// a quarter gate), tracks each centre as a line over time and gates every
/// event to its nearest centre.
pub fn demarcate_slots(
    timestamps: &[u64],
    clock: &ClockEstimate,
    gate_width_ps: f64,
    max_slots: usize,
) -> Result<SlotAssignment> {
    let period = clock.period_ps;
    if !(gate_width_ps > 0.0 && gate_width_ps < period) {
        return Err(param(
            "gate width must be positive and shorter than the period",
        ));
    }
    let residues: Vec<f64> = timestamps.iter().map(|&t| residue(t, period)).collect();
    let centres = find_clusters(&residues, period, gate_width_ps / 4.0, max_slots);
    if centres.is_empty() {
        return Err(Error::Demarcation("no occupied slot found".into()));
    }
    if centres.len() > max_slots {
        return Err(Error::Demarcation(format!(
            "{} clusters exceed the slot capacity {max_slots}",
            centres.len()
        )));
    }
    let half = gate_width_ps / 2.0;
    let nearest = |r: f64, centres: &[f64]| {
        centres
            .iter()
            .enumerate()
            .map(|(i, &c)| (i, circular_diff(r, c, period)))
            .min_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .unwrap()
    };

    let reference =
        timestamps.iter().map(|&t| t as f64).sum::<f64>() / timestamps.len().max(1) as f64;
    let k = centres.len();
    let (mut n, mut sx, mut sy, mut sxx, mut sxy) = (
        vec![0.0f64; k],
        vec![0.0; k],
        vec![0.0; k],
        vec![0.0; k],
        vec![0.0; k],
    );
    for (&t, &r) in timestamps.iter().zip(&residues) {
        let (c, d) = nearest(r, &centres);
        if d.abs() <= half {
            let x = t as f64 - reference;
            n[c] += 1.0;
            sx[c] += x;
            sy[c] += d;
            sxx[c] += x * x;
            sxy[c] += x * d;
        }
    }
    let clusters: Vec<SlotCluster> = (0..k)
        .map(|c| {
            let var = sxx[c] - sx[c] * sx[c] / n[c].max(1.0);
            let drift = if n[c] >= 3.0 && var > 0.0 {
                (sxy[c] - sx[c] * sy[c] / n[c]) / var
            } else {
                0.0
            };
            let mean_d = if n[c] > 0.0 {
                (sy[c] - drift * sx[c]) / n[c]
            } else {
                0.0
            };
            SlotCluster {
                centre_ps: (centres[c] + mean_d).rem_euclid(period),
                drift,
                reference_ps: reference,
                events: 0,
            }
        })
        .collect();

    let mut out = SlotAssignment {
        period_ps: period,
        residues,
        labels: Vec::with_capacity(timestamps.len()),
        clusters,
        gate_width_ps,
    };
    for (&t, &r) in timestamps.iter().zip(&out.residues) {
        let label = out
            .clusters
            .iter()
            .enumerate()
            .map(|(i, c)| (i, circular_diff(r, c.centre_at(t as f64, period), period)))
            .min_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .filter(|(_, d)| d.abs() <= half)
            .map(|(i, _)| i);
        if let Some(i) = label {
            out.clusters[i].events += 1;
        }
        out.labels.push(label);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_separated_slots() {
        let mut ts = Vec::new();
        for k in 0..5000u64 {
            ts.push(k * 20_000 + 3_000 + (k % 7) * 10);
            ts.push(k * 20_000 + 13_000 + (k % 5) * 10);
        }
        ts.push(100_001);
        ts.sort_unstable();
        let a = demarcate_slots(&ts, &ClockEstimate::coarse(20_000.0), 1_000.0, 20).unwrap();
        assert_eq!(a.clusters.len(), 2);
        assert_eq!(a.gated(), 10_000);
        assert!(
            (a.clusters[0].centre_ps - 3_030.0).abs() < 1.0,
            "{:?}",
            a.clusters
        );
        assert_eq!(a.period_index(3_000 + 20_000 * 17, 0), 17);
        assert!(demarcate_slots(&ts, &ClockEstimate::coarse(20_000.0), 1_000.0, 1).is_err());
    }
}
