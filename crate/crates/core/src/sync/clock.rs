use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};

/// Recovered receiver clock.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClockEstimate {
    /// FFT estimate `tau_0`.
    pub coarse_period_ps: f64,
    /// Refined period `tau_R`.
    pub period_ps: f64,
    /// Jitter estimate from the interval errors, in ps^2.
    pub interval_error_var_ps2: f64,
    /// RMS of the reweighted inlier residuals.
    pub residual_rms_ps: f64,
    /// Fraction of events kept as inliers.
    pub inlier_fraction: f64,
    pub iterations: usize,
}

impl ClockEstimate {
    /// Unrefined estimate wrapping a known period.
    pub fn coarse(period_ps: f64) -> Self {
        ClockEstimate {
            coarse_period_ps: period_ps,
            period_ps,
            interval_error_var_ps2: f64::NAN,
            residual_rms_ps: f64::NAN,
            inlier_fraction: f64::NAN,
            iterations: 0,
        }
    }
}

pub const DEFAULT_FFT_SAMPLES: usize = 1_000_000;

/// Coarse clock from the spectrum of the binned arrival train. Timestamps
/// are binned at a pitch of a quarter of `nominal_period_ps` over
/// `samples` bins from the first event. Strong spectral lines within 1% of
/// the nominal frequency are candidates (harmonics of a multi-slot comb
/// alias into that band); the one at which the arrivals fold most sharply
/// is returned as a period.
pub fn estimate_clock_fft(
    timestamps: &[u64],
    nominal_period_ps: f64,
    samples: usize,
) -> Result<f64> {
    if !(nominal_period_ps > 0.0) || samples < 64 {
        return Err(param(
            "need a positive nominal period and at least 64 samples",
        ));
    }
    if timestamps.len() < 1000 {
        return Err(Error::ClockNotFound(format!(
            "only {} events, need 1000",
            timestamps.len()
        )));
    }
    let pitch = nominal_period_ps / 4.0;
    let first = timestamps[0];
    let mut buf = vec![Complex::new(0.0f64, 0.0); samples];
    for &t in timestamps {
        let bin = ((t - first) as f64 / pitch) as usize;
        if bin >= samples {
            break;
        }
        buf[bin].re += 1.0;
    }
    FftPlanner::new()
        .plan_fft_forward(samples)
        .process(&mut buf);
    let half = samples / 2;
    let mag: Vec<f64> = buf[..=half].iter().map(|c| c.norm()).collect();

    let mut sorted = mag[1..].to_vec();
    let mid = sorted.len() / 2;
    let median = *sorted.select_nth_unstable_by(mid, |a, b| a.total_cmp(b)).1;

    let nominal_bin = samples as f64 / 4.0;
    let lo = ((nominal_bin * 0.99).floor() as usize).max(2);
    let hi = ((nominal_bin * 1.01).ceil() as usize).min(half - 1);
    let band_max = mag[lo..=hi].iter().cloned().fold(0.0, f64::max);
    let mut candidates: Vec<usize> = (lo..=hi)
        .filter(|&k| mag[k] >= mag[k - 1] && mag[k] >= mag[k + 1] && mag[k] >= 0.2 * band_max)
        .collect();
    candidates.sort_by(|&a, &b| mag[b].total_cmp(&mag[a]));
    candidates.truncate(8);
    let span = samples as f64 * pitch;
    let used = timestamps.partition_point(|&t| ((t - first) as f64) < span);
    let best = candidates
        .into_iter()
        .map(|k| {
            let fine = interpolate_peak(&mag, k);
            (k, fold_sharpness(&timestamps[..used], first, span / fine))
        })
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(k, _)| k)
        .ok_or_else(|| {
            Error::ClockNotFound("no spectral line near the nominal frequency".into())
        })?;
    if mag[best] < 5.0 * median {
        return Err(Error::ClockNotFound(format!(
            "peak {:.1} below 5x median spectral magnitude {:.1}",
            mag[best], median
        )));
    }
    Ok(samples as f64 * pitch / best as f64)
}

/// Sub-bin peak position from a parabola through the log magnitudes.
fn interpolate_peak(mag: &[f64], k: usize) -> f64 {
    let (a, b, c) = (
        mag[k - 1].max(1e-300).ln(),
        mag[k].max(1e-300).ln(),
        mag[k + 1].max(1e-300).ln(),
    );
    let den = a - 2.0 * b + c;
    if den < 0.0 {
        k as f64 + (0.5 * (a - c) / den).clamp(-0.5, 0.5)
    } else {
        k as f64
    }
}

/// How sharply arrivals fold at `period`: sum of squared histogram
/// fractions over 64 phase bins (1/64 for a uniform fold, 1 for a comb).
fn fold_sharpness(timestamps: &[u64], first: u64, period: f64) -> f64 {
    const BINS: usize = 64;
    let mut hist = [0u64; BINS];
    for &t in timestamps {
        let phase = ((t - first) as f64 / period).fract();
        hist[((phase * BINS as f64) as usize).min(BINS - 1)] += 1;
    }
    let n = timestamps.len().max(1) as f64;
    hist.iter().map(|&h| (h as f64 / n).powi(2)).sum()
}

/// Tuning of the trimmed least-squares refinement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LtsOptions {
    /// Fraction of the largest residuals dropped at every step.
    pub trim: f64,
    /// Relative change of the retained mean square that counts as converged.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Relative accuracy of the coarse period; bounds the first fit window.
    pub coarse_accuracy: f64,
    /// Window `D` of the interval-error statistic.
    pub interval_window: usize,
    /// Histogram resolution used to find arrival clusters, as a fraction of the period.
    pub cluster_bin_fraction: f64,
}

impl Default for LtsOptions {
    fn default() -> Self {
        LtsOptions {
            trim: 0.2,
            tolerance: 0.01,
            max_iterations: 50,
            coarse_accuracy: 4.0 / DEFAULT_FFT_SAMPLES as f64,
            interval_window: 10,
            cluster_bin_fraction: 1.0 / 80.0,
        }
    }
}

/// Multi-cluster linear model `t = a_c + n * tau`, with `n` counted from
/// the first timestamp.
struct Fit {
    period: f64,
    intercepts: Vec<f64>,
}

impl Fit {
    /// Nearest cluster, period index and residual of an arrival.
    #[inline]
    fn locate(&self, t: f64) -> (usize, f64, f64) {
        let mut best = (0, 0.0, f64::INFINITY);
        for (c, &a) in self.intercepts.iter().enumerate() {
            let n = ((t - a) / self.period).round();
            let r = t - a - n * self.period;
            if r.abs() < best.2.abs() {
                best = (c, n, r);
            }
        }
        best
    }
}

/// Cluster centres of circular residues, as histogram peaks that stand
/// clearly above the background.
pub(crate) fn find_clusters(
    residues: &[f64],
    period: f64,
    bin_width: f64,
    max_clusters: usize,
) -> Vec<f64> {
    let bins = ((period / bin_width).round() as usize).max(4);
    let width = period / bins as f64;
    let mut hist = vec![0usize; bins];
    for &r in residues {
        hist[((r / width) as usize).min(bins - 1)] += 1;
    }
    let mut sorted = hist.clone();
    sorted.sort_unstable();
    let background = sorted[bins / 10] as f64;
    let max = *sorted.last().unwrap() as f64;
    let threshold = (background + 5.0 * (background + 1.0).sqrt())
        .max(0.01 * max)
        .max(3.0);
    let at = |i: isize| hist[i.rem_euclid(bins as isize) as usize];
    let mut peaks: Vec<usize> = (0..bins as isize)
        .filter(|&i| {
            let h = at(i);
            h as f64 >= threshold && (1..=2).all(|d| h > at(i - d) && h >= at(i + d))
        })
        .map(|i| i as usize)
        .collect();
    peaks.sort_by_key(|&i| std::cmp::Reverse(hist[i]));
    peaks.truncate(max_clusters.max(1).saturating_mul(4));

    let mut centres: Vec<f64> = Vec::new();
    for p in peaks {
        let centre = (p as f64 + 0.5) * width;
        let (mut s, mut c) = (0.0, 0.0);
        for &r in residues {
            let d = circular_diff(r, centre, period);
            if d.abs() <= 1.5 * width {
                let phase = std::f64::consts::TAU * r / period;
                s += phase.sin();
                c += phase.cos();
            }
        }
        let refined = (s.atan2(c) / std::f64::consts::TAU * period).rem_euclid(period);
        if centres
            .iter()
            .all(|&o| circular_diff(refined, o, period).abs() > 2.0 * width)
        {
            centres.push(refined);
        }
    }
    centres.sort_by(f64::total_cmp);
    centres
}

/// `a - b` wrapped into `[-period/2, period/2)`.
#[inline]
pub(crate) fn circular_diff(a: f64, b: f64, period: f64) -> f64 {
    (a - b + period / 2.0).rem_euclid(period) - period / 2.0
}

struct Sample {
    t: f64,
    cluster: usize,
    n: f64,
    residual: f64,
}

fn assign(samples: &mut [Sample], fit: &Fit) {
    for s in samples.iter_mut() {
        let (c, n, r) = fit.locate(s.t);
        s.cluster = c;
        s.n = n;
        s.residual = r;
    }
}

/// Common-slope least squares over the retained samples.
fn refit(samples: &[Sample], keep: &[bool], fit: &Fit) -> Fit {
    let k = fit.intercepts.len();
    let mut cnt = vec![0.0; k];
    let mut sn = vec![0.0; k];
    let mut st = vec![0.0; k];
    for (s, _) in samples.iter().zip(keep).filter(|(_, &k)| k) {
        cnt[s.cluster] += 1.0;
        sn[s.cluster] += s.n;
        st[s.cluster] += s.t;
    }
    let mean_n: Vec<f64> = (0..k)
        .map(|c| if cnt[c] > 0.0 { sn[c] / cnt[c] } else { 0.0 })
        .collect();
    let mean_t: Vec<f64> = (0..k)
        .map(|c| if cnt[c] > 0.0 { st[c] / cnt[c] } else { 0.0 })
        .collect();
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (s, _) in samples.iter().zip(keep).filter(|(_, &k)| k) {
        let dn = s.n - mean_n[s.cluster];
        sxy += dn * (s.t - mean_t[s.cluster]);
        sxx += dn * dn;
    }
    let period = if sxx > 0.0 { sxy / sxx } else { fit.period };
    let intercepts = (0..k)
        .map(|c| {
            if cnt[c] > 0.0 {
                mean_t[c] - period * mean_n[c]
            } else {
                fit.intercepts[c]
            }
        })
        .collect();
    Fit { period, intercepts }
}

/// Marks the `1 - trim` fraction with the smallest residuals and returns
/// their mean square.
fn trim_mask(samples: &[Sample], trim: f64, keep: &mut Vec<bool>) -> f64 {
    let mut abs: Vec<f64> = samples.iter().map(|s| s.residual.abs()).collect();
    let retain = ((samples.len() as f64 * (1.0 - trim)).ceil() as usize).clamp(1, samples.len());
    let cut = *abs
        .select_nth_unstable_by(retain - 1, |a, b| a.total_cmp(b))
        .1;
    keep.clear();
    let mut taken = 0;
    let mut ms = 0.0;
    for s in samples {
        let k = s.residual.abs() <= cut && taken < retain;
        if k {
            taken += 1;
            ms += s.residual * s.residual;
        }
        keep.push(k);
    }
    ms / taken as f64
}

/// Mean squares this small are roundoff; timestamps are whole picoseconds.
const MS_FLOOR_PS2: f64 = 1e-6;

/// Concentration steps until the retained mean square settles.
fn c_steps(
    samples: &mut [Sample],
    fit: Fit,
    opts: &LtsOptions,
    used: &mut usize,
) -> Result<(Fit, f64)> {
    let mut fit = fit;
    let mut keep = Vec::with_capacity(samples.len());
    assign(samples, &fit);
    let mut ms = trim_mask(samples, opts.trim, &mut keep);
    for _ in 0..opts.max_iterations {
        *used += 1;
        fit = refit(samples, &keep, &fit);
        assign(samples, &fit);
        let next = trim_mask(samples, opts.trim, &mut keep);
        let settled = (next - ms).abs() <= opts.tolerance * ms.max(MS_FLOOR_PS2);
        ms = next;
        if settled {
            return Ok((fit, ms));
        }
    }
    Err(Error::Refinement {
        iterations: *used,
        last: Box::new(ClockEstimate {
            coarse_period_ps: f64::NAN,
            period_ps: fit.period,
            interval_error_var_ps2: f64::NAN,
            residual_rms_ps: ms.sqrt(),
            inlier_fraction: 1.0 - opts.trim,
            iterations: *used,
        }),
    })
}

/// Normal consistency factor of the RMS of the central `keep` fraction.
fn trimmed_rms_factor(keep: f64) -> f64 {
    use statrs::distribution::{ContinuousCDF, Normal};
    let n = Normal::new(0.0, 1.0).unwrap();
    let q = n.inverse_cdf(0.5 + keep / 2.0);
    let pdf = (-q * q / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
    (1.0 - 2.0 * q * pdf / keep).sqrt()
}

/// Refines a coarse period by least trimmed squares against an arithmetic
/// progression per arrival cluster. The fit window starts short enough that
/// the coarse error cannot wrap a residue and grows fourfold until it
/// covers all events.
pub fn refine_clock_lts(
    timestamps: &[u64],
    coarse_period_ps: f64,
    opts: &LtsOptions,
) -> Result<ClockEstimate> {
    if timestamps.len() < 16 {
        return Err(param("too few events to refine the clock"));
    }
    if !(0.0..0.5).contains(&opts.trim) || opts.interval_window < 2 {
        return Err(param(
            "trim must be in [0, 0.5) and the interval window at least 2",
        ));
    }
    let origin = timestamps[0];
    let rel = |t: u64| (t - origin) as f64;
    let span = rel(*timestamps.last().unwrap());
    let tau0 = coarse_period_ps;

    let mut window = (tau0 / 64.0 / (opts.coarse_accuracy * tau0)).max(1.0) * tau0;
    let min_events = 64.min(timestamps.len());
    window = window.max(rel(timestamps[min_events - 1]));

    let end = timestamps.partition_point(|&t| rel(t) <= window);
    let residues: Vec<f64> = timestamps[..end]
        .iter()
        .map(|&t| rel(t).rem_euclid(tau0))
        .collect();
    let centres = find_clusters(
        &residues,
        tau0,
        tau0 * opts.cluster_bin_fraction,
        usize::MAX,
    );
    if centres.is_empty() {
        return Err(Error::ClockNotFound(
            "no arrival cluster in the first fit window".into(),
        ));
    }
    let mut fit = Fit {
        period: tau0,
        intercepts: centres,
    };
    let mut used = 0;
    let mut ms;
    loop {
        let end = timestamps.partition_point(|&t| rel(t) <= window);
        let mut samples: Vec<Sample> = timestamps[..end]
            .iter()
            .map(|&t| Sample {
                t: rel(t),
                cluster: 0,
                n: 0.0,
                residual: 0.0,
            })
            .collect();
        let (f, m) = c_steps(&mut samples, fit, opts, &mut used)?;
        fit = f;
        ms = m;
        if window >= span {
            let est = finish(&samples, &fit, ms, tau0, used, opts);
            return Ok(est);
        }
        window *= 4.0;
    }
}

fn finish(
    samples: &[Sample],
    fit: &Fit,
    ms: f64,
    tau0: f64,
    used: usize,
    opts: &LtsOptions,
) -> ClockEstimate {
    let scale = ms.sqrt() / trimmed_rms_factor(1.0 - opts.trim);
    let cut = 3.0 * scale;
    let inliers: Vec<&Sample> = samples.iter().filter(|s| s.residual.abs() <= cut).collect();
    let rms = if inliers.is_empty() {
        0.0
    } else {
        (inliers.iter().map(|s| s.residual * s.residual).sum::<f64>() / inliers.len() as f64).sqrt()
            / trimmed_rms_factor(0.997_300_203_936_74)
    };

    let mut per_cluster: Vec<Vec<f64>> = vec![Vec::new(); fit.intercepts.len()];
    for s in &inliers {
        per_cluster[s.cluster].push(s.residual);
    }
    let mut series = Vec::new();
    for eps in per_cluster {
        series.extend(interval_error_terms(&eps, opts.interval_window));
    }
    let var = if series.is_empty() {
        f64::NAN
    } else {
        series.iter().sum::<f64>() / series.len() as f64
    };
    ClockEstimate {
        coarse_period_ps: tau0,
        period_ps: fit.period,
        interval_error_var_ps2: var,
        residual_rms_ps: rms,
        inlier_fraction: inliers.len() as f64 / samples.len() as f64,
        iterations: used,
    }
}

/// Per-event interval statistic `(1/2D) sum_{b=1..D} |eps_{a+b} - eps_a|^2`,
/// which estimates the jitter variance.
pub fn interval_error_terms(eps: &[f64], window: usize) -> Vec<f64> {
    if eps.len() <= window {
        return Vec::new();
    }
    (0..eps.len() - window)
        .map(|a| {
            (1..=window)
                .map(|b| (eps[a + b] - eps[a]).powi(2))
                .sum::<f64>()
                / (2 * window) as f64
        })
        .collect()
}
