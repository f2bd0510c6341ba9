use std::fs::File;
use std::io::{BufReader, Write};
use std::path::Path;

use qan_core::capacity::{jitter_qber, max_jitter, sweep, JitterSpec};
use qan_core::channel::*;
use qan_core::keyrate::{read_tally_csv, secure_key_rate, write_tally_csv, KeyRateInputs, KeyRateResult};
use qan_core::pipeline::{identify_record, run_pipeline};
use qan_core::protocol::io::{read_sync_text_all, write_sync_text};
use qan_core::protocol::SyncString;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::{self, Loaded};
use crate::output::{write_atomic, Format, Manifest, Table};
use crate::{Common, Failure};

fn load(c: &Common) -> Result<Loaded, Failure> {
    match &c.config {
        Some(p) => config::load(p),
        None => Ok(Loaded::none()),
    }
}

fn seed(c: &Common, l: &Loaded) -> Result<u64, Failure> {
    c.seed
        .or(l.config.seed)
        .ok_or_else(|| Failure::Config("no seed: set `seed` in the scenario or pass --seed".into()))
}

fn manifest(l: &Loaded, seed: Option<u64>) -> Manifest {
    Manifest {
        scenario: l.config.name.clone(),
        config_sha256: l.sha256.clone(),
        seed,
    }
}

fn format(c: &Common) -> Format {
    c.format.unwrap_or(Format::Csv)
}

fn emit(c: &Common, table: &Table, m: &Manifest) -> Result<(), Failure> {
    let text = table.render(format(c), m);
    match &c.out {
        Some(p) => write_atomic(p, text.as_bytes())?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn transmitters(l: &Loaded) -> Result<&[TransmitterConfig], Failure> {
    if l.config.transmitters.is_empty() {
        return Err(Failure::Config("scenario has no [[transmitter]] tables".into()));
    }
    Ok(&l.config.transmitters)
}

pub fn simulate(c: &Common) -> Result<(), Failure> {
    let l = load(c)?;
    let seed = seed(c, &l)?;
    let txs = transmitters(&l)?;
    let rx = &l.config.receiver;
    let dir = c
        .out
        .as_deref()
        .ok_or_else(|| Failure::Config("simulate needs --out <directory>".into()))?;
    let duration = l.config.duration_s;
    if !(duration >= 0.0) {
        return Err(Failure::Config("duration_s must be non-negative".into()));
    }
    let (rec, truth) = if duration > 0.0 {
        simulate_transmission(txs, rx, duration, seed)?
    } else {
        ChannelSimulator::new(txs, rx, seed)?;
        (EventRecord::new(rx.period_ps.round() as u64), GroundTruth::default())
    };
    std::fs::create_dir_all(dir)?;

    let mut files: Vec<(&str, Vec<u8>)> = Vec::new();
    let mut buf = Vec::new();
    write_events_binary(&mut buf, &rec)?;
    files.push(("events.bin", buf));
    let mut buf = Vec::new();
    write_ground_truth(&mut buf, &truth)?;
    files.push(("truth.bin", buf));
    let mut buf = Vec::new();
    for tx in txs {
        write_sync_text(&mut buf, pulse_stream(tx)?.sync())?;
    }
    files.push(("codes.txt", buf));
    if c.format == Some(Format::Csv) {
        let mut buf = Vec::new();
        write_events_csv(&mut buf, &rec)?;
        files.push(("events.csv", buf));
    }
    let m = manifest(&l, Some(seed));
    let mut listing = format!("{}\nevents {}\n", m.line(), rec.len());
    for (name, bytes) in &files {
        write_atomic(&dir.join(name), bytes)?;
        listing.push_str(&format!("{}  {name}\n", hex::encode(Sha256::digest(bytes))));
    }
    write_atomic(&dir.join("manifest.txt"), listing.as_bytes())?;
    Ok(())
}

fn read_events(path: &Path) -> Result<EventRecord, Failure> {
    let file = File::open(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    let mut r = BufReader::new(file);
    let rec = if path.extension().is_some_and(|e| e == "csv") {
        read_events_csv(&mut r)
    } else {
        read_events_binary(&mut r)
    };
    rec.map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

pub fn sync(c: &Common, events: &Path, codes: Option<&Path>) -> Result<(), Failure> {
    let l = load(c)?;
    let txs = transmitters(&l)?;
    let rec = read_events(events)?;
    let codes: Vec<SyncString> = match codes {
        Some(p) => {
            let f = File::open(p).map_err(|e| Failure::Config(format!("{}: {e}", p.display())))?;
            read_sync_text_all(&mut BufReader::new(f))?
        }
        None => txs
            .iter()
            .map(|t| pulse_stream(t).map(|s| s.sync().clone()))
            .collect::<Result<_, _>>()?,
    };
    let spec = txs[0].frame_spec()?;
    let rx = ReceiverConfig {
        period_ps: rec.period_ps as f64,
        ..l.config.receiver.clone()
    };
    let report = identify_record(&rec, &codes, spec, &rx, &l.config.pipeline.options())?;
    let spacing = rx.slot_spacing_ps();
    let mut t = Table::new(&[
        "slot",
        "tdm_slot",
        "residue_ps",
        "transmitter",
        "offset_symbols",
        "frame_start_ps",
        "snr",
        "peak",
        "nonzero",
    ]);
    for e in &report.entries {
        t.push(vec![
            json!(e.slot),
            json!(((e.residue_ps / spacing).round() as i64).rem_euclid(rx.slots as i64)),
            json!(e.residue_ps),
            json!(e.transmitter),
            json!(e.offset_symbols),
            json!(e.frame_start_ps),
            json!(e.snr),
            json!(e.peak),
            json!(e.nonzero),
        ]);
    }
    emit(c, &t, &manifest(&l, None))
}

const KEY_COLUMNS: [&str; 10] = [
    "transmitter",
    "n_z",
    "e_z",
    "s0_lower",
    "s1_lower",
    "phase_error",
    "lambda_ec",
    "security_bits",
    "length_bits",
    "R_bps",
];

fn key_row(id: Value, k: &KeyRateResult) -> Vec<Value> {
    vec![
        id,
        json!(k.n_z),
        json!(k.e_z),
        json!(k.s0_lower),
        json!(k.s1_lower),
        json!(k.phase_error),
        json!(k.lambda_ec),
        json!(k.security_bits),
        json!(k.length_bits),
        json!(k.rate_bps),
    ]
}

pub fn keyrate(c: &Common, tally: Option<&Path>, export: Option<&Path>) -> Result<(), Failure> {
    let l = load(c)?;
    let mut t = Table::new(&KEY_COLUMNS);
    let mut zero = Vec::new();
    let seed = match tally {
        Some(path) => {
            let f = File::open(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
            let tally = read_tally_csv(&mut BufReader::new(f))
                .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
            let k = &l.config.keyrate;
            let r = secure_key_rate(&KeyRateInputs {
                tally,
                mu: k.mu,
                nu: k.nu,
                p_mu: k.p_mu,
                p_nu: 1.0 - k.p_mu,
                eps_sec: k.eps_sec,
                eps_cor: k.eps_cor,
                f_e: k.f_e,
                frequency_hz: k.frequency_hz,
                total_pulses: k.total_pulses,
                q: k.q,
                budget: k.budget,
            })?;
            if let Some(p) = export {
                let mut buf = Vec::new();
                write_tally_csv(&mut buf, &tally)?;
                write_atomic(p, &buf)?;
            }
            if r.rate_bps == 0.0 {
                zero.push("tally".to_string());
            }
            t.push(key_row(Value::Null, &r));
            None
        }
        None => {
            let seed = seed(c, &l)?;
            let txs = transmitters(&l)?;
            let out = run_pipeline(txs, &l.config.receiver, seed, &l.config.pipeline.options())?;
            if let Some(dir) = export {
                std::fs::create_dir_all(dir)?;
            }
            for u in &out.users {
                let Some(k) = &u.key else {
                    return Err(Failure::Identification(format!(
                        "transmitter {} was never identified",
                        u.transmitter
                    )));
                };
                if let Some(dir) = export {
                    let mut buf = Vec::new();
                    write_tally_csv(&mut buf, &u.tally)?;
                    write_atomic(&dir.join(format!("tally_{}.csv", u.transmitter)), &buf)?;
                }
                if k.rate_bps == 0.0 {
                    zero.push(format!("transmitter {}", u.transmitter));
                }
                t.push(key_row(json!(u.transmitter), k));
            }
            Some(seed)
        }
    };
    emit(c, &t, &manifest(&l, seed))?;
    if zero.is_empty() {
        Ok(())
    } else {
        Err(Failure::ZeroRate(zero.join(", ")))
    }
}

pub fn capacity(c: &Common) -> Result<(), Failure> {
    let l = load(c)?;
    let s = l.section(&l.config.capacity, "capacity")?;
    let points = sweep(&s.model, &s.users, &s.distances_km)?;
    let mut t = Table::new(&["n_users", "distance_km", "total_loss_db", "e_z", "R_bps"]);
    for p in &points {
        t.push(vec![
            json!(p.n_users),
            json!(p.distance_km),
            json!(p.total_loss_db),
            json!(p.e_z),
            json!(p.rate_bps),
        ]);
    }
    emit(c, &t, &manifest(&l, None))
}

pub fn jitter(
    c: &Common,
    frequency_hz: Option<f64>,
    e_max: Option<f64>,
    fwhm_ps: Option<f64>,
) -> Result<(), Failure> {
    let l = load(c)?;
    let section = l.config.jitter.as_ref();
    let frequency_hz = frequency_hz
        .or(section.map(|s| s.frequency_hz))
        .ok_or_else(|| Failure::Config("need --frequency-hz or a [jitter] section".into()))?;
    // Flags replace the whole direction chosen in the scenario.
    let (e_max, fwhm_ps) = if e_max.is_some() || fwhm_ps.is_some() {
        (e_max, fwhm_ps)
    } else {
        (section.and_then(|s| s.e_max), section.and_then(|s| s.fwhm_ps))
    };
    let reference = section.and_then(|s| s.reference_fwhm_ps);
    if !(frequency_hz > 0.0) {
        return Err(Failure::Config("frequency must be positive".into()));
    }
    let fwhm_s = match (e_max, fwhm_ps) {
        (Some(e), None) => max_jitter(frequency_hz, e)?,
        (None, Some(t)) if t >= 0.0 => t * 1e-12,
        (None, Some(_)) => return Err(Failure::Config("FWHM must be non-negative".into())),
        _ => return Err(Failure::Config("give exactly one of e_max and fwhm_ps".into())),
    };
    let spec = JitterSpec {
        frequency_hz,
        fwhm_s,
    };
    let mut t = Table::new(&[
        "frequency_hz",
        "fwhm_ps",
        "sigma_ps",
        "qber",
        "reference_fwhm_ps",
        "delta_to_reference_ps",
    ]);
    let fwhm = fwhm_s * 1e12;
    t.push(vec![
        json!(frequency_hz),
        json!(fwhm),
        json!(spec.sigma_s() * 1e12),
        json!(jitter_qber(&spec)),
        json!(reference),
        json!(reference.map(|r| fwhm - r)),
    ]);
    emit(c, &t, &manifest(&l, None))
}

pub fn crosstalk(c: &Common) -> Result<(), Failure> {
    let l = load(c)?;
    let seed = seed(c, &l)?;
    let s = l.section(&l.config.crosstalk, "crosstalk")?;
    if s.repeats == 0 {
        return Err(Failure::Config("crosstalk.repeats must be at least 1".into()));
    }
    let base = l.config.receiver.clone();
    let spacing = base.slot_spacing_ps();
    let cal = match (s.earlier, s.later) {
        (Some(e), Some(la)) => calibrate_crosstalk(e, la, spacing, base.gate_width_ps)?,
        (None, None) => CrosstalkCalibration {
            jitter_ps: base.jitter_ps,
            gate_offset_ps: 0.0,
        },
        _ => return Err(Failure::Config("give both crosstalk.earlier and crosstalk.later, or neither".into())),
    };
    let rx = ReceiverConfig {
        jitter_ps: cal.jitter_ps,
        ..base
    };
    let mut victim = match l.config.transmitters.first() {
        Some(t) => t.clone(),
        None => TransmitterConfig::new(1, s.victim_slot),
    };
    victim.slot = s.victim_slot;
    let seeds: Vec<u64> = (0..s.repeats).map(|i| seed.wrapping_add(i)).collect();
    let points = measure_crosstalk(&victim, &rx, cal.gate_offset_ps, &s.offsets, s.duration_s, &seeds)?;
    let mut t = Table::new(&[
        "offset",
        "relative_increase",
        "std_error",
        "expected",
        "jitter_ps",
        "gate_offset_ps",
    ]);
    let n = (seeds.len() as f64).sqrt();
    for p in &points {
        t.push(vec![
            json!(p.offset),
            json!(p.mean),
            json!(p.std / n),
            json!(cal.relative_increase(p.offset, spacing, rx.gate_width_ps)),
            json!(cal.jitter_ps),
            json!(cal.gate_offset_ps),
        ]);
    }
    emit(c, &t, &manifest(&l, Some(seed)))
}
