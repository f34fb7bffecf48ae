use serde::{Deserialize, Serialize};

use super::codec::{compress, validate_bitrate};
use super::noise::{add_noise, white_noise};
use super::pool::Assets;
use super::spec::{ForgerySpec, NoiseKind};
use crate::audio::{convolve, AudioSignal, WORKING_RATE};
use crate::error::{Error, Result};
use crate::features::MAX_DURATION_SECONDS;
use crate::model::vocab::{grid_labels, GRID_STEP};

pub const MIN_DURATION_SECONDS: f64 = 3.0;
/// Five splice points need six sources.
pub const MAX_SOURCES: usize = 6;

/// One manifest line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForgeryRecord {
    pub id: String,
    /// Relative to the manifest's directory.
    pub audio_path: String,
    pub duration_s: f64,
    pub splice_times_s: Vec<f64>,
    pub grid_labels: Vec<f64>,
    pub spec: ForgerySpec,
}

#[derive(Debug, Clone)]
pub struct Rendered {
    pub audio: AudioSignal,
    pub splice_times: Vec<f64>,
    pub grid_labels: Vec<f64>,
}

impl Rendered {
    pub fn duration_seconds(&self) -> f64 {
        self.audio.duration_seconds()
    }
}

/// Applies, in order: per-source room convolution, cutting, concatenation,
/// additive noise and the compression passes. Splice times are the exact
/// segment boundaries.
pub fn render(spec: &ForgerySpec, assets: &Assets) -> Result<Rendered> {
    if spec.source_ids.len() != spec.n_sources || spec.cut_points.len() != spec.n_sources {
        return Err(Error::Contract(format!(
            "spec lists {} sources, {} ids and {} cut pairs",
            spec.n_sources,
            spec.source_ids.len(),
            spec.cut_points.len()
        )));
    }
    if let Some(r) = &spec.rir_ids {
        if r.len() != spec.n_sources {
            return Err(Error::Contract("one room per source required".into()));
        }
    }
    let mut samples = Vec::new();
    let mut boundaries = Vec::with_capacity(spec.n_sources);
    for (i, (id, &(a, b))) in spec.source_ids.iter().zip(&spec.segment_samples()).enumerate() {
        let clip = assets
            .pool
            .clip(id)
            .ok_or_else(|| Error::MissingAsset(format!("source recording {id}")))?;
        let wet;
        let audio = match &spec.rir_ids {
            Some(ids) => {
                let ir = assets
                    .rirs
                    .get(&ids[i])
                    .ok_or_else(|| Error::MissingAsset(format!("room {}", ids[i])))?;
                wet = convolve(&clip.audio, ir)?;
                &wet
            }
            None => &clip.audio,
        };
        if !(a < b && b <= audio.len()) {
            return Err(Error::Contract(format!(
                "cut {a}..{b} outside {id} ({} samples)",
                audio.len()
            )));
        }
        samples.extend_from_slice(&audio.samples[a..b]);
        boundaries.push(samples.len());
    }
    boundaries.pop();
    let mut sig = AudioSignal::new(samples, WORKING_RATE);
    let d = sig.duration_seconds();
    if !(MIN_DURATION_SECONDS..=MAX_DURATION_SECONDS).contains(&d) {
        return Err(Error::Rejected(format!("rendered duration {d:.3} s outside [3, 45]")));
    }

    if let Some(n) = &spec.noise {
        let noise = match n.kind {
            NoiseKind::White => white_noise(sig.len(), WORKING_RATE, spec.seed),
            NoiseKind::FileBacked => {
                let id = n.noise_id.as_deref().unwrap_or_default();
                assets
                    .noises
                    .get(id)
                    .cloned()
                    .ok_or_else(|| Error::MissingAsset(format!("noise file {id}")))?
            }
        };
        sig = add_noise(&sig, &noise, n.snr_db, n.offset)?;
    }
    for c in &spec.compressions {
        sig = compress(&sig, c.codec, c.bitrate_kbps)?;
    }
    sig.prevent_clipping();

    let splice_times: Vec<f64> = boundaries
        .iter()
        .map(|&s| s as f64 / WORKING_RATE as f64)
        .collect();
    Ok(Rendered {
        grid_labels: grid_labels(&splice_times),
        audio: sig,
        splice_times,
    })
}

/// Checks every manifest-level invariant of a record. Returns the first
/// violation as a message.
pub fn check_record(rec: &ForgeryRecord) -> std::result::Result<(), String> {
    let s = &rec.spec;
    if !(1..=MAX_SOURCES).contains(&s.n_sources) {
        return Err(format!("{} sources", s.n_sources));
    }
    if rec.splice_times_s.len() != s.n_sources - 1 {
        return Err(format!(
            "{} splice times for {} sources",
            rec.splice_times_s.len(),
            s.n_sources
        ));
    }
    if !(MIN_DURATION_SECONDS..=MAX_DURATION_SECONDS).contains(&rec.duration_s) {
        return Err(format!("duration {}", rec.duration_s));
    }
    let t = &rec.splice_times_s;
    if t.iter().any(|&x| !(x > 0.0 && x < rec.duration_s)) || t.windows(2).any(|w| w[0] >= w[1]) {
        return Err(format!("splice times {t:?} not strictly inside (0, {})", rec.duration_s));
    }
    if rec.grid_labels != grid_labels(t) {
        return Err(format!("grid labels {:?} disagree with times {t:?}", rec.grid_labels));
    }
    if rec
        .grid_labels
        .iter()
        .any(|&g| !(GRID_STEP..=44.5).contains(&g) || (g / GRID_STEP).fract() != 0.0)
    {
        return Err(format!("grid label outside vocabulary: {:?}", rec.grid_labels));
    }
    if s.compressions.len() > 5 {
        return Err(format!("{} compression passes", s.compressions.len()));
    }
    for c in &s.compressions {
        validate_bitrate(c.codec, c.bitrate_kbps).map_err(|e| e.to_string())?;
    }
    if let Some(n) = &s.noise {
        if !(-10.0..=50.0).contains(&n.snr_db) {
            return Err(format!("SNR {}", n.snr_db));
        }
    }
    if let Some(&(a, b)) = s.cut_points.iter().find(|(a, b)| a >= b) {
        return Err(format!("cut pair ({a}, {b}) not ordered"));
    }
    Ok(())
}
