use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::codec::Codec;
use super::pool::Assets;
use super::scenario::{NoiseMode, ScenarioConfig};
use crate::audio::WORKING_RATE;
use crate::error::{Error, Result};

/// Attempts per sample before it is skipped and reported.
pub const MAX_ATTEMPTS: usize = 100;
/// Shortest segment taken from one source, seconds. Keeps every splice at
/// least one label-grid step away from the sample edges and from each other.
pub const MIN_SEGMENT_SECONDS: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseKind {
    White,
    FileBacked,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub snr_db: f64,
    pub noise_id: Option<String>,
    /// Start sample within a file-backed noise.
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompressionSpec {
    pub codec: Codec,
    pub bitrate_kbps: f64,
}

/// Every random choice behind one forgery; rendering is a pure function of
/// this and the assets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForgerySpec {
    pub n_sources: usize,
    pub speaker: String,
    pub source_ids: Vec<String>,
    pub rir_ids: Option<Vec<String>>,
    /// Per-source `(start, end)` in seconds, on the sample grid.
    pub cut_points: Vec<(f64, f64)>,
    pub noise: Option<NoiseSpec>,
    pub compressions: Vec<CompressionSpec>,
    pub seed: u64,
}

impl ForgerySpec {
    pub fn segment_samples(&self) -> Vec<(usize, usize)> {
        self.cut_points
            .iter()
            .map(|&(a, b)| (to_sample(a), to_sample(b)))
            .collect()
    }

    pub fn duration_seconds(&self) -> f64 {
        let n: usize = self.segment_samples().iter().map(|(a, b)| b - a).sum();
        n as f64 / WORKING_RATE as f64
    }
}

pub(crate) fn to_sample(t: f64) -> usize {
    (t * WORKING_RATE as f64).round() as usize
}

fn on_grid(t: f64) -> f64 {
    to_sample(t) as f64 / WORKING_RATE as f64
}

/// Independent stream for record `index` under `master_seed`.
pub fn record_rng(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

/// Draws the spec for sample `index`. The splice count is drawn once; the
/// rest is redrawn until the scenario constraints hold, at most
/// [`MAX_ATTEMPTS`] times.
pub fn sample_spec(
    assets: &Assets,
    scenario: &ScenarioConfig,
    master_seed: u64,
    index: u64,
) -> Result<ForgerySpec> {
    if assets.pool.is_empty() {
        return Err(Error::MissingAsset("speaker pool is empty".into()));
    }
    if scenario.rir && assets.rirs.is_empty() {
        return Err(Error::MissingAsset("scenario needs rooms but none are loaded".into()));
    }
    if let NoiseMode::File { name, .. } = &scenario.noise {
        if !assets.noises.contains_key(name) {
            return Err(Error::MissingAsset(format!("noise file {name:?} not found in pool")));
        }
    }
    let mut rng = record_rng(master_seed, index);
    let n_sources = scenario.splices.draw(&mut rng, index) + 1;
    let mut last = String::new();
    for _ in 0..MAX_ATTEMPTS {
        match attempt(assets, scenario, n_sources, &mut rng) {
            Ok(spec) => return Ok(spec),
            Err(reason) => last = reason,
        }
    }
    Err(Error::Rejected(format!(
        "sample {index}: no valid spec after {MAX_ATTEMPTS} attempts ({last})"
    )))
}

fn attempt(
    assets: &Assets,
    scenario: &ScenarioConfig,
    n_sources: usize,
    rng: &mut ChaCha8Rng,
) -> std::result::Result<ForgerySpec, String> {
    let speakers: Vec<&String> = assets.pool.speakers().collect();
    let speaker = speakers[rng.gen_range(0..speakers.len())].clone();
    let clips = &assets.pool.entries[&speaker];
    let source_ids: Vec<String> = if scenario.same_recording {
        vec![clips.choose(rng).expect("speaker has clips").clone(); n_sources]
    } else {
        (0..n_sources)
            .map(|_| clips.choose(rng).expect("speaker has clips").clone())
            .collect()
    };
    let mut cut_points = Vec::with_capacity(n_sources);
    for id in &source_ids {
        let clip = assets.pool.clip(id).expect("pool entries resolve");
        let cands = clip.cut_candidates();
        if cands.len() < 2 {
            return Err(format!("{id} has fewer than two silent intervals"));
        }
        let i = rng.gen_range(0..cands.len());
        let mut j = rng.gen_range(0..cands.len() - 1);
        if j >= i {
            j += 1;
        }
        let (a, b) = (on_grid(cands[i.min(j)]), on_grid(cands[i.max(j)]));
        if b - a < MIN_SEGMENT_SECONDS {
            return Err(format!("segment of {id} shorter than {MIN_SEGMENT_SECONDS} s"));
        }
        cut_points.push((a, b));
    }
    let rir_ids = scenario.rir.then(|| {
        let ids: Vec<&String> = assets.rirs.keys().collect();
        (0..n_sources)
            .map(|_| ids[rng.gen_range(0..ids.len())].clone())
            .collect()
    });
    let noise = match &scenario.noise {
        NoiseMode::None => None,
        NoiseMode::White { snr_db } => Some(NoiseSpec {
            kind: NoiseKind::White,
            snr_db: draw_range(rng, *snr_db),
            noise_id: None,
            offset: 0,
        }),
        NoiseMode::File { name, snr_db } => {
            let len = assets.noises[name].len().max(1);
            Some(NoiseSpec {
                kind: NoiseKind::FileBacked,
                snr_db: draw_range(rng, *snr_db),
                noise_id: Some(name.clone()),
                offset: rng.gen_range(0..len),
            })
        }
    };
    let compressions = (0..scenario.compression.runs)
        .map(|_| {
            let (codec, bitrate_kbps) = scenario.draw_compression(rng);
            CompressionSpec { codec, bitrate_kbps }
        })
        .collect();
    let spec = ForgerySpec {
        n_sources,
        speaker,
        source_ids,
        rir_ids,
        cut_points,
        noise,
        compressions,
        seed: rng.gen(),
    };
    let d = spec.duration_seconds();
    let [lo, hi] = scenario.duration;
    if d < lo || d > hi {
        return Err(format!("duration {d:.2} s outside [{lo}, {hi}]"));
    }
    Ok(spec)
}

fn draw_range(rng: &mut ChaCha8Rng, [lo, hi]: [f64; 2]) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..=hi)
    }
}
