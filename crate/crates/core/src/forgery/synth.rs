//! Synthetic speech-like recordings for tests, demos and smoke training.
//!
//! Each speaker has a fundamental-frequency range; each recording adds its
//! own channel: background noise with a random colour, an optional mains hum
//! and a spectral tilt. Words are harmonic tones shaped by two random
//! formants and separated by pauses, some long enough to be detected as
//! silence.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::pool::{SourceClip, Split};
use crate::audio::{write_wav, AudioSignal, WORKING_RATE};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct SynthPoolConfig {
    /// Speakers in train, validation and test.
    pub speakers: [usize; 3],
    pub clips_per_speaker: usize,
    pub clip_seconds: (f64, f64),
    pub seed: u64,
}

impl Default for SynthPoolConfig {
    fn default() -> Self {
        Self {
            speakers: [6, 2, 2],
            clips_per_speaker: 6,
            clip_seconds: (6.0, 14.0),
            seed: 7,
        }
    }
}

struct Channel {
    noise_rms: f64,
    noise_pole: f64,
    hum: Option<(f64, f64)>,
    tilt: f64,
    gain: f64,
}

impl Channel {
    fn draw(rng: &mut ChaCha8Rng) -> Self {
        let db = rng.gen_range(-72.0..-50.0);
        Self {
            noise_rms: 10f64.powf(db / 20.0),
            noise_pole: rng.gen_range(0.0..0.95),
            hum: rng.gen_bool(0.5).then(|| {
                let f = if rng.gen_bool(0.5) { 50.0 } else { 60.0 };
                (f, 10f64.powf(rng.gen_range(-66.0..-52.0) / 20.0))
            }),
            tilt: rng.gen_range(-0.7..0.7),
            gain: rng.gen_range(0.3..0.9),
        }
    }
}

fn word(rng: &mut ChaCha8Rng, f0: f64, out: &mut Vec<f64>) {
    let rate = WORKING_RATE as f64;
    let len = (rng.gen_range(0.18..0.55) * rate) as usize;
    let f1 = rng.gen_range(300.0..850.0);
    let f2 = rng.gen_range(900.0..2400.0);
    let glide = rng.gen_range(-0.25..0.25);
    let start_f0 = f0 * rng.gen_range(0.9..1.1);
    let harmonics = (3800.0 / start_f0) as usize;
    let amps: Vec<f64> = (1..=harmonics)
        .map(|h| {
            let f = h as f64 * start_f0;
            let r = |fc: f64, bw: f64| 1.0 / (1.0 + ((f - fc) / bw).powi(2));
            (r(f1, 120.0) + 0.6 * r(f2, 180.0) + 0.02) / (h as f64).sqrt()
        })
        .collect();
    let burst = rng.gen_bool(0.4);
    let mut phase = vec![0.0f64; harmonics];
    for n in 0..len {
        let t = n as f64 / len as f64;
        let env = (PI * t).sin().powf(0.6);
        let f = start_f0 * (1.0 + glide * t);
        let mut v = 0.0;
        for (h, (p, a)) in phase.iter_mut().zip(&amps).enumerate() {
            *p += 2.0 * PI * f * (h + 1) as f64 / rate;
            v += a * p.sin();
        }
        if burst && n < len / 6 {
            let g: f64 = StandardNormal.sample(rng);
            v += 0.3 * g * (1.0 - 6.0 * t);
        }
        out.push(0.2 * env * v);
    }
}

/// Renders one recording of `seconds` for a speaker with base pitch `f0`.
pub fn synth_recording(f0: f64, seconds: f64, rng: &mut ChaCha8Rng) -> AudioSignal {
    let rate = WORKING_RATE as f64;
    let target = (seconds * rate) as usize;
    let mut x = Vec::with_capacity(target + 16_000);
    let lead = (rng.gen_range(0.2..0.4) * rate) as usize;
    x.resize(lead, 0.0);
    while x.len() < target {
        word(rng, f0, &mut x);
        let pause = if rng.gen_bool(0.35) {
            rng.gen_range(0.25..0.6)
        } else {
            rng.gen_range(0.03..0.08)
        };
        x.resize(x.len() + (pause * rate) as usize, 0.0);
    }
    let tail = (rng.gen_range(0.2..0.4) * rate) as usize;
    x.resize(x.len() + tail, 0.0);

    let ch = Channel::draw(rng);
    let mut prev = 0.0;
    for v in x.iter_mut() {
        let cur = *v;
        *v = cur - ch.tilt * prev;
        prev = cur;
    }
    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    let mut coloured = 0.0;
    for (n, v) in x.iter_mut().enumerate() {
        *v *= ch.gain / peak;
        let g: f64 = StandardNormal.sample(rng);
        coloured = ch.noise_pole * coloured + (1.0 - ch.noise_pole * ch.noise_pole).sqrt() * g;
        *v += ch.noise_rms * coloured;
        if let Some((f, a)) = ch.hum {
            let t = n as f64 / rate;
            *v += a * ((2.0 * PI * f * t).sin() + 0.5 * (2.0 * PI * 3.0 * f * t).sin());
        }
    }
    let mut sig = AudioSignal::new(x, WORKING_RATE);
    sig.prevent_clipping();
    sig
}

/// Speaker names and clips for one split, deterministic in `cfg.seed`.
pub fn synth_split(cfg: &SynthPoolConfig, split: Split) -> Vec<SourceClip> {
    let si = split.index();
    let mut clips = Vec::new();
    for s in 0..cfg.speakers[si] {
        let speaker = format!("{}-spk{s:02}", split.name());
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream((si as u64) << 32 | s as u64);
        let f0 = rng.gen_range(90.0..230.0);
        for c in 0..cfg.clips_per_speaker {
            let secs = rng.gen_range(cfg.clip_seconds.0..=cfg.clip_seconds.1);
            let audio = synth_recording(f0, secs, &mut rng);
            clips.push(SourceClip::new(format!("{speaker}/clip{c:02}"), speaker.clone(), audio));
        }
    }
    clips
}

/// Stationary ambience used as file-backed noise: slowly modulated
/// coloured noise with sparse clicks.
pub fn synth_ambience(seconds: f64, pole: f64, click_rate: f64, seed: u64) -> AudioSignal {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rate = WORKING_RATE as f64;
    let n = (seconds * rate) as usize;
    let mut state = 0.0;
    let x = (0..n)
        .map(|i| {
            let g: f64 = StandardNormal.sample(&mut rng);
            state = pole * state + (1.0 - pole * pole).sqrt() * g;
            let m = 1.0 + 0.3 * (2.0 * PI * 0.3 * i as f64 / rate).sin();
            let click = if rng.gen_bool(click_rate / rate) { 3.0 } else { 0.0 };
            0.1 * (m * state + click)
        })
        .collect();
    let mut s = AudioSignal::new(x, WORKING_RATE);
    s.prevent_clipping();
    s
}

/// Writes `<dir>/<split>/<speaker>/<clip>.wav` for every split plus two
/// ambience files under `<dir>/noise/`.
pub fn write_synth_pool(dir: impl AsRef<Path>, cfg: &SynthPoolConfig) -> Result<()> {
    let dir = dir.as_ref();
    for split in Split::ALL {
        for clip in synth_split(cfg, split) {
            let path = dir.join(split.name()).join(format!("{}.wav", clip.id));
            let parent = path.parent().expect("clip path has a parent");
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            write_wav(&path, &clip.audio)?;
        }
    }
    let noise_dir = dir.join("noise");
    fs::create_dir_all(&noise_dir).map_err(|e| Error::io(&noise_dir, e))?;
    write_wav(noise_dir.join("rain.wav"), &synth_ambience(20.0, 0.2, 30.0, cfg.seed ^ 0x5a))?;
    write_wav(noise_dir.join("hall.wav"), &synth_ambience(20.0, 0.97, 2.0, cfg.seed ^ 0xa5))?;
    Ok(())
}
