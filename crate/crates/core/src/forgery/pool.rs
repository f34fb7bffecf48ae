use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::vad::detect_silence;
use crate::audio::{load_wav, AudioSignal, ImpulseResponse, WORKING_RATE};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown split {s:?} (train, validation, test)")))
    }
}

/// One dry source recording at the working rate, with its silent intervals
/// computed once at load time.
#[derive(Debug, Clone)]
pub struct SourceClip {
    pub id: String,
    pub speaker: String,
    pub audio: AudioSignal,
    pub silences: Vec<(f64, f64)>,
}

impl SourceClip {
    pub fn new(id: String, speaker: String, audio: AudioSignal) -> Self {
        let silences = detect_silence(&audio);
        Self {
            id,
            speaker,
            audio,
            silences,
        }
    }

    /// Midpoints of the silent intervals, candidate cut positions.
    pub fn cut_candidates(&self) -> Vec<f64> {
        self.silences.iter().map(|(a, b)| 0.5 * (a + b)).collect()
    }
}

/// Speakers of one split and their recordings.
#[derive(Debug, Clone)]
pub struct SpeakerPool {
    pub split: Split,
    pub entries: BTreeMap<String, Vec<String>>,
    clips: BTreeMap<String, SourceClip>,
}

impl SpeakerPool {
    pub fn from_clips(split: Split, clips: Vec<SourceClip>) -> Result<Self> {
        let mut entries: BTreeMap<String, Vec<String>> = BTreeMap::new();
        let mut map = BTreeMap::new();
        for c in clips {
            if c.audio.sample_rate != WORKING_RATE {
                return Err(Error::Contract(format!(
                    "clip {} is at {} Hz, expected {WORKING_RATE}",
                    c.id, c.audio.sample_rate
                )));
            }
            entries.entry(c.speaker.clone()).or_default().push(c.id.clone());
            if map.insert(c.id.clone(), c).is_some() {
                return Err(Error::Contract("duplicate clip id in pool".into()));
            }
        }
        entries.values_mut().for_each(|v| v.sort());
        Ok(Self {
            split,
            entries,
            clips: map,
        })
    }

    /// Loads `<dir>/<speaker>/*.wav`; the sample id is `<speaker>/<stem>`.
    pub fn load_dir(dir: impl AsRef<Path>, split: Split) -> Result<Self> {
        let dir = dir.as_ref();
        let mut clips = Vec::new();
        for speaker_dir in sorted_entries(dir)? {
            if !speaker_dir.is_dir() {
                continue;
            }
            let speaker = file_name(&speaker_dir);
            for wav in sorted_entries(&speaker_dir)? {
                if wav.extension().and_then(|e| e.to_str()) != Some("wav") {
                    continue;
                }
                let stem = wav.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
                let audio = load_wav(&wav)?;
                clips.push(SourceClip::new(format!("{speaker}/{stem}"), speaker.clone(), audio));
            }
        }
        if clips.is_empty() {
            return Err(Error::MissingAsset(format!("no speaker recordings under {}", dir.display())));
        }
        Self::from_clips(split, clips)
    }

    pub fn clip(&self, id: &str) -> Option<&SourceClip> {
        self.clips.get(id)
    }

    pub fn speakers(&self) -> impl Iterator<Item = &String> {
        self.entries.keys()
    }

    pub fn is_empty(&self) -> bool {
        self.clips.is_empty()
    }

    pub fn len(&self) -> usize {
        self.clips.len()
    }
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|e| Error::io(dir, e)))
        .collect::<Result<_>>()?;
    v.sort();
    Ok(v)
}

fn file_name(p: &Path) -> String {
    p.file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Reverberation times of the synthetic room set, seconds.
pub const SYNTHETIC_RT60S: [f64; 7] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7];
const SYNTHETIC_RIR_SEED: u64 = 0x5219_0000;

/// The seven synthetic rooms, identical on every call.
pub fn synthetic_rirs() -> Vec<(String, ImpulseResponse)> {
    SYNTHETIC_RT60S
        .iter()
        .enumerate()
        .map(|(i, &rt)| {
            let mut rng = ChaCha8Rng::seed_from_u64(SYNTHETIC_RIR_SEED + i as u64);
            (
                format!("synthetic-rt{rt:.1}"),
                ImpulseResponse::synthetic(rt, WORKING_RATE, &mut rng),
            )
        })
        .collect()
}

/// Everything a render may reference: speaker recordings, rooms and
/// background noises, addressed by id.
#[derive(Debug, Clone)]
pub struct Assets {
    pub pool: SpeakerPool,
    pub rirs: BTreeMap<String, ImpulseResponse>,
    pub noises: BTreeMap<String, AudioSignal>,
}

impl Assets {
    /// Pool plus the synthetic room set and no noise files.
    pub fn new(pool: SpeakerPool) -> Self {
        Self {
            pool,
            rirs: synthetic_rirs().into_iter().collect(),
            noises: BTreeMap::new(),
        }
    }

    /// Loads one split of a pool directory:
    ///
    /// ```text
    /// <dir>/{train,validation,test}/<speaker>/<clip>.wav
    /// <dir>/rirs/<name>.wav      measured rooms (optional)
    /// <dir>/noise/<name>.wav     background noise (optional)
    /// ```
    ///
    /// Speaker names must be disjoint across the split directories present.
    pub fn load_dir(dir: impl AsRef<Path>, split: Split) -> Result<Self> {
        let dir = dir.as_ref();
        check_disjoint_speakers(dir)?;
        let pool = SpeakerPool::load_dir(dir.join(split.name()), split)?;
        let mut assets = Self::new(pool);
        let rir_dir = dir.join("rirs");
        if rir_dir.is_dir() {
            for p in sorted_entries(&rir_dir)? {
                if p.extension().and_then(|e| e.to_str()) == Some("wav") {
                    let sig = load_wav(&p)?;
                    let ir = ImpulseResponse::measured(sig.samples, sig.sample_rate)?;
                    let stem = p.file_stem().unwrap_or_default().to_string_lossy();
                    assets.rirs.insert(format!("measured-{stem}"), ir);
                }
            }
        }
        let noise_dir = dir.join("noise");
        if noise_dir.is_dir() {
            for p in sorted_entries(&noise_dir)? {
                if p.extension().and_then(|e| e.to_str()) == Some("wav") {
                    let stem = p.file_stem().unwrap_or_default().to_string_lossy().into_owned();
                    assets.noises.insert(stem, load_wav(&p)?);
                }
            }
        }
        Ok(assets)
    }
}

fn check_disjoint_speakers(dir: &Path) -> Result<()> {
    let mut seen: BTreeMap<String, Split> = BTreeMap::new();
    for split in Split::ALL {
        let d = dir.join(split.name());
        if !d.is_dir() {
            continue;
        }
        let names: BTreeSet<String> = sorted_entries(&d)?
            .into_iter()
            .filter(|p| p.is_dir())
            .map(|p| file_name(&p))
            .collect();
        for n in names {
            if let Some(prev) = seen.insert(n.clone(), split) {
                return Err(Error::Config(format!(
                    "speaker {n} appears in both {} and {}",
                    prev.name(),
                    split.name()
                )));
            }
        }
    }
    Ok(())
}
