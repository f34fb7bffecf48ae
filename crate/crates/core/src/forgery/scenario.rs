use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::codec::{Codec, AMR_NB_MODES};
use crate::error::{Error, Result};

/// How many splice points each sample gets. A sample with `n` splice points
/// is assembled from `n + 1` source segments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum SpliceCount {
    Fixed { n: usize },
    /// Independent uniform draw per sample.
    Uniform { min: usize, max: usize },
    /// Cycles through `min..=max` by sample index, so every count occurs
    /// equally often.
    Balanced { min: usize, max: usize },
}

impl SpliceCount {
    pub fn bounds(&self) -> (usize, usize) {
        match *self {
            SpliceCount::Fixed { n } => (n, n),
            SpliceCount::Uniform { min, max } | SpliceCount::Balanced { min, max } => (min, max),
        }
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R, index: u64) -> usize {
        match *self {
            SpliceCount::Fixed { n } => n,
            SpliceCount::Uniform { min, max } => rng.gen_range(min..=max),
            SpliceCount::Balanced { min, max } => min + (index % (max - min + 1) as u64) as usize,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum NoiseMode {
    None,
    White { snr_db: [f64; 2] },
    /// Background noise loaded from the pool's `noise/<name>.wav`.
    File { name: String, snr_db: [f64; 2] },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompressionMode {
    /// Number of encode/decode passes.
    pub runs: usize,
    /// Codecs drawn uniformly per pass.
    pub codecs: Vec<Codec>,
    /// Range for mp3-sim bitrates (kbps), drawn log-uniformly.
    pub mp3_kbps: [f64; 2],
    /// Bitrate passed to the external encoder.
    pub external_kbps: f64,
}

impl Default for CompressionMode {
    fn default() -> Self {
        Self {
            runs: 0,
            codecs: vec![Codec::Mp3Sim, Codec::AmrNbSim],
            mp3_kbps: [10.0, 128.0],
            external_kbps: 64.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub splices: SpliceCount,
    /// Convolve each source with a randomly chosen room before cutting.
    pub rir: bool,
    /// Draw every segment from a single recording.
    pub same_recording: bool,
    pub noise: NoiseMode,
    pub compression: CompressionMode,
    /// Accepted sample durations, seconds.
    pub duration: [f64; 2],
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            name: "custom".into(),
            splices: SpliceCount::Fixed { n: 1 },
            rir: true,
            same_recording: false,
            noise: NoiseMode::None,
            compression: CompressionMode::default(),
            duration: [3.0, 45.0],
        }
    }
}

/// SNR range used by every degraded preset.
pub const SNR_RANGE: [f64; 2] = [-10.0, 50.0];
pub const MAX_SPLICES: usize = 5;

pub const PRESET_NAMES: &[&str] = &[
    "single-clean",
    "single-degraded",
    "multisplice-train",
    "multicompression-0",
    "multicompression-1",
    "multicompression-2",
    "multicompression-3",
    "multicompression-4",
    "multicompression-5",
    "intersplicing",
    "realnoise-<name>",
];

impl ScenarioConfig {
    /// Built-in scenarios:
    ///
    /// - `single-clean`: one splice, rooms on, no post-processing
    /// - `single-degraded`: one splice, rooms, white noise, one compression
    /// - `multisplice-train`: 0-5 splices in equal numbers, rooms, white
    ///   noise, one compression
    /// - `multicompression-k`: as multisplice-train with `k` compressions
    /// - `intersplicing`: 0-5 splices cut from a single recording, no rooms,
    ///   no post-processing
    /// - `realnoise-<name>`: as multisplice-train with noise file `<name>`
    pub fn preset(name: &str) -> Result<Self> {
        let one_splice = SpliceCount::Fixed { n: 1 };
        let multi = SpliceCount::Balanced {
            min: 0,
            max: MAX_SPLICES,
        };
        let single_pass = CompressionMode {
            runs: 1,
            ..CompressionMode::default()
        };
        let white = NoiseMode::White { snr_db: SNR_RANGE };
        let base = Self {
            name: name.to_string(),
            ..Self::default()
        };
        let cfg = match name {
            "single-clean" => Self {
                splices: one_splice,
                ..base
            },
            "single-degraded" => Self {
                splices: one_splice,
                noise: white,
                compression: single_pass,
                ..base
            },
            "multisplice-train" => Self {
                splices: multi,
                noise: white,
                compression: single_pass,
                ..base
            },
            "intersplicing" => Self {
                splices: multi,
                rir: false,
                same_recording: true,
                ..base
            },
            _ => {
                if let Some(k) = name.strip_prefix("multicompression-") {
                    let runs: usize = k
                        .parse()
                        .ok()
                        .filter(|r| *r <= 5)
                        .ok_or_else(|| Error::Config(format!("unknown preset {name}")))?;
                    Self {
                        splices: multi,
                        noise: white,
                        compression: CompressionMode {
                            runs,
                            ..CompressionMode::default()
                        },
                        ..base
                    }
                } else if let Some(noise) = name.strip_prefix("realnoise-").filter(|n| !n.is_empty()) {
                    Self {
                        splices: multi,
                        noise: NoiseMode::File {
                            name: noise.to_string(),
                            snr_db: SNR_RANGE,
                        },
                        compression: single_pass,
                        ..base
                    }
                } else {
                    return Err(Error::Config(format!(
                        "unknown preset {name}; known: {}",
                        PRESET_NAMES.join(", ")
                    )));
                }
            }
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// A preset name or a path to a TOML scenario file.
    pub fn resolve(name_or_path: &str) -> Result<Self> {
        let p = Path::new(name_or_path);
        if p.is_file() {
            Self::load(p)
        } else {
            Self::preset(name_or_path)
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = toml::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("scenario {}: {m}", self.name)));
        let (lo, hi) = self.splices.bounds();
        if lo > hi || hi > MAX_SPLICES {
            return bad(format!("splice counts must satisfy min <= max <= {MAX_SPLICES}"));
        }
        let [dmin, dmax] = self.duration;
        if !(dmin.is_finite() && dmax.is_finite() && 3.0 <= dmin && dmin <= dmax && dmax <= 45.0) {
            return bad(format!("duration bounds {dmin}..{dmax} must lie in [3, 45]"));
        }
        match &self.noise {
            NoiseMode::None => {}
            NoiseMode::White { snr_db } | NoiseMode::File { snr_db, .. } => {
                if !(SNR_RANGE[0] <= snr_db[0] && snr_db[0] <= snr_db[1] && snr_db[1] <= SNR_RANGE[1]) {
                    return bad(format!("SNR range {snr_db:?} outside [-10, 50] dB"));
                }
            }
        }
        let c = &self.compression;
        if c.runs > 5 {
            return bad(format!("{} compression runs (at most 5)", c.runs));
        }
        if c.runs > 0 && c.codecs.is_empty() {
            return bad("compression runs requested without codecs".into());
        }
        let [bmin, bmax] = c.mp3_kbps;
        if !(10.0 <= bmin && bmin <= bmax && bmax <= 128.0) {
            return bad(format!("mp3 bitrate range {bmin}..{bmax} outside [10, 128] kbps"));
        }
        if c.external_kbps.is_nan() || c.external_kbps <= 0.0 {
            return bad("external bitrate must be positive".into());
        }
        Ok(())
    }

    /// Draws a codec and bitrate for one compression pass.
    pub fn draw_compression<R: Rng + ?Sized>(&self, rng: &mut R) -> (Codec, f64) {
        let c = &self.compression;
        let codec = c.codecs[rng.gen_range(0..c.codecs.len())];
        let kbps = match codec {
            Codec::Mp3Sim => {
                let [lo, hi] = c.mp3_kbps;
                if lo == hi {
                    lo
                } else {
                    (rng.gen_range(lo.ln()..hi.ln())).exp()
                }
            }
            Codec::AmrNbSim => AMR_NB_MODES[rng.gen_range(0..AMR_NB_MODES.len())],
            Codec::External => c.external_kbps,
        };
        (codec, kbps)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn every_preset_validates() {
        for name in PRESET_NAMES {
            let name = name.replace("<name>", "rain");
            let cfg = ScenarioConfig::preset(&name).unwrap();
            assert_eq!(cfg.name, name);
        }
        assert!(ScenarioConfig::preset("multicompression-6").is_err());
        assert!(ScenarioConfig::preset("nonsense").is_err());
    }

    #[test]
    fn toml_round_trip() {
        let cfg = ScenarioConfig::preset("realnoise-rain").unwrap();
        let text = cfg.to_toml();
        let back: ScenarioConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, cfg);
        let minimal: ScenarioConfig =
            toml::from_str("name = \"x\"\nrir = false\n[splices]\nmode = \"uniform\"\nmin = 0\nmax = 5\n")
                .unwrap();
        assert_eq!(minimal.splices, SpliceCount::Uniform { min: 0, max: 5 });
        assert!(toml::from_str::<ScenarioConfig>("bogus = 1").is_err());
    }

    #[test]
    fn uniform_splice_counts_are_flat() {
        let s = SpliceCount::Uniform { min: 0, max: 5 };
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let draws = 60_000;
        let mut counts = [0usize; 6];
        for i in 0..draws {
            counts[s.draw(&mut rng, i)] += 1;
        }
        let expect = draws as f64 / 6.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expect).powi(2) / expect).sum();
        // 5 degrees of freedom, p = 0.001
        assert!(chi2 < 20.52, "chi2 = {chi2}");
        for c in counts {
            assert!((c as f64 / draws as f64 - 1.0 / 6.0).abs() < 0.01);
        }
    }

    #[test]
    fn balanced_counts_are_exact() {
        let s = SpliceCount::Balanced { min: 0, max: 5 };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut counts = [0usize; 6];
        for i in 0..600 {
            counts[s.draw(&mut rng, i)] += 1;
        }
        assert_eq!(counts, [100; 6]);
    }
}
