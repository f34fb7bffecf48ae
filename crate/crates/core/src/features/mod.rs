//! Model input features: log-Mel spectrogram, MFCCs and spectral centroid
//! over non-overlapping 500 ms Hann frames, normalized and concatenated.

mod cache;
mod dct;
mod mel;

pub use cache::{read_feature_cache, write_feature_cache, CACHE_MAGIC, CACHE_VERSION};
pub use dct::{dct2_orthonormal, dct3_orthonormal};
pub use mel::{hz_to_mel, mel_filter_centers, mel_to_hz, MelFilterBank};

use std::sync::OnceLock;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::audio::{AudioSignal, WORKING_RATE};
use crate::error::{contract, Result};

/// Samples per analysis frame (500 ms at 16 kHz); window and hop are equal.
pub const FRAME_LEN: usize = 8000;
pub const FRAME_SECONDS: f64 = 0.5;
pub const N_MELS: usize = 256;
pub const N_MFCC: usize = 20;
pub const FULL_WIDTH: usize = N_MELS + N_MFCC + 1;
pub const MAX_DURATION_SECONDS: f64 = 45.0;
pub const MAX_FRAMES: usize = 90;
/// Floor inside `log(1 + power / LOG_EPS)`.
pub const LOG_EPS: f64 = 1e-10;

/// Row-major `frames x width` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureSet {
    /// Mel, MFCC and centroid (width 277).
    #[default]
    Full,
    /// Mel spectrogram only (width 256).
    MelOnly,
}

impl FeatureSet {
    pub fn width(self) -> usize {
        match self {
            FeatureSet::Full => FULL_WIDTH,
            FeatureSet::MelOnly => N_MELS,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStack {
    pub n_frames: usize,
    pub width: usize,
    /// Row-major `n_frames x width`, entries in [-1, 1].
    pub data: Vec<f32>,
    pub source_duration: f64,
}

impl FeatureStack {
    pub fn frame(&self, i: usize) -> &[f32] {
        &self.data[i * self.width..(i + 1) * self.width]
    }

    pub fn frame_hop(&self) -> f64 {
        FRAME_SECONDS
    }
}

pub fn frame_count(n_samples: usize) -> usize {
    n_samples.div_ceil(FRAME_LEN)
}

fn hann() -> &'static [f64] {
    static WINDOW: OnceLock<Vec<f64>> = OnceLock::new();
    WINDOW.get_or_init(|| {
        (0..FRAME_LEN)
            .map(|n| {
                0.5 - 0.5 * (2.0 * std::f64::consts::PI * n as f64 / FRAME_LEN as f64).cos()
            })
            .collect()
    })
}

/// Magnitude spectra (`FRAME_LEN / 2 + 1` bins) of each zero-padded frame.
pub fn magnitude_frames(sig: &AudioSignal) -> Result<Matrix> {
    contract!(
        sig.sample_rate == WORKING_RATE,
        "features require {WORKING_RATE} Hz audio, got {}",
        sig.sample_rate
    );
    contract!(!sig.is_empty(), "cannot extract features from an empty signal");
    let frames = frame_count(sig.len());
    let bins = FRAME_LEN / 2 + 1;
    let fft = FftPlanner::<f64>::new().plan_fft_forward(FRAME_LEN);
    let window = hann();
    let mut out = Matrix::zeros(frames, bins);
    let mut buf = vec![Complex::new(0.0, 0.0); FRAME_LEN];
    for f in 0..frames {
        let start = f * FRAME_LEN;
        for (n, b) in buf.iter_mut().enumerate() {
            let s = sig.samples.get(start + n).copied().unwrap_or(0.0);
            *b = Complex::new(s * window[n], 0.0);
        }
        fft.process(&mut buf);
        for (o, c) in out.row_mut(f).iter_mut().zip(&buf[..bins]) {
            *o = c.norm();
        }
    }
    Ok(out)
}

pub fn bin_frequency(bin: usize) -> f64 {
    bin as f64 * WORKING_RATE as f64 / FRAME_LEN as f64
}

/// Log-compressed Mel power spectrogram, `frames x 256`.
pub fn mel_spectrogram(sig: &AudioSignal) -> Result<Matrix> {
    let mags = magnitude_frames(sig)?;
    Ok(log_mel_from_magnitudes(&mags))
}

fn log_mel_from_magnitudes(mags: &Matrix) -> Matrix {
    let bank = MelFilterBank::standard();
    let mut out = Matrix::zeros(mags.rows, N_MELS);
    let mut power = vec![0.0; mags.cols];
    for f in 0..mags.rows {
        for (p, m) in power.iter_mut().zip(mags.row(f)) {
            *p = m * m;
        }
        let row = out.row_mut(f);
        bank.apply(&power, row);
        row.iter_mut().for_each(|v| *v = (*v / LOG_EPS).ln_1p());
    }
    out
}

/// First 20 orthonormal DCT-II coefficients of every log-Mel frame.
pub fn mfcc(mel: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(mel.rows, N_MFCC);
    for f in 0..mel.rows {
        let coeffs = dct2_orthonormal(mel.row(f));
        out.row_mut(f).copy_from_slice(&coeffs[..N_MFCC]);
    }
    out
}

/// Magnitude-weighted mean frequency per frame in Hz; near-silent frames give 0.
pub fn spectral_centroid(sig: &AudioSignal) -> Result<Matrix> {
    let mags = magnitude_frames(sig)?;
    Ok(centroid_from_magnitudes(&mags))
}

fn centroid_from_magnitudes(mags: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(mags.rows, 1);
    for f in 0..mags.rows {
        let row = mags.row(f);
        let total: f64 = row.iter().sum();
        out.data[f] = if total < 1e-12 {
            0.0
        } else {
            row.iter()
                .enumerate()
                .map(|(k, m)| bin_frequency(k) * m)
                .sum::<f64>()
                / total
        };
    }
    out
}

/// Maps a block to [-1, 1] by its own min and max; constant blocks map to 0.
fn min_max_normalize(m: &Matrix) -> Vec<f64> {
    let (lo, hi) = m
        .data
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let range = hi - lo;
    if range.is_nan() || range <= 0.0 || !range.is_finite() {
        return vec![0.0; m.data.len()];
    }
    m.data
        .iter()
        .map(|&v| (2.0 * (v - lo) / range - 1.0).clamp(-1.0, 1.0))
        .collect()
}

/// Builds the normalized model input for one signal.
pub fn assemble(sig: &AudioSignal) -> Result<FeatureStack> {
    assemble_with(sig, FeatureSet::Full)
}

pub fn assemble_with(sig: &AudioSignal, set: FeatureSet) -> Result<FeatureStack> {
    contract!(
        sig.len() <= (MAX_DURATION_SECONDS * WORKING_RATE as f64) as usize,
        "audio of {:.2} s exceeds the {MAX_DURATION_SECONDS} s maximum; split it into shorter segments",
        sig.duration_seconds()
    );
    let mags = magnitude_frames(sig)?;
    let mel = log_mel_from_magnitudes(&mags);
    let n_frames = mel.rows;
    let width = set.width();
    let mut blocks: Vec<(Vec<f64>, usize)> = vec![(min_max_normalize(&mel), N_MELS)];
    if set == FeatureSet::Full {
        blocks.push((min_max_normalize(&mfcc(&mel)), N_MFCC));
        blocks.push((min_max_normalize(&centroid_from_magnitudes(&mags)), 1));
    }
    let mut data = Vec::with_capacity(n_frames * width);
    for f in 0..n_frames {
        for (block, cols) in &blocks {
            data.extend(block[f * cols..(f + 1) * cols].iter().map(|&v| v as f32));
        }
    }
    Ok(FeatureStack {
        n_frames,
        width,
        data,
        source_duration: sig.duration_seconds(),
    })
}
