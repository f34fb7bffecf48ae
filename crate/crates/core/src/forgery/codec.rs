//! Lossy-codec simulation.
//!
//! The simulators reproduce the two forensic side effects of speech and music
//! codecs, band-limiting and spectral quantization noise, without bitstream
//! compatibility. An STFT with 512-sample sqrt-Hann frames at 50 % overlap is
//! used for analysis and synthesis; it reconstructs perfectly when nothing is
//! modified. Real encoders can be used through an external command template.

use std::path::Path;
use std::process::Command;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::audio::{read_wav, resample, write_wav, AudioSignal};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Codec {
    Mp3Sim,
    AmrNbSim,
    External,
}

impl Codec {
    pub fn name(self) -> &'static str {
        match self {
            Codec::Mp3Sim => "mp3-sim",
            Codec::AmrNbSim => "amr-nb-sim",
            Codec::External => "external",
        }
    }
}

/// AMR-NB mode bitrates in kbps.
pub const AMR_NB_MODES: [f64; 8] = [4.75, 5.15, 5.9, 6.7, 7.4, 7.95, 10.2, 12.2];
pub const MP3_MIN_KBPS: f64 = 10.0;
pub const MP3_MAX_KBPS: f64 = 128.0;
/// Bitrate at and above which mp3-sim keeps the full 8 kHz band.
pub const MP3_FULLBAND_KBPS: f64 = 64.0;
pub const AMR_CUTOFF_HZ: f64 = 3400.0;

/// Shell command template for [`Codec::External`]; `{input}`, `{output}`
/// and `{bitrate}` are substituted. Both files are WAV.
pub const EXTERNAL_CODEC_ENV: &str = "SPLICEDET_CODEC_CMD";

const FRAME: usize = 512;
const HOP: usize = FRAME / 2;
const BAND_BINS: usize = 16;

pub fn validate_bitrate(codec: Codec, kbps: f64) -> Result<()> {
    let ok = match codec {
        Codec::Mp3Sim => (MP3_MIN_KBPS..=MP3_MAX_KBPS).contains(&kbps),
        Codec::AmrNbSim => AMR_NB_MODES.contains(&kbps),
        Codec::External => kbps > 0.0 && kbps.is_finite(),
    };
    if ok {
        Ok(())
    } else {
        Err(Error::Contract(format!(
            "bitrate {kbps} kbps is not valid for {}",
            codec.name()
        )))
    }
}

/// Low-pass edge of mp3-sim: 4 kHz at 10 kbps rising linearly in
/// log-bitrate to 8 kHz at 64 kbps.
pub fn mp3_cutoff_hz(kbps: f64) -> f64 {
    let x = ((kbps / MP3_MIN_KBPS).ln() / (MP3_FULLBAND_KBPS / MP3_MIN_KBPS).ln()).clamp(0.0, 1.0);
    4000.0 + 4000.0 * x
}

/// Effective magnitude resolution per band, in bits. The quantizer step is
/// `band_peak * 2^(1 - bits)`, so it shrinks as the bitrate grows.
pub fn quantization_bits(codec: Codec, kbps: f64) -> f64 {
    match codec {
        Codec::Mp3Sim => {
            let x = ((kbps / MP3_MIN_KBPS).ln() / (MP3_MAX_KBPS / MP3_MIN_KBPS).ln()).clamp(0.0, 1.0);
            2.0 + 6.0 * x
        }
        Codec::AmrNbSim => {
            let lo = AMR_NB_MODES[0];
            let hi = AMR_NB_MODES[AMR_NB_MODES.len() - 1];
            1.0 + 1.5 * ((kbps - lo) / (hi - lo)).clamp(0.0, 1.0)
        }
        Codec::External => f64::INFINITY,
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CodecOptions {
    /// Disable magnitude quantization (calibration runs).
    pub quantize: bool,
}

impl Default for CodecOptions {
    fn default() -> Self {
        Self { quantize: true }
    }
}

/// One encode/decode pass. Output length equals input length.
pub fn compress(sig: &AudioSignal, codec: Codec, kbps: f64) -> Result<AudioSignal> {
    compress_with(sig, codec, kbps, CodecOptions::default())
}

pub fn compress_with(
    sig: &AudioSignal,
    codec: Codec,
    kbps: f64,
    opts: CodecOptions,
) -> Result<AudioSignal> {
    validate_bitrate(codec, kbps)?;
    let cutoff = match codec {
        Codec::Mp3Sim => mp3_cutoff_hz(kbps),
        Codec::AmrNbSim => AMR_CUTOFF_HZ,
        Codec::External => {
            let template = std::env::var(EXTERNAL_CODEC_ENV).map_err(|_| {
                Error::Config(format!(
                    "external codec requested but {EXTERNAL_CODEC_ENV} is not set"
                ))
            })?;
            return compress_external(sig, kbps, &template);
        }
    };
    let bits = opts.quantize.then(|| quantization_bits(codec, kbps));
    let mut out = stft_process(sig, cutoff, bits);
    out.prevent_clipping();
    Ok(out)
}

fn sqrt_hann() -> Vec<f64> {
    (0..FRAME)
        .map(|n| (0.5 - 0.5 * (2.0 * std::f64::consts::PI * n as f64 / FRAME as f64).cos()).sqrt())
        .collect()
}

fn quantize_frame(spec: &mut [Complex64], bits: f64) {
    let half = FRAME / 2;
    for band in (0..=half).collect::<Vec<_>>().chunks(BAND_BINS) {
        let peak = band.iter().map(|&k| spec[k].norm()).fold(0.0, f64::max);
        if peak <= 0.0 {
            continue;
        }
        let step = peak * 2f64.powf(1.0 - bits);
        for &k in band {
            let m = spec[k].norm();
            if m > 0.0 {
                let q = (m / step).round() * step;
                spec[k] *= q / m;
            }
        }
    }
}

fn stft_process(sig: &AudioSignal, cutoff: f64, bits: Option<f64>) -> AudioSignal {
    let len = sig.len();
    if len == 0 {
        return sig.clone();
    }
    let tail = HOP + (HOP - len % HOP) % HOP;
    let mut padded = vec![0.0; HOP];
    padded.extend_from_slice(&sig.samples);
    padded.resize(padded.len() + tail, 0.0);
    let window = sqrt_hann();
    let mut planner = FftPlanner::<f64>::new();
    let fwd: Arc<dyn Fft<f64>> = planner.plan_fft_forward(FRAME);
    let inv: Arc<dyn Fft<f64>> = planner.plan_fft_inverse(FRAME);
    let half = FRAME / 2;
    let bin_hz = sig.sample_rate as f64 / FRAME as f64;
    let mut out = vec![0.0; padded.len()];
    let mut buf = vec![Complex64::new(0.0, 0.0); FRAME];
    let mut start = 0;
    while start + FRAME <= padded.len() {
        for (n, b) in buf.iter_mut().enumerate() {
            *b = Complex64::new(padded[start + n] * window[n], 0.0);
        }
        fwd.process(&mut buf);
        for (k, b) in buf.iter_mut().enumerate().take(half + 1) {
            if k as f64 * bin_hz > cutoff {
                *b = Complex64::new(0.0, 0.0);
            }
        }
        if let Some(b) = bits {
            quantize_frame(&mut buf, b);
        }
        for k in 1..half {
            buf[FRAME - k] = buf[k].conj();
        }
        buf[0].im = 0.0;
        buf[half].im = 0.0;
        inv.process(&mut buf);
        for n in 0..FRAME {
            out[start + n] += buf[n].re / FRAME as f64 * window[n];
        }
        start += HOP;
    }
    AudioSignal::new(out[HOP..HOP + len].to_vec(), sig.sample_rate)
}

/// Runs `template` through `sh -c` with WAV files in a temporary directory.
/// The decoded result is brought back to the input rate and length.
pub fn compress_external(sig: &AudioSignal, kbps: f64, template: &str) -> Result<AudioSignal> {
    let dir = tempfile::tempdir().map_err(|e| Error::io(Path::new("<tempdir>"), e))?;
    let input = dir.path().join("input.wav");
    let output = dir.path().join("output.wav");
    write_wav(&input, sig)?;
    let cmd = template
        .replace("{input}", &input.to_string_lossy())
        .replace("{output}", &output.to_string_lossy())
        .replace("{bitrate}", &format!("{kbps}"));
    let result = Command::new("sh")
        .arg("-c")
        .arg(&cmd)
        .output()
        .map_err(|e| Error::io(Path::new("sh"), e))?;
    if !result.status.success() {
        let mut text = String::from_utf8_lossy(&result.stdout).into_owned();
        text.push_str(&String::from_utf8_lossy(&result.stderr));
        return Err(Error::Subprocess {
            status: result.status.to_string(),
            output: text,
        });
    }
    let decoded = resample(&read_wav(&output)?, sig.sample_rate)?;
    let mut samples = decoded.samples;
    samples.resize(sig.len(), 0.0);
    Ok(AudioSignal::new(samples, sig.sample_rate))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn snr_db(reference: &[f64], test: &[f64]) -> f64 {
        let sig: f64 = reference.iter().map(|v| v * v).sum();
        let err: f64 = reference.iter().zip(test).map(|(a, b)| (a - b).powi(2)).sum();
        10.0 * (sig / err.max(1e-300)).log10()
    }

    fn tone(freq: f64, n: usize) -> AudioSignal {
        AudioSignal::new(
            (0..n)
                .map(|i| 0.5 * (2.0 * std::f64::consts::PI * freq * i as f64 / 16_000.0).sin())
                .collect(),
            16_000,
        )
    }

    #[test]
    fn calibration_pass_is_transparent() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = AudioSignal::new((0..10_001).map(|_| rng.gen_range(-0.5..0.5)).collect(), 16_000);
        let y = compress_with(&x, Codec::Mp3Sim, 128.0, CodecOptions { quantize: false }).unwrap();
        assert_eq!(y.len(), x.len());
        assert!(snr_db(&x.samples, &y.samples) > 30.0);
    }

    #[test]
    fn amr_removes_five_khz() {
        let x = tone(5000.0, 16_000);
        let y = compress(&x, Codec::AmrNbSim, 12.2).unwrap();
        let att = 10.0 * (x.power() / y.power().max(1e-300)).log10();
        assert!(att > 40.0, "attenuation {att} dB");
    }

    #[test]
    fn lengths_preserved() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..8 {
            let n = rng.gen_range(1..5000);
            let x = AudioSignal::new((0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(), 16_000);
            for (c, b) in [(Codec::Mp3Sim, 32.0), (Codec::AmrNbSim, 4.75)] {
                assert_eq!(compress(&x, c, b).unwrap().len(), n);
            }
        }
    }

    #[test]
    fn cutoff_and_bits_schedule() {
        assert_eq!(mp3_cutoff_hz(10.0), 4000.0);
        assert!((mp3_cutoff_hz(64.0) - 8000.0).abs() < 1e-9);
        assert_eq!(mp3_cutoff_hz(128.0), 8000.0);
        let mid = mp3_cutoff_hz((10.0f64 * 64.0).sqrt());
        assert!((mid - 6000.0).abs() < 1e-9);
        let mut prev = 0.0;
        for kbps in [10.0, 20.0, 40.0, 80.0, 128.0] {
            let b = quantization_bits(Codec::Mp3Sim, kbps);
            assert!(b > prev);
            prev = b;
        }
        assert!(quantization_bits(Codec::AmrNbSim, 12.2) < quantization_bits(Codec::Mp3Sim, 10.0) + 1.0);
        assert!(validate_bitrate(Codec::AmrNbSim, 6.0).is_err());
        assert!(validate_bitrate(Codec::Mp3Sim, 9.0).is_err());
    }

    #[test]
    fn external_adapter() {
        let x = tone(440.0, 3000);
        let y = compress_external(&x, 64.0, "cp {input} {output}").unwrap();
        assert_eq!(y.len(), x.len());
        assert!(snr_db(&x.samples, &y.samples) > 60.0);
        let err = compress_external(&x, 64.0, "echo boom >&2; exit 3").unwrap_err();
        match err {
            Error::Subprocess { output, .. } => assert!(output.contains("boom")),
            other => panic!("{other:?}"),
        }
    }
}
