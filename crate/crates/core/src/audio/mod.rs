//! Mono PCM container, WAV I/O, resampling and FFT convolution.
//!
//! Every downstream stage works on [`AudioSignal`] at [`WORKING_RATE`].

mod convolve;
mod resample;
mod wav;

pub use convolve::{convolve, direct_convolution, fft_convolution};
pub use resample::{resample, KAISER_BETA, TAPS_PER_PHASE};
pub use wav::{load_wav, read_wav, write_wav};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};

/// Sample rate used by the forgery pipeline and feature extraction.
pub const WORKING_RATE: u32 = 16_000;

#[derive(Debug, Clone, PartialEq)]
pub struct AudioSignal {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl AudioSignal {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Self {
        Self {
            samples,
            sample_rate,
        }
    }

    pub fn silence(len: usize, sample_rate: u32) -> Self {
        Self::new(vec![0.0; len], sample_rate)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0f64, |m, s| m.max(s.abs()))
    }

    /// Mean squared amplitude.
    pub fn power(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().map(|s| s * s).sum::<f64>() / self.samples.len() as f64
    }

    /// Scales the signal so that its peak equals `target` (no-op when silent).
    pub fn normalize_peak(&mut self, target: f64) {
        let peak = self.peak();
        if peak > 0.0 {
            let g = target / peak;
            self.samples.iter_mut().for_each(|s| *s *= g);
        }
    }

    /// Scales down only if some sample would clip.
    pub fn prevent_clipping(&mut self) {
        if self.peak() > 1.0 {
            self.normalize_peak(1.0);
        }
    }

    pub fn slice(&self, start: usize, end: usize) -> AudioSignal {
        AudioSignal::new(self.samples[start..end].to_vec(), self.sample_rate)
    }

    pub fn is_finite(&self) -> bool {
        self.samples.iter().all(|s| s.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RirKind {
    Synthetic,
    Measured,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImpulseResponse {
    pub taps: Vec<f64>,
    pub sample_rate: u32,
    pub kind: RirKind,
    pub rt60: Option<f64>,
}

impl ImpulseResponse {
    pub fn measured(taps: Vec<f64>, sample_rate: u32) -> Result<Self> {
        contract!(!taps.is_empty(), "impulse response must be non-empty");
        contract!(
            taps.iter().all(|t| t.is_finite()),
            "impulse response taps must be finite"
        );
        Ok(Self {
            taps,
            sample_rate,
            kind: RirKind::Measured,
            rt60: None,
        })
    }

    pub fn unit(sample_rate: u32) -> Self {
        Self {
            taps: vec![1.0],
            sample_rate,
            kind: RirKind::Measured,
            rt60: None,
        }
    }

    /// Stochastic room model: a direct-path tap followed by Gaussian noise
    /// whose envelope decays by 60 dB after `rt60` seconds.
    pub fn synthetic<R: Rng + ?Sized>(rt60: f64, sample_rate: u32, rng: &mut R) -> Self {
        let len = ((rt60 * 1.2 * sample_rate as f64).ceil() as usize).max(2);
        // amplitude reaches 1e-3 (-60 dB) at n = rt60 * fs
        let decay = 3.0 * std::f64::consts::LN_10 / (rt60 * sample_rate as f64);
        let mut taps = Vec::with_capacity(len);
        taps.push(1.0);
        for n in 1..len {
            let g: f64 = rng.sample(StandardNormal);
            taps.push(0.5 * g * (-decay * n as f64).exp());
        }
        Self {
            taps,
            sample_rate,
            kind: RirKind::Synthetic,
            rt60: Some(rt60),
        }
    }

    pub fn to_signal(&self) -> AudioSignal {
        AudioSignal::new(self.taps.clone(), self.sample_rate)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn duration_matches_len_over_rate() {
        let s = AudioSignal::silence(24_000, 16_000);
        assert_eq!(s.duration_seconds(), 1.5);
    }

    #[test]
    fn synthetic_rir_decays_sixty_db() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ir = ImpulseResponse::synthetic(0.4, 16_000, &mut rng);
        assert_eq!(ir.kind, RirKind::Synthetic);
        let n = ir.taps.len();
        let head: f64 = ir.taps[1..800].iter().map(|t| t * t).sum::<f64>() / 799.0;
        let tail: f64 = ir.taps[6000..6400.min(n)].iter().map(|t| t * t).sum::<f64>() / 400.0;
        let drop_db = 10.0 * (head / tail).log10();
        // 6000 samples = 0.375 s, expected ~ 60 * 0.35 / 0.4 dB below the head
        assert!(drop_db > 40.0 && drop_db < 65.0, "{drop_db}");
    }

    #[test]
    fn measured_rir_rejects_empty() {
        assert!(ImpulseResponse::measured(vec![], 16_000).is_err());
        assert!(ImpulseResponse::measured(vec![f64::NAN], 16_000).is_err());
    }
}
