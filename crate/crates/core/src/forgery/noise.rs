use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::audio::AudioSignal;
use crate::error::{contract, Error, Result};

/// Unit-variance Gaussian noise.
pub fn white_noise(len: usize, sample_rate: u32, seed: u64) -> AudioSignal {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    AudioSignal::new(
        (0..len).map(|_| StandardNormal.sample(&mut rng)).collect(),
        sample_rate,
    )
}

/// `noise` looped (or cropped) to `len` samples, starting at `offset`.
pub fn tile(noise: &[f64], len: usize, offset: usize) -> Vec<f64> {
    if noise.is_empty() {
        return vec![0.0; len];
    }
    (0..len).map(|i| noise[(offset + i) % noise.len()]).collect()
}

/// The noise term `g * noise` such that `10 log10(P_sig / P_noise) = snr_db`,
/// with `noise` tiled to the signal length.
pub fn scaled_noise(sig: &AudioSignal, noise: &AudioSignal, snr_db: f64, offset: usize) -> Result<Vec<f64>> {
    contract!(snr_db.is_finite(), "SNR must be finite, got {snr_db}");
    contract!(
        sig.sample_rate == noise.sample_rate,
        "noise at {} Hz cannot be mixed into a {} Hz signal",
        noise.sample_rate,
        sig.sample_rate
    );
    let p_sig = sig.power();
    if p_sig <= 0.0 {
        return Err(Error::Degenerate("cannot set an SNR on a silent signal".into()));
    }
    let n = tile(&noise.samples, sig.len(), offset);
    let p_noise = n.iter().map(|v| v * v).sum::<f64>() / n.len().max(1) as f64;
    if p_noise <= 0.0 {
        return Err(Error::Degenerate("noise source is silent".into()));
    }
    let g = (p_sig / (p_noise * 10f64.powf(snr_db / 10.0))).sqrt();
    Ok(n.into_iter().map(|v| g * v).collect())
}

/// `sig + g * noise` at the requested SNR, peak-normalized only if the sum
/// would clip.
pub fn add_noise(sig: &AudioSignal, noise: &AudioSignal, snr_db: f64, offset: usize) -> Result<AudioSignal> {
    let n = scaled_noise(sig, noise, snr_db, offset)?;
    let mut out = AudioSignal::new(
        sig.samples.iter().zip(&n).map(|(a, b)| a + b).collect(),
        sig.sample_rate,
    );
    out.prevent_clipping();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn measured(sig: &AudioSignal, noise: &[f64]) -> f64 {
        let p = noise.iter().map(|v| v * v).sum::<f64>() / noise.len() as f64;
        10.0 * (sig.power() / p).log10()
    }

    #[test]
    fn unit_powers_at_zero_db_have_unit_gain() {
        let sig = AudioSignal::new(vec![1.0, -1.0, 1.0, -1.0], 16_000);
        let noise = AudioSignal::new(vec![-1.0, -1.0, 1.0, 1.0], 16_000);
        let n = scaled_noise(&sig, &noise, 0.0, 0).unwrap();
        assert_eq!(n, noise.samples);
    }

    #[test]
    fn realized_snr_matches_request() {
        let sig = white_noise(20_000, 16_000, 1);
        let noise = white_noise(3_000, 16_000, 2);
        for snr in [-10.0, 0.0, 20.0, 50.0] {
            let n = scaled_noise(&sig, &noise, snr, 17).unwrap();
            assert_eq!(n.len(), sig.len());
            assert!((measured(&sig, &n) - snr).abs() < 0.1);
        }
        let out = add_noise(&AudioSignal::new(sig.samples.iter().map(|v| v * 0.1).collect(), 16_000), &noise, 20.0, 0).unwrap();
        assert_eq!(out.len(), 20_000);
        assert!(out.peak() <= 1.0);
    }

    #[test]
    fn silent_signal_is_degenerate() {
        let sig = AudioSignal::silence(100, 16_000);
        let noise = white_noise(10, 16_000, 0);
        assert!(matches!(add_noise(&sig, &noise, 10.0, 0), Err(Error::Degenerate(_))));
    }
}
