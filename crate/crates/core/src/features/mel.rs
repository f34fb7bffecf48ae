use std::sync::OnceLock;

use super::{bin_frequency, FRAME_LEN, N_MELS};
use crate::audio::WORKING_RATE;

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Center frequencies (Hz) of the 256 filters, evaluated from the Mel scale
/// directly rather than from the filter bank.
pub fn mel_filter_centers() -> Vec<f64> {
    let top = hz_to_mel(WORKING_RATE as f64 / 2.0);
    (1..=N_MELS)
        .map(|m| mel_to_hz(top * m as f64 / (N_MELS + 1) as f64))
        .collect()
}

/// Triangular HTK-scale filters spanning 0 Hz to Nyquist, stored sparsely.
pub struct MelFilterBank {
    filters: Vec<(usize, Vec<f64>)>,
}

impl MelFilterBank {
    pub fn standard() -> &'static MelFilterBank {
        static BANK: OnceLock<MelFilterBank> = OnceLock::new();
        BANK.get_or_init(|| MelFilterBank::new(N_MELS, FRAME_LEN / 2 + 1))
    }

    fn new(n_mels: usize, n_bins: usize) -> Self {
        let top = hz_to_mel(WORKING_RATE as f64 / 2.0);
        let edges: Vec<f64> = (0..n_mels + 2)
            .map(|i| mel_to_hz(top * i as f64 / (n_mels + 1) as f64))
            .collect();
        let filters = (0..n_mels)
            .map(|m| {
                let (lo, center, hi) = (edges[m], edges[m + 1], edges[m + 2]);
                let weights: Vec<(usize, f64)> = (0..n_bins)
                    .filter_map(|k| {
                        let f = bin_frequency(k);
                        let w = ((f - lo) / (center - lo)).min((hi - f) / (hi - center));
                        (w > 0.0).then_some((k, w))
                    })
                    .collect();
                match weights.first() {
                    Some(&(start, _)) => (start, weights.iter().map(|&(_, w)| w).collect()),
                    None => (0, Vec::new()),
                }
            })
            .collect();
        Self { filters }
    }

    pub fn apply(&self, power: &[f64], out: &mut [f64]) {
        for (o, (start, w)) in out.iter_mut().zip(&self.filters) {
            *o = power[*start..*start + w.len()]
                .iter()
                .zip(w)
                .map(|(p, w)| p * w)
                .sum();
        }
    }

    pub fn len(&self) -> usize {
        self.filters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.filters.is_empty()
    }
}
