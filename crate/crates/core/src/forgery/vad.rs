use crate::audio::AudioSignal;

/// 25 ms at 16 kHz.
pub const VAD_FRAME: usize = 400;
/// 10 ms at 16 kHz.
pub const VAD_HOP: usize = 160;
pub const MIN_SILENCE_SECONDS: f64 = 0.1;
/// -45 dBFS as a mean-square energy.
pub const ABSOLUTE_FLOOR: f64 = 3.162_277_660_168_379_4e-5;

/// Mean-square energy of each 25 ms frame, 10 ms apart (frame length and
/// hop scale with the sample rate). A signal shorter than one frame is a
/// single frame.
pub fn frame_energies(sig: &AudioSignal) -> Vec<f64> {
    let (frame, hop) = frame_geometry(sig.sample_rate);
    let x = &sig.samples;
    if x.is_empty() {
        return Vec::new();
    }
    let n = if x.len() <= frame {
        1
    } else {
        1 + (x.len() - frame) / hop
    };
    (0..n)
        .map(|i| {
            let s = &x[i * hop..(i * hop + frame).min(x.len())];
            s.iter().map(|v| v * v).sum::<f64>() / s.len() as f64
        })
        .collect()
}

fn frame_geometry(rate: u32) -> (usize, usize) {
    let frame = (rate as usize * VAD_FRAME / 16_000).max(1);
    let hop = (rate as usize * VAD_HOP / 16_000).max(1);
    (frame, hop)
}

/// Energy below which a frame counts as non-voice-active.
///
/// The noise floor is the 10th-percentile frame energy. Four times the
/// floor, capped at a tenth of the loudest frame so that a stationary loud
/// signal is never silent, and never below -45 dBFS.
pub fn vad_threshold(energies: &[f64]) -> f64 {
    if energies.is_empty() {
        return ABSOLUTE_FLOOR;
    }
    let mut sorted = energies.to_vec();
    sorted.sort_by(f64::total_cmp);
    let floor = sorted[(sorted.len() - 1) / 10];
    let loudest = sorted[sorted.len() - 1];
    (4.0 * floor).min(0.1 * loudest).max(ABSOLUTE_FLOOR)
}

/// Maximal non-voice-active intervals in seconds, sorted and disjoint, each
/// at least 100 ms long. A run touching the first or last frame extends to
/// the signal boundary.
pub fn detect_silence(sig: &AudioSignal) -> Vec<(f64, f64)> {
    let energies = frame_energies(sig);
    if energies.is_empty() {
        return Vec::new();
    }
    let threshold = vad_threshold(&energies);
    let (frame, hop) = frame_geometry(sig.sample_rate);
    let rate = sig.sample_rate as f64;
    let last = energies.len() - 1;
    let mut out = Vec::new();
    let mut i = 0;
    while i <= last {
        if energies[i] >= threshold {
            i += 1;
            continue;
        }
        let mut j = i;
        while j < last && energies[j + 1] < threshold {
            j += 1;
        }
        let start = if i == 0 { 0 } else { i * hop };
        let end = if j == last {
            sig.len()
        } else {
            (j * hop + frame).min(sig.len())
        };
        let (a, b) = (start as f64 / rate, end as f64 / rate);
        if b - a >= MIN_SILENCE_SECONDS - 1e-12 {
            out.push((a, b));
        }
        i = j + 1;
    }
    out
}
