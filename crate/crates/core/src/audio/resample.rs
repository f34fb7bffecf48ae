use super::AudioSignal;
use crate::error::{contract, Result};

pub const KAISER_BETA: f64 = 8.0;
pub const TAPS_PER_PHASE: usize = 64;

/// Fraction of the narrower Nyquist band kept by the anti-aliasing filter.
const ROLLOFF: f64 = 0.95;

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Zeroth-order modified Bessel function of the first kind (power series).
fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..64 {
        term *= q / (k as f64 * k as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

/// Polyphase bank: `phases[p][j]` weights input sample `i - HALF + 1 + j`
/// for an output located `p / up` samples after input `i`.
struct PolyphaseBank {
    phases: Vec<[f64; TAPS_PER_PHASE]>,
}

const HALF: isize = (TAPS_PER_PHASE / 2) as isize;

impl PolyphaseBank {
    fn new(up: u64, down: u64) -> Self {
        let cutoff = 0.5 * ROLLOFF * (up as f64 / down as f64).min(1.0);
        let i0_beta = bessel_i0(KAISER_BETA);
        let half = HALF as f64;
        let phases = (0..up)
            .map(|p| {
                let frac = p as f64 / up as f64;
                let mut taps = [0.0; TAPS_PER_PHASE];
                for (j, tap) in taps.iter_mut().enumerate() {
                    let x = (j as isize - HALF + 1) as f64 - frac;
                    let r = (x / half).clamp(-1.0, 1.0);
                    let window = bessel_i0(KAISER_BETA * (1.0 - r * r).sqrt()) / i0_beta;
                    *tap = 2.0 * cutoff * sinc(2.0 * cutoff * x) * window;
                }
                // unit DC gain per phase
                let sum: f64 = taps.iter().sum();
                taps.iter_mut().for_each(|t| *t /= sum);
                taps
            })
            .collect();
        Self { phases }
    }
}

/// Band-limited rate conversion with a Kaiser-windowed sinc polyphase filter.
///
/// Output length is `round(len * target / source)`; samples beyond the
/// input edges are treated as zero.
pub fn resample(sig: &AudioSignal, target_rate: u32) -> Result<AudioSignal> {
    contract!(target_rate > 0, "target rate must be positive");
    contract!(sig.sample_rate > 0, "source rate must be positive");
    if target_rate == sig.sample_rate {
        return Ok(sig.clone());
    }
    let g = gcd(target_rate as u64, sig.sample_rate as u64);
    let up = target_rate as u64 / g;
    let down = sig.sample_rate as u64 / g;
    let bank = PolyphaseBank::new(up, down);

    let n_in = sig.samples.len() as isize;
    let n_out = ((sig.samples.len() as f64) * up as f64 / down as f64).round() as usize;
    let x = &sig.samples;
    let out = (0..n_out as u64)
        .map(|n| {
            let pos = n * down;
            let base = (pos / up) as isize;
            let taps = &bank.phases[(pos % up) as usize];
            let start = base - HALF + 1;
            let mut acc = 0.0;
            for (j, &t) in taps.iter().enumerate() {
                let idx = start + j as isize;
                if idx >= 0 && idx < n_in {
                    acc += t * x[idx as usize];
                }
            }
            acc
        })
        .collect();
    Ok(AudioSignal::new(out, target_rate))
}
