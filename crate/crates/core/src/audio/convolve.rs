use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::{AudioSignal, ImpulseResponse};
use crate::error::{contract, Result};

/// Full linear convolution (`len(x) + len(h) - 1` samples) by FFT overlap-add.
pub fn fft_convolution(x: &[f64], h: &[f64]) -> Vec<f64> {
    if x.is_empty() || h.is_empty() {
        return Vec::new();
    }
    let out_len = x.len() + h.len() - 1;
    let fft_len = (2 * h.len()).next_power_of_two().max(64);
    let block = fft_len - h.len() + 1;

    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(fft_len);
    let inv = planner.plan_fft_inverse(fft_len);

    let mut kernel: Vec<Complex<f64>> = h
        .iter()
        .map(|&v| Complex::new(v, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(fft_len)
        .collect();
    fwd.process(&mut kernel);

    let scale = 1.0 / fft_len as f64;
    let mut out = vec![0.0; out_len];
    let mut buf = vec![Complex::new(0.0, 0.0); fft_len];
    for (b, chunk) in x.chunks(block).enumerate() {
        buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
        for (dst, &v) in buf.iter_mut().zip(chunk) {
            dst.re = v;
        }
        fwd.process(&mut buf);
        buf.iter_mut().zip(&kernel).for_each(|(a, k)| *a *= k);
        inv.process(&mut buf);
        let offset = b * block;
        let valid = (chunk.len() + h.len() - 1).min(out_len - offset);
        for (o, c) in out[offset..offset + valid].iter_mut().zip(&buf) {
            *o += c.re * scale;
        }
    }
    out
}

/// O(n·m) reference convolution.
pub fn direct_convolution(x: &[f64], h: &[f64]) -> Vec<f64> {
    if x.is_empty() || h.is_empty() {
        return Vec::new();
    }
    let mut out = vec![0.0; x.len() + h.len() - 1];
    for (i, &xi) in x.iter().enumerate() {
        for (j, &hj) in h.iter().enumerate() {
            out[i + j] += xi * hj;
        }
    }
    out
}

/// Applies a room response. The result keeps the input length and is
/// peak-normalized to `min(1, input peak)`.
pub fn convolve(sig: &AudioSignal, ir: &ImpulseResponse) -> Result<AudioSignal> {
    contract!(
        sig.sample_rate == ir.sample_rate,
        "sample rate mismatch: signal {} Hz, impulse response {} Hz",
        sig.sample_rate,
        ir.sample_rate
    );
    let mut wet = fft_convolution(&sig.samples, &ir.taps);
    wet.truncate(sig.len());
    let mut out = AudioSignal::new(wet, sig.sample_rate);
    let target = sig.peak().min(1.0);
    if target > 0.0 {
        out.normalize_peak(target);
    }
    Ok(out)
}
