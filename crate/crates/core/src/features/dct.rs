use std::f64::consts::PI;

fn scale(k: usize, n: usize) -> f64 {
    if k == 0 {
        (1.0 / n as f64).sqrt()
    } else {
        (2.0 / n as f64).sqrt()
    }
}

/// Orthonormal DCT-II.
pub fn dct2_orthonormal(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    (0..n)
        .map(|k| {
            let s: f64 = x
                .iter()
                .enumerate()
                .map(|(i, v)| v * (PI * (i as f64 + 0.5) * k as f64 / n as f64).cos())
                .sum();
            scale(k, n) * s
        })
        .collect()
}

/// Orthonormal DCT-III, the inverse of [`dct2_orthonormal`].
pub fn dct3_orthonormal(c: &[f64]) -> Vec<f64> {
    let n = c.len();
    (0..n)
        .map(|i| {
            c.iter()
                .enumerate()
                .map(|(k, v)| scale(k, n) * v * (PI * (i as f64 + 0.5) * k as f64 / n as f64).cos())
                .sum()
        })
        .collect()
}
