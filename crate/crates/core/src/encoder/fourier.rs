use std::f64::consts::PI;

use crate::numerics::Tensor;

/// Width of the encoded token: raw value, `K` sines, `K` cosines, position.
pub fn token_dim(bands: usize) -> usize {
    1 + 2 * bands + 1
}

/// Band frequencies, geometrically spaced from 1 to `max_freq`.
pub fn band_frequencies(bands: usize, max_freq: f64) -> Vec<f64> {
    match bands {
        0 => Vec::new(),
        1 => vec![1.0],
        k => (0..k)
            .map(|i| max_freq.powf(i as f64 / (k - 1) as f64))
            .collect(),
    }
}

/// Normalised position of sample `t` out of `len`, in `[-1, 1]`.
///
/// A single sample sits at `-1`.
pub fn position(t: usize, len: usize) -> f64 {
    if len <= 1 {
        -1.0
    } else {
        -1.0 + 2.0 * t as f64 / (len - 1) as f64
    }
}

/// Encodes a signal as a `len × (1 + 2K + 1)` token matrix with columns
/// `[x_t, sin(π f_1 p) … sin(π f_K p), cos(π f_1 p) … cos(π f_K p), p]`.
pub fn fourier_encode(signal: &[f64], bands: usize, max_freq: f64) -> Tensor {
    let freqs = band_frequencies(bands, max_freq);
    let width = token_dim(bands);
    let len = signal.len();
    let mut data = Vec::with_capacity(len * width);
    for (t, &x) in signal.iter().enumerate() {
        let p = position(t, len);
        data.push(x);
        data.extend(freqs.iter().map(|f| (PI * f * p).sin()));
        data.extend(freqs.iter().map(|f| (PI * f * p).cos()));
        data.push(p);
    }
    Tensor::new(&[len, width], data).expect("finite signal")
}
