//! Zero-phase Butterworth band-pass built from two RBJ biquads.
//!
//! A second-order high-pass at the lower edge and a second-order low-pass at
//! the upper edge give a fourth-order band-pass. The cascade is run forward
//! and then backward over an odd extension of the signal, with the section
//! states initialised to their step steady state, so the result has no phase
//! shift.

use std::f64::consts::PI;

use super::SignalError;

const BUTTERWORTH_Q: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Normalised second-order section (`a0 == 1`), Direct Form II transposed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    pub fn lowpass(cutoff_hz: f64, sample_rate_hz: f64) -> Self {
        let (cos_w, alpha) = prewarp(cutoff_hz, sample_rate_hz);
        let a0 = 1.0 + alpha;
        let b1 = (1.0 - cos_w) / a0;
        Self {
            b: [b1 / 2.0, b1, b1 / 2.0],
            a: [-2.0 * cos_w / a0, (1.0 - alpha) / a0],
        }
    }

    pub fn highpass(cutoff_hz: f64, sample_rate_hz: f64) -> Self {
        let (cos_w, alpha) = prewarp(cutoff_hz, sample_rate_hz);
        let a0 = 1.0 + alpha;
        let b1 = -(1.0 + cos_w) / a0;
        Self {
            b: [-b1 / 2.0, b1, -b1 / 2.0],
            a: [-2.0 * cos_w / a0, (1.0 - alpha) / a0],
        }
    }

    /// Gain at DC.
    fn dc_gain(&self) -> f64 {
        (self.b[0] + self.b[1] + self.b[2]) / (1.0 + self.a[0] + self.a[1])
    }

    /// State after an infinitely long constant input of 1.
    fn step_state(&self) -> [f64; 2] {
        let g = self.dc_gain();
        let z2 = self.b[2] - self.a[1] * g;
        let z1 = self.b[1] - self.a[0] * g + z2;
        [z1, z2]
    }

    /// Magnitude response at `freq_hz`.
    pub fn magnitude(&self, freq_hz: f64, sample_rate_hz: f64) -> f64 {
        let w = 2.0 * PI * freq_hz / sample_rate_hz;
        let (c1, s1, c2, s2) = (w.cos(), w.sin(), (2.0 * w).cos(), (2.0 * w).sin());
        let num_re = self.b[0] + self.b[1] * c1 + self.b[2] * c2;
        let num_im = -(self.b[1] * s1 + self.b[2] * s2);
        let den_re = 1.0 + self.a[0] * c1 + self.a[1] * c2;
        let den_im = -(self.a[0] * s1 + self.a[1] * s2);
        (num_re.hypot(num_im)) / (den_re.hypot(den_im))
    }

    fn run(&self, x: &mut [f64], state: [f64; 2]) {
        let [mut z1, mut z2] = state;
        for v in x.iter_mut() {
            let input = *v;
            let y = self.b[0] * input + z1;
            z1 = self.b[1] * input - self.a[0] * y + z2;
            z2 = self.b[2] * input - self.a[1] * y;
            *v = y;
        }
    }
}

fn prewarp(cutoff_hz: f64, sample_rate_hz: f64) -> (f64, f64) {
    let w0 = 2.0 * PI * cutoff_hz / sample_rate_hz;
    (w0.cos(), w0.sin() / (2.0 * BUTTERWORTH_Q))
}

/// Band-pass filter design for one sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct BandPass {
    sections: [Biquad; 2],
    low_hz: f64,
    sample_rate_hz: f64,
}

impl BandPass {
    pub fn new(low_hz: f64, high_hz: f64, sample_rate_hz: f64) -> Result<Self, SignalError> {
        let nyquist = sample_rate_hz / 2.0;
        let valid = low_hz.is_finite()
            && high_hz.is_finite()
            && 0.0 < low_hz
            && low_hz < high_hz
            && high_hz < nyquist;
        if !valid {
            return Err(SignalError::InvalidCutoffs {
                low_hz,
                high_hz,
                nyquist_hz: nyquist,
            });
        }
        Ok(Self {
            sections: [
                Biquad::highpass(low_hz, sample_rate_hz),
                Biquad::lowpass(high_hz, sample_rate_hz),
            ],
            low_hz,
            sample_rate_hz,
        })
    }

    pub fn sections(&self) -> &[Biquad; 2] {
        &self.sections
    }

    /// One-pass magnitude response; the zero-phase filter applies it twice.
    pub fn magnitude(&self, freq_hz: f64) -> f64 {
        self.sections
            .iter()
            .map(|s| s.magnitude(freq_hz, self.sample_rate_hz))
            .product()
    }

    /// Odd-extension length: three periods of the lower edge, capped by the signal.
    fn pad_len(&self, n: usize) -> usize {
        let wanted = (3.0 * self.sample_rate_hz / self.low_hz).ceil() as usize;
        wanted.min(n.saturating_sub(1))
    }

    /// Forward-backward filtering; output has the input's length.
    pub fn filtfilt(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len();
        if n == 0 {
            return Vec::new();
        }
        let pad = self.pad_len(n);
        let mut ext = Vec::with_capacity(n + 2 * pad);
        ext.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
        ext.extend_from_slice(x);
        ext.extend((1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));

        self.cascade(&mut ext);
        ext.reverse();
        self.cascade(&mut ext);
        ext.reverse();
        ext[pad..pad + n].to_vec()
    }

    fn cascade(&self, x: &mut [f64]) {
        let mut level = x[0];
        for section in &self.sections {
            let [z1, z2] = section.step_state();
            section.run(x, [z1 * level, z2 * level]);
            level *= section.dc_gain();
        }
    }
}
