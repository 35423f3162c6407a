//! Synthetic three-class breathing signals for desk-scale experiments.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{PainLabel, RespirationRecord};

/// Generator parameters for one class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthClass {
    pub label: PainLabel,
    /// Mean breathing rate.
    pub center_hz: f64,
    /// Mean peak amplitude.
    pub amplitude: f64,
}

/// Class table. All rates sit inside the 0.05–0.5 Hz pass band.
pub const SYNTH_CLASSES: [SynthClass; 3] = [
    SynthClass { label: PainLabel::NoPain, center_hz: 0.15, amplitude: 1.0 },
    SynthClass { label: PainLabel::LowPain, center_hz: 0.25, amplitude: 1.5 },
    SynthClass { label: PainLabel::HighPain, center_hz: 0.40, amplitude: 2.0 },
];

/// Per-record uniform jitter of the breathing rate, in Hz.
pub const RATE_JITTER_HZ: f64 = 0.02;
/// Per-record relative jitter of the amplitude.
pub const AMPLITUDE_JITTER: f64 = 0.1;
/// Depth of the slow amplitude modulation.
pub const MODULATION_DEPTH: f64 = 0.2;
/// Range of the amplitude modulation rate, in Hz.
pub const MODULATION_HZ: (f64, f64) = (0.02, 0.08);
/// Standard deviation of the additive white noise.
pub const NOISE_STD: f64 = 0.05;

/// `n_per_class` records of every class, class-major order, deterministic in `seed`.
pub fn synth_dataset(n_per_class: usize, duration_s: f64, sample_rate_hz: f64, seed: u64) -> Vec<RespirationRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, NOISE_STD).expect("valid noise std");
    let len = ((duration_s * sample_rate_hz).round() as usize).max(1);
    let mut out = Vec::with_capacity(3 * n_per_class);
    for class in SYNTH_CLASSES {
        for i in 0..n_per_class {
            let rate = class.center_hz + rng.random_range(-RATE_JITTER_HZ..=RATE_JITTER_HZ);
            let amp = class.amplitude * (1.0 + rng.random_range(-AMPLITUDE_JITTER..=AMPLITUDE_JITTER));
            let phase = rng.random_range(0.0..2.0 * PI);
            let mod_rate = rng.random_range(MODULATION_HZ.0..=MODULATION_HZ.1);
            let mod_phase = rng.random_range(0.0..2.0 * PI);
            let samples = (0..len)
                .map(|n| {
                    let t = n as f64 / sample_rate_hz;
                    let envelope = 1.0 + MODULATION_DEPTH * (2.0 * PI * mod_rate * t + mod_phase).sin();
                    amp * envelope * (2.0 * PI * rate * t + phase).sin() + noise.sample(&mut rng)
                })
                .collect();
            let subject = format!("synth-{}-{i:04}", class.label);
            out.push(
                RespirationRecord::new(samples, sample_rate_hz, class.label, subject)
                    .expect("generated samples are finite"),
            );
        }
    }
    out
}
