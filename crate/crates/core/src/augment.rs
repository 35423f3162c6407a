//! Training-time augmentations applied to the full-length signal before
//! filtering and windowing.
//!
//! Each augmentation fires with a per-sample probability that is itself drawn
//! uniformly from a configured range. Order is fixed: polarity inversion,
//! Gaussian noise, block masking. They stack independently.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum AugmentError {
    #[error("{name} range [{lo}, {hi}] is invalid (must satisfy {min} <= lo <= hi <= {max})")]
    InvalidRange {
        name: &'static str,
        lo: f64,
        hi: f64,
        min: f64,
        max: f64,
    },
    #[error("block masking needs at least {MIN_MASK_LEN} samples, got {0}")]
    TooShort(usize),
}

/// Shortest signal [`mask_block`] accepts.
pub const MIN_MASK_LEN: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentConfig {
    pub polarity_prob: [f64; 2],
    pub noise_prob: [f64; 2],
    pub mask_prob: [f64; 2],
    pub mask_fraction: [f64; 2],
    pub noise_k: [f64; 2],
}

impl Default for AugmentConfig {
    /// The 20 % | 20 % setting used for the final configuration.
    fn default() -> Self {
        Self {
            polarity_prob: [0.2, 0.2],
            noise_prob: [0.2, 0.2],
            mask_prob: [0.2, 0.2],
            mask_fraction: [0.10, 0.30],
            noise_k: [1.0, 1000.0],
        }
    }
}

impl AugmentConfig {
    /// Every augmentation disabled.
    pub fn disabled() -> Self {
        Self {
            polarity_prob: [0.0, 0.0],
            noise_prob: [0.0, 0.0],
            mask_prob: [0.0, 0.0],
            ..Self::default()
        }
    }

    /// Every augmentation applied to every sample.
    pub fn always() -> Self {
        Self {
            polarity_prob: [1.0, 1.0],
            noise_prob: [1.0, 1.0],
            mask_prob: [1.0, 1.0],
            ..Self::default()
        }
    }

    /// Same activation range for all three augmentations.
    pub fn with_probability(lo: f64, hi: f64) -> Self {
        Self {
            polarity_prob: [lo, hi],
            noise_prob: [lo, hi],
            mask_prob: [lo, hi],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), AugmentError> {
        let check = |name, [lo, hi]: [f64; 2], min: f64, max: f64| {
            if lo.is_finite() && hi.is_finite() && min <= lo && lo <= hi && hi <= max {
                Ok(())
            } else {
                Err(AugmentError::InvalidRange { name, lo, hi, min, max })
            }
        };
        check("polarity_prob", self.polarity_prob, 0.0, 1.0)?;
        check("noise_prob", self.noise_prob, 0.0, 1.0)?;
        check("mask_prob", self.mask_prob, 0.0, 1.0)?;
        check("mask_fraction", self.mask_fraction, 0.0, 1.0)?;
        check("noise_k", self.noise_k, f64::MIN_POSITIVE, f64::MAX)?;
        Ok(())
    }
}

/// Where a masked block sits inside the signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskAnchor {
    Begin,
    Center,
    End,
}

impl MaskAnchor {
    pub const ALL: [MaskAnchor; 3] = [MaskAnchor::Begin, MaskAnchor::Center, MaskAnchor::End];

    /// First masked index for a block of `block` samples in a signal of `len`.
    pub fn offset(self, len: usize, block: usize) -> usize {
        match self {
            MaskAnchor::Begin => 0,
            MaskAnchor::Center => (len - block) / 2,
            MaskAnchor::End => len - block,
        }
    }
}

/// Which augmentations fired for one sample.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Applied {
    pub polarity: bool,
    pub noise: bool,
    pub mask: bool,
}

pub fn polarity_invert(x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| -v).collect()
}

/// Draws the SNR for one sample: `k ~ U(k_lo, k_hi)`, `SNR ~ U(0.001 k, 0.005 k)`.
pub fn sample_snr<R: Rng + ?Sized>(rng: &mut R, k_range: [f64; 2]) -> f64 {
    let k = uniform(rng, k_range);
    uniform(rng, [0.001 * k, 0.005 * k])
}

/// Adds Gaussian noise with SNR drawn per sample over the default `k` range.
pub fn add_noise_snr<R: Rng + ?Sized>(x: &[f64], rng: &mut R) -> Vec<f64> {
    let snr = sample_snr(rng, [1.0, 1000.0]);
    add_noise_with_snr(x, snr, rng)
}

/// Adds zero-mean Gaussian noise with variance `signal_power / snr`, where
/// `snr` is a linear power ratio.
///
/// Signals with zero power are returned unchanged.
pub fn add_noise_with_snr<R: Rng + ?Sized>(x: &[f64], snr: f64, rng: &mut R) -> Vec<f64> {
    let power = x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64;
    if power == 0.0 || !(snr > 0.0) {
        log::warn!("noise augmentation skipped: signal power {power}, snr {snr}");
        return x.to_vec();
    }
    let noise = Normal::new(0.0, (power / snr).sqrt()).expect("finite positive std");
    x.iter().map(|v| v + noise.sample(rng)).collect()
}

/// Zeroes one contiguous block covering a random 10–30 % of the signal.
pub fn mask_block<R: Rng + ?Sized>(x: &[f64], rng: &mut R) -> Result<Vec<f64>, AugmentError> {
    mask_block_in_range(x, [0.10, 0.30], rng)
}

pub fn mask_block_in_range<R: Rng + ?Sized>(
    x: &[f64],
    fraction_range: [f64; 2],
    rng: &mut R,
) -> Result<Vec<f64>, AugmentError> {
    if x.len() < MIN_MASK_LEN {
        return Err(AugmentError::TooShort(x.len()));
    }
    let fraction = uniform(rng, fraction_range);
    let anchor = MaskAnchor::ALL[rng.random_range(0..3)];
    Ok(mask_block_with(x, fraction, anchor))
}

/// Zeroes `round(fraction · len)` contiguous samples placed by `anchor`.
pub fn mask_block_with(x: &[f64], fraction: f64, anchor: MaskAnchor) -> Vec<f64> {
    let len = x.len();
    let block = ((fraction * len as f64).round() as usize).min(len);
    let start = anchor.offset(len, block);
    let mut out = x.to_vec();
    out[start..start + block].fill(0.0);
    out
}

/// Applies polarity inversion, noise and masking, each with a probability
/// drawn from its configured range.
pub fn apply_augmentations<R: Rng + ?Sized>(
    x: &[f64],
    cfg: &AugmentConfig,
    rng: &mut R,
) -> (Vec<f64>, Applied) {
    let mut out = x.to_vec();
    let mut applied = Applied::default();
    if fires(rng, cfg.polarity_prob) {
        out = polarity_invert(&out);
        applied.polarity = true;
    }
    if fires(rng, cfg.noise_prob) {
        let snr = sample_snr(rng, cfg.noise_k);
        out = add_noise_with_snr(&out, snr, rng);
        applied.noise = true;
    }
    if fires(rng, cfg.mask_prob) && out.len() >= MIN_MASK_LEN {
        out = mask_block_in_range(&out, cfg.mask_fraction, rng).expect("length checked");
        applied.mask = true;
    }
    (out, applied)
}

fn fires<R: Rng + ?Sized>(rng: &mut R, range: [f64; 2]) -> bool {
    let p = uniform(rng, range);
    rng.random::<f64>() < p
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, [lo, hi]: [f64; 2]) -> f64 {
    // Always consume one draw so the stream layout does not depend on the range.
    let u: f64 = rng.random();
    lo + (hi - lo) * u
}
