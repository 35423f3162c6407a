//! Respiration records and their preprocessing: band-pass filtering,
//! fixed-length zero padding and segmentation into equal windows.

mod filter;
pub mod io;
pub mod synth;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use filter::{BandPass, Biquad};
pub use synth::{synth_dataset, SynthClass, SYNTH_CLASSES};

pub const DEFAULT_SAMPLE_RATE_HZ: f64 = 100.0;
pub const DEFAULT_LOW_HZ: f64 = 0.05;
pub const DEFAULT_HIGH_HZ: f64 = 0.5;
pub const DEFAULT_PAD_LENGTH: usize = 1150;

#[derive(Debug, Error)]
pub enum SignalError {
    #[error("invalid band edges {low_hz} Hz .. {high_hz} Hz (Nyquist {nyquist_hz} Hz)")]
    InvalidCutoffs {
        low_hz: f64,
        high_hz: f64,
        nyquist_hz: f64,
    },
    #[error("signal has {len} samples, longer than the fixed length {target}")]
    TooLong { len: usize, target: usize },
    #[error("window duration must be positive and span at least one sample, got {0} s")]
    InvalidWindow(f64),
    #[error("recording has no samples")]
    Empty,
    #[error("sample {index} is not finite")]
    NonFinite { index: usize },
    #[error("sample rate {0} Hz is not above twice the {DEFAULT_HIGH_HZ} Hz upper band edge")]
    InvalidSampleRate(f64),
    #[error("unknown label {0:?}")]
    UnknownLabel(String),
    #[error("unknown split {0:?}")]
    UnknownSplit(String),
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Three-level pain label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PainLabel {
    NoPain,
    LowPain,
    HighPain,
}

impl PainLabel {
    pub const ALL: [PainLabel; 3] = [PainLabel::NoPain, PainLabel::LowPain, PainLabel::HighPain];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PainLabel::NoPain => "NoPain",
            PainLabel::LowPain => "LowPain",
            PainLabel::HighPain => "HighPain",
        }
    }
}

impl fmt::Display for PainLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PainLabel {
    type Err = SignalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| SignalError::UnknownLabel(s.to_string()))
    }
}

/// One labelled single-channel recording.
#[derive(Debug, Clone, PartialEq)]
pub struct RespirationRecord {
    samples: Vec<f64>,
    sample_rate_hz: f64,
    pub label: PainLabel,
    pub subject_id: String,
}

impl RespirationRecord {
    pub fn new(
        samples: Vec<f64>,
        sample_rate_hz: f64,
        label: PainLabel,
        subject_id: impl Into<String>,
    ) -> Result<Self, SignalError> {
        if samples.is_empty() {
            return Err(SignalError::Empty);
        }
        if let Some(index) = samples.iter().position(|v| !v.is_finite()) {
            return Err(SignalError::NonFinite { index });
        }
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 2.0 * DEFAULT_HIGH_HZ) {
            return Err(SignalError::InvalidSampleRate(sample_rate_hz));
        }
        Ok(Self {
            samples,
            sample_rate_hz,
            label,
            subject_id: subject_id.into(),
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Same metadata, new samples of any length.
    pub fn with_samples(&self, samples: Vec<f64>) -> Result<Self, SignalError> {
        Self::new(samples, self.sample_rate_hz, self.label, self.subject_id.clone())
    }
}

/// Non-overlapping equal-length windows cut from one signal.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSet {
    pub windows: Vec<Vec<f64>>,
    pub window_seconds: f64,
    pub source_length: usize,
}

impl WindowSet {
    pub fn window_len(&self) -> usize {
        self.windows.first().map_or(0, Vec::len)
    }

    pub fn count(&self) -> usize {
        self.windows.len()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.windows.concat()
    }
}

/// Zero-phase band-pass filter of a recording.
pub fn bandpass_filter(
    rec: &RespirationRecord,
    low_hz: f64,
    high_hz: f64,
) -> Result<RespirationRecord, SignalError> {
    let filter = BandPass::new(low_hz, high_hz, rec.sample_rate_hz)?;
    rec.with_samples(filter.filtfilt(&rec.samples))
}

/// Appends zeros up to `target_len`. Longer inputs are rejected.
pub fn pad_to_fixed(rec: &RespirationRecord, target_len: usize) -> Result<RespirationRecord, SignalError> {
    rec.with_samples(pad_samples(&rec.samples, target_len)?)
}

pub fn pad_samples(samples: &[f64], target_len: usize) -> Result<Vec<f64>, SignalError> {
    if samples.len() > target_len {
        return Err(SignalError::TooLong {
            len: samples.len(),
            target: target_len,
        });
    }
    let mut out = samples.to_vec();
    out.resize(target_len, 0.0);
    Ok(out)
}

/// Number of samples in a window of `window_seconds` at `sample_rate_hz`.
pub fn window_length(window_seconds: f64, sample_rate_hz: f64) -> Result<usize, SignalError> {
    let len = (window_seconds * sample_rate_hz).round();
    if !(window_seconds > 0.0) || !window_seconds.is_finite() || len < 1.0 {
        return Err(SignalError::InvalidWindow(window_seconds));
    }
    Ok(len as usize)
}

/// Windows needed to cover `signal_len` samples.
pub fn window_count(signal_len: usize, window_len: usize) -> usize {
    signal_len.div_ceil(window_len)
}

pub fn segment_windows(rec: &RespirationRecord, window_seconds: f64) -> Result<WindowSet, SignalError> {
    let window_len = window_length(window_seconds, rec.sample_rate_hz)?;
    Ok(WindowSet {
        windows: segment_samples(&rec.samples, window_len),
        window_seconds,
        source_length: rec.len(),
    })
}

/// Splits into `ceil(len / window_len)` windows, zero-filling the tail of the last.
pub fn segment_samples(samples: &[f64], window_len: usize) -> Vec<Vec<f64>> {
    samples
        .chunks(window_len)
        .map(|chunk| {
            let mut w = chunk.to_vec();
            w.resize(window_len, 0.0);
            w
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn record(samples: Vec<f64>) -> RespirationRecord {
        RespirationRecord::new(samples, 100.0, PainLabel::LowPain, "s1").unwrap()
    }

    #[test]
    fn record_validation() {
        assert!(matches!(
            RespirationRecord::new(vec![], 100.0, PainLabel::NoPain, "x"),
            Err(SignalError::Empty)
        ));
        assert!(matches!(
            RespirationRecord::new(vec![1.0, f64::INFINITY], 100.0, PainLabel::NoPain, "x"),
            Err(SignalError::NonFinite { index: 1 })
        ));
        assert!(RespirationRecord::new(vec![1.0], 1.0, PainLabel::NoPain, "x").is_err());
    }

    #[test]
    fn label_round_trip() {
        for l in PainLabel::ALL {
            assert_eq!(l.as_str().parse::<PainLabel>().unwrap(), l);
            assert_eq!(PainLabel::from_index(l.index()), Some(l));
        }
        assert!("Medium".parse::<PainLabel>().is_err());
    }

    #[test]
    fn zero_signal_filters_to_zero() {
        let out = bandpass_filter(&record(vec![0.0; 1000]), 0.05, 0.5).unwrap();
        assert!(out.samples().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn padding_examples() {
        let padded = pad_to_fixed(&record(vec![1.0; 1000]), 1150).unwrap();
        assert_eq!(padded.len(), 1150);
        assert!(padded.samples()[1000..].iter().all(|v| *v == 0.0));
        assert!(padded.samples()[..1000].iter().all(|v| *v == 1.0));

        let same = record((0..1150).map(|i| i as f64).collect());
        assert_eq!(pad_to_fixed(&same, 1150).unwrap(), same);

        let one = pad_to_fixed(&record(vec![2.5]), 1150).unwrap();
        assert_eq!(one.samples()[0], 2.5);
        assert_eq!(one.samples()[1..].iter().filter(|v| **v == 0.0).count(), 1149);

        assert!(matches!(
            pad_to_fixed(&record(vec![0.0; 1151]), 1150),
            Err(SignalError::TooLong { len: 1151, target: 1150 })
        ));
    }

    #[test]
    fn windowing_examples() {
        let rec = record(vec![1.0; 1150]);
        let w5 = segment_windows(&rec, 5.0).unwrap();
        assert_eq!(w5.count(), 3);
        assert!(w5.windows.iter().all(|w| w.len() == 500));
        assert_eq!(w5.windows[2][150..].iter().filter(|v| **v == 0.0).count(), 350);
        assert!(w5.windows[2][..150].iter().all(|v| *v == 1.0));

        let w1 = segment_windows(&rec, 1.0).unwrap();
        assert_eq!(w1.count(), 12);
        assert_eq!(w1.windows[11][50..].len(), 50);
        assert!(w1.windows[11][50..].iter().all(|v| *v == 0.0));

        let short = segment_windows(&record(vec![1.0; 500]), 5.0).unwrap();
        assert_eq!(short.count(), 1);
        assert!(short.windows[0].iter().all(|v| *v == 1.0));

        assert!(segment_windows(&rec, 0.0).is_err());
        assert!(segment_windows(&rec, -1.0).is_err());
        assert!(segment_windows(&rec, 0.001).is_err());
    }

    proptest! {
        #[test]
        fn windows_flatten_to_padded_input(
            samples in proptest::collection::vec(-10.0f64..10.0, 1..400),
            window_len in 1usize..60,
        ) {
            let windows = segment_samples(&samples, window_len);
            let flat = windows.concat();
            prop_assert_eq!(windows.len(), window_count(samples.len(), window_len));
            prop_assert!(windows.iter().all(|w| w.len() == window_len));
            prop_assert_eq!(&flat[..samples.len()], &samples[..]);
            prop_assert!(flat[samples.len()..].iter().all(|v| *v == 0.0));
        }

        #[test]
        fn padding_preserves_norm(samples in proptest::collection::vec(-10.0f64..10.0, 1..1150)) {
            let padded = pad_samples(&samples, 1150).unwrap();
            let norm = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>();
            prop_assert_eq!(norm(&padded), norm(&samples));
        }

        #[test]
        fn filter_is_linear(
            x in proptest::collection::vec(-5.0f64..5.0, 200..400),
            a in -3.0f64..3.0,
            b in -3.0f64..3.0,
        ) {
            let y: Vec<f64> = x.iter().enumerate().map(|(i, v)| (i as f64 * 0.07).sin() - 0.3 * v).collect();
            let bp = BandPass::new(0.05, 0.5, 100.0).unwrap();
            let mixed: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
            let lhs = bp.filtfilt(&mixed);
            let fx = bp.filtfilt(&x);
            let fy = bp.filtfilt(&y);
            let scale = lhs.iter().map(|v| v.abs()).fold(1e-3, f64::max);
            for i in 0..lhs.len() {
                let rhs = a * fx[i] + b * fy[i];
                prop_assert!((lhs[i] - rhs).abs() <= 1e-5 * scale);
            }
        }
    }
}
