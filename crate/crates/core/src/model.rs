//! The full classifier: preprocessing, one shared encoder for every window
//! and for the whole signal, and a fusion head chosen by name.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoder::{Encoder, EncoderConfig, EncoderError};
use crate::fusion::{FusionDims, FusionError, FusionInputs, FusionOutput, FusionRegistry, FusionStrategy, DEFAULT_FUSION};
use crate::numerics::{GradTape, NumericsError, Tensor};
use crate::params::{Forward, ParamStore};
use crate::signal::{
    pad_samples, segment_samples, window_count, window_length, BandPass, PainLabel, SignalError, DEFAULT_HIGH_HZ,
    DEFAULT_LOW_HZ, DEFAULT_PAD_LENGTH, DEFAULT_SAMPLE_RATE_HZ,
};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("invalid model configuration: {0}")]
    InvalidConfig(String),
}

/// How a raw recording becomes encoder input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Preprocess {
    pub sample_rate_hz: f64,
    /// Apply the zero-phase band-pass before padding.
    pub filter: bool,
    pub low_hz: f64,
    pub high_hz: f64,
    pub pad_length: usize,
    pub window_seconds: f64,
}

impl Default for Preprocess {
    fn default() -> Self {
        Self {
            sample_rate_hz: DEFAULT_SAMPLE_RATE_HZ,
            filter: true,
            low_hz: DEFAULT_LOW_HZ,
            high_hz: DEFAULT_HIGH_HZ,
            pad_length: DEFAULT_PAD_LENGTH,
            window_seconds: 5.0,
        }
    }
}

/// Encoder-ready input: the padded signal and its windows.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedInput {
    pub windows: Vec<Vec<f64>>,
    pub full: Vec<f64>,
}

impl Preprocess {
    pub fn validate(&self) -> Result<(), SignalError> {
        if self.pad_length == 0 {
            return Err(SignalError::Empty);
        }
        if self.filter {
            BandPass::new(self.low_hz, self.high_hz, self.sample_rate_hz)?;
        }
        window_length(self.window_seconds, self.sample_rate_hz)?;
        Ok(())
    }

    pub fn window_len(&self) -> Result<usize, SignalError> {
        window_length(self.window_seconds, self.sample_rate_hz)
    }

    /// Windows per padded signal.
    pub fn n_windows(&self) -> Result<usize, SignalError> {
        Ok(window_count(self.pad_length, self.window_len()?))
    }

    /// Filter, pad and window one recording's samples.
    pub fn prepare(&self, samples: &[f64]) -> Result<PreparedInput, SignalError> {
        if samples.is_empty() {
            return Err(SignalError::Empty);
        }
        let filtered = if self.filter {
            BandPass::new(self.low_hz, self.high_hz, self.sample_rate_hz)?.filtfilt(samples)
        } else {
            samples.to_vec()
        };
        let full = pad_samples(&filtered, self.pad_length)?;
        let windows = segment_samples(&full, self.window_len()?);
        Ok(PreparedInput { windows, full })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub fusion: String,
    pub n_windows: usize,
    pub n_classes: usize,
}

impl ModelConfig {
    pub fn new(encoder: EncoderConfig, fusion: impl Into<String>, n_windows: usize) -> Self {
        Self {
            encoder,
            fusion: fusion.into(),
            n_windows,
            n_classes: PainLabel::ALL.len(),
        }
    }

    pub fn fusion_dims(&self) -> FusionDims {
        FusionDims {
            embed_dim: self.encoder.out_dim,
            n_windows: self.n_windows,
            n_classes: self.n_classes,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        self.encoder.validate()?;
        if self.n_windows == 0 {
            return Err(ModelError::InvalidConfig("n_windows must be at least 1".into()));
        }
        if self.n_classes < 2 {
            return Err(ModelError::InvalidConfig("n_classes must be at least 2".into()));
        }
        Ok(())
    }
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::new(EncoderConfig::default(), DEFAULT_FUSION, 3)
    }
}

/// Result of one inference pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub logits: Vec<f64>,
    pub class: usize,
    pub selected: Option<usize>,
}

#[derive(Debug)]
pub struct RespModel {
    config: ModelConfig,
    pub store: ParamStore,
    encoder: Encoder,
    fusion: Box<dyn FusionStrategy>,
}

impl RespModel {
    /// Builds the encoder then the fusion head from one seeded stream.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        Self::with_registry(config, seed, &FusionRegistry::builtin())
    }

    pub fn with_registry(config: ModelConfig, seed: u64, registry: &FusionRegistry) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let encoder = Encoder::new(&config.encoder, &mut store, &mut rng)?;
        let fusion = registry.build(&config.fusion, config.fusion_dims(), &mut store, &mut rng)?;
        Ok(Self {
            config,
            store,
            encoder,
            fusion,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn encoder(&self) -> &Encoder {
        &self.encoder
    }

    pub fn fusion(&self) -> &dyn FusionStrategy {
        self.fusion.as_ref()
    }

    /// Encodes every window and, if the head reads it, the whole signal,
    /// then fuses. Windows are encoded in time order, then the full signal.
    pub fn forward<'t>(&self, f: &mut Forward<'_, 't>, input: &PreparedInput) -> Result<FusionOutput<'t>, ModelError> {
        if input.windows.len() != self.config.n_windows {
            return Err(FusionError::WindowCountMismatch {
                expected: self.config.n_windows,
                got: input.windows.len(),
            }
            .into());
        }
        let mut windows = Vec::with_capacity(input.windows.len());
        for w in &input.windows {
            windows.push(self.encoder.forward(f, w)?);
        }
        let full = if self.fusion.uses_full_signal() {
            self.encoder.forward(f, &input.full)?
        } else {
            f.tape.constant(Tensor::zeros(&[1, self.config.encoder.out_dim]))
        };
        Ok(self.fusion.forward(f, &FusionInputs { windows, full })?)
    }

    /// Inference pass. Consumes no randomness.
    pub fn predict(&self, input: &PreparedInput) -> Result<Prediction, ModelError> {
        let tape = GradTape::new();
        let bound = self.store.bind(&tape);
        // never drawn from: dropout and the gate are deterministic at inference
        let mut idle = ChaCha8Rng::seed_from_u64(0);
        let mut f = Forward {
            tape: &tape,
            params: &bound,
            training: false,
            rng: &mut idle,
        };
        let out = self.forward(&mut f, input)?;
        let logits = out.logits.value().to_vec();
        Ok(Prediction {
            class: crate::fusion::argmax(&logits),
            logits,
            selected: out.selected,
        })
    }

    /// Training-mode loss and per-parameter gradients for one sample.
    pub fn loss_and_grads(
        &self,
        input: &PreparedInput,
        target: usize,
        smoothing: f64,
        rng: &mut dyn RngCore,
    ) -> Result<SampleGrad, ModelError> {
        let tape = GradTape::new();
        let bound = self.store.bind(&tape);
        let mut f = Forward {
            tape: &tape,
            params: &bound,
            training: true,
            rng,
        };
        let out = self.forward(&mut f, input)?;
        let loss = tape.smoothed_cross_entropy(out.logits, target, smoothing)?;
        let loss_value = loss.value().item()?;
        let grads = tape.backward(loss)?;
        Ok(SampleGrad {
            loss: loss_value,
            grads: bound.vars().iter().map(|v| grads.wrt(*v)).collect(),
            selected: out.selected,
        })
    }
}

/// Gradients of one sample's loss, in parameter-store order.
#[derive(Debug, Clone)]
pub struct SampleGrad {
    pub loss: f64,
    pub grads: Vec<Tensor>,
    pub selected: Option<usize>,
}
