//! The respiration encoder: Fourier-enriched tokens are summarised by a
//! learnable latent array through single-head cross-attention, refined by
//! optional self-attention and gated feed-forward layers, mean-pooled over
//! the latents and projected to a fixed-size embedding.

mod fourier;
mod layers;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use fourier::{band_frequencies, fourier_encode, position, token_dim};
pub use layers::{AttentionProjections, CrossAttention, GatedFfn, LayerNorm, Linear, SelfAttention};

use crate::numerics::{GradTape, NumericsError, Var};
use crate::params::{init, Forward, ParamId, ParamStore};

/// Standard deviation of the latent array initialisation.
pub const LATENT_INIT_STD: f64 = 0.02;

#[derive(Debug, Error, PartialEq)]
pub enum EncoderError {
    #[error("invalid encoder configuration: {0}")]
    InvalidConfig(String),
    #[error("cannot encode an empty signal")]
    EmptySignal,
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderConfig {
    /// Number of stacked `[cross/self]` blocks.
    pub depth: usize,
    pub cross_per_block: usize,
    pub self_per_block: usize,
    pub n_latents: usize,
    pub model_dim: usize,
    pub fourier_bands: usize,
    pub max_freq_hz: f64,
    pub ffn_expansion: usize,
    pub dropout: f64,
    pub out_dim: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            depth: 1,
            cross_per_block: 1,
            self_per_block: 0,
            n_latents: 256,
            model_dim: 512,
            fourier_bands: 6,
            max_freq_hz: 10.0,
            ffn_expansion: 4,
            dropout: 0.1,
            out_dim: 512,
        }
    }
}

/// The six `(depth, cross, self)` module configurations, smallest first.
pub const ARCHITECTURE_GRID: [(usize, usize, usize); 6] =
    [(1, 1, 0), (2, 1, 0), (1, 1, 1), (1, 1, 2), (2, 1, 1), (2, 1, 2)];

impl EncoderConfig {
    pub fn with_blocks(depth: usize, cross_per_block: usize, self_per_block: usize) -> Self {
        Self {
            depth,
            cross_per_block,
            self_per_block,
            ..Self::default()
        }
    }

    /// Narrow widths for CPU-scale training runs; block structure is unchanged.
    pub fn desk_scale() -> Self {
        Self {
            n_latents: 16,
            model_dim: 32,
            ffn_expansion: 2,
            dropout: 0.0,
            out_dim: 32,
            ..Self::default()
        }
    }

    pub fn token_dim(&self) -> usize {
        token_dim(self.fourier_bands)
    }

    pub fn validate(&self) -> Result<(), EncoderError> {
        let bad = |msg: &str| Err(EncoderError::InvalidConfig(msg.to_string()));
        if self.depth == 0 {
            return bad("depth must be at least 1");
        }
        if self.cross_per_block == 0 {
            return bad("cross_per_block must be at least 1");
        }
        if self.n_latents == 0 || self.model_dim == 0 || self.out_dim == 0 {
            return bad("n_latents, model_dim and out_dim must be positive");
        }
        if self.ffn_expansion == 0 {
            return bad("ffn_expansion must be at least 1");
        }
        if !(self.max_freq_hz >= 1.0) {
            return bad("max_freq_hz must be at least 1");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        Ok(())
    }
}

/// Fixed-size encoder output.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub values: Vec<f64>,
}

#[derive(Debug, Clone)]
pub enum Layer {
    Cross(CrossAttention),
    SelfAttn(SelfAttention),
    Ffn(GatedFfn),
}

#[derive(Debug, Clone)]
pub struct Encoder {
    config: EncoderConfig,
    latents: ParamId,
    layers: Vec<Layer>,
    projection: Linear,
}

impl Encoder {
    /// Registers all encoder parameters in `store`.
    ///
    /// Layer order per block: each cross-attention is followed immediately
    /// by the block's self-attentions, and every attention is followed by a
    /// gated feed-forward layer.
    pub fn new(config: &EncoderConfig, store: &mut ParamStore, rng: &mut dyn RngCore) -> Result<Self, EncoderError> {
        config.validate()?;
        let d = config.model_dim;
        let latents = store.add(
            "encoder.latents",
            init::gaussian(rng, &[config.n_latents, d], LATENT_INIT_STD),
        );
        let mut layers = Vec::new();
        for b in 0..config.depth {
            for c in 0..config.cross_per_block {
                let name = format!("encoder.block{b}.cross{c}");
                layers.push(Layer::Cross(CrossAttention::new(
                    store,
                    &name,
                    config.token_dim(),
                    d,
                    config.dropout,
                    rng,
                )));
                layers.push(Layer::Ffn(GatedFfn::new(
                    store,
                    &format!("{name}.ffn"),
                    d,
                    config.ffn_expansion,
                    config.dropout,
                    rng,
                )));
                for s in 0..config.self_per_block {
                    let name = format!("{name}.self{s}");
                    layers.push(Layer::SelfAttn(SelfAttention::new(store, &name, d, config.dropout, rng)));
                    layers.push(Layer::Ffn(GatedFfn::new(
                        store,
                        &format!("{name}.ffn"),
                        d,
                        config.ffn_expansion,
                        config.dropout,
                        rng,
                    )));
                }
            }
        }
        let projection = Linear::new(store, "encoder.projection", d, config.out_dim, rng);
        Ok(Self {
            config: config.clone(),
            latents,
            layers,
            projection,
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Encodes one signal into a `1 × out_dim` row on the forward tape.
    pub fn forward<'t>(&self, f: &mut Forward<'_, 't>, signal: &[f64]) -> Result<Var<'t>, EncoderError> {
        if signal.is_empty() {
            return Err(EncoderError::EmptySignal);
        }
        let tokens = f.tape.constant(fourier_encode(
            signal,
            self.config.fourier_bands,
            self.config.max_freq_hz,
        ));
        let mut latents = f.param(self.latents);
        for layer in &self.layers {
            latents = match layer {
                Layer::Cross(ca) => ca.forward(f, latents, tokens)?,
                Layer::SelfAttn(sa) => sa.forward(f, latents)?,
                Layer::Ffn(ffn) => ffn.forward(f, latents)?,
            };
        }
        let pooled = f.tape.mean_rows(latents);
        Ok(self.projection.forward(f, pooled)?)
    }
}

/// Standalone encoder with its own parameter store.
#[derive(Debug, Clone)]
pub struct RespEncoder {
    pub encoder: Encoder,
    pub params: ParamStore,
}

impl RespEncoder {
    pub fn new(config: &EncoderConfig, seed: u64) -> Result<Self, EncoderError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let encoder = Encoder::new(config, &mut params, &mut rng)?;
        Ok(Self { encoder, params })
    }

    /// Encodes one signal. With `training == false` no randomness is consumed.
    pub fn encode(&self, signal: &[f64], training: bool, rng: &mut dyn RngCore) -> Result<Embedding, EncoderError> {
        let tape = GradTape::new();
        let bound = self.params.bind(&tape);
        let mut f = Forward {
            tape: &tape,
            params: &bound,
            training,
            rng,
        };
        let z = self.encoder.forward(&mut f, signal)?;
        Ok(Embedding {
            values: z.value().to_vec(),
        })
    }

    pub fn encode_batch(
        &self,
        signals: &[Vec<f64>],
        training: bool,
        rng: &mut dyn RngCore,
    ) -> Result<Vec<Embedding>, EncoderError> {
        signals.iter().map(|s| self.encode(s, training, rng)).collect()
    }
}
