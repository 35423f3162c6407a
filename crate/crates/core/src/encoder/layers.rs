use rand::RngCore;

use crate::numerics::{NumericsError, Tensor, Var};
use crate::params::{init, Forward, ParamId, ParamStore};

/// Affine map `x · W + b` with `W: in × out`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new(store: &mut ParamStore, name: &str, in_dim: usize, out_dim: usize, rng: &mut dyn RngCore) -> Self {
        let weight = store.add(format!("{name}.weight"), init::fan_in_uniform(rng, in_dim, out_dim));
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(&[1, out_dim]));
        Self {
            weight,
            bias,
            in_dim,
            out_dim,
        }
    }

    pub fn num_params(in_dim: usize, out_dim: usize) -> usize {
        in_dim * out_dim + out_dim
    }

    pub fn forward<'t>(&self, f: &Forward<'_, 't>, x: Var<'t>) -> Result<Var<'t>, NumericsError> {
        let y = f.tape.matmul(x, f.param(self.weight))?;
        f.tape.add_row(y, f.param(self.bias))
    }
}

#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub bias: ParamId,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize) -> Self {
        Self {
            gain: store.add(format!("{name}.gain"), Tensor::full(&[1, dim], 1.0)),
            bias: store.add(format!("{name}.bias"), Tensor::zeros(&[1, dim])),
        }
    }

    pub fn num_params(dim: usize) -> usize {
        2 * dim
    }

    pub fn forward<'t>(&self, f: &Forward<'_, 't>, x: Var<'t>) -> Result<Var<'t>, NumericsError> {
        f.tape.layer_norm(x, f.param(self.gain), f.param(self.bias))
    }
}

/// Single-head attention core shared by the cross and self variants.
#[derive(Debug, Clone)]
pub struct AttentionProjections {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
}

impl AttentionProjections {
    fn new(store: &mut ParamStore, name: &str, kv_dim: usize, dim: usize, rng: &mut dyn RngCore) -> Self {
        Self {
            query: Linear::new(store, &format!("{name}.q"), dim, dim, rng),
            key: Linear::new(store, &format!("{name}.k"), kv_dim, dim, rng),
            value: Linear::new(store, &format!("{name}.v"), kv_dim, dim, rng),
            output: Linear::new(store, &format!("{name}.o"), dim, dim, rng),
        }
    }

    fn num_params(kv_dim: usize, dim: usize) -> usize {
        2 * Linear::num_params(dim, dim) + 2 * Linear::num_params(kv_dim, dim)
    }

    /// Returns `(softmax(Q Kᵀ / √d) V Wo, attention weights)`.
    fn attend<'t>(
        &self,
        f: &Forward<'_, 't>,
        queries: Var<'t>,
        context: Var<'t>,
    ) -> Result<(Var<'t>, Var<'t>), NumericsError> {
        let q = self.query.forward(f, queries)?;
        let k = self.key.forward(f, context)?;
        let v = self.value.forward(f, context)?;
        let scale = 1.0 / (self.query.out_dim as f64).sqrt();
        let scores = f.tape.scale(f.tape.matmul_nt(q, k)?, scale);
        let weights = f.tape.softmax_rows(scores);
        let mixed = f.tape.matmul(weights, v)?;
        Ok((self.output.forward(f, mixed)?, weights))
    }
}

/// Latents attend to input tokens; pre-norm on both sides, residual on the latents.
#[derive(Debug, Clone)]
pub struct CrossAttention {
    pub norm_latents: LayerNorm,
    pub norm_tokens: LayerNorm,
    pub proj: AttentionProjections,
    pub dropout: f64,
}

impl CrossAttention {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        token_dim: usize,
        dim: usize,
        dropout: f64,
        rng: &mut dyn RngCore,
    ) -> Self {
        Self {
            norm_latents: LayerNorm::new(store, &format!("{name}.norm_latents"), dim),
            norm_tokens: LayerNorm::new(store, &format!("{name}.norm_tokens"), token_dim),
            proj: AttentionProjections::new(store, name, token_dim, dim, rng),
            dropout,
        }
    }

    pub fn num_params(token_dim: usize, dim: usize) -> usize {
        LayerNorm::num_params(dim) + LayerNorm::num_params(token_dim) + AttentionProjections::num_params(token_dim, dim)
    }

    pub fn forward_with_weights<'t>(
        &self,
        f: &mut Forward<'_, 't>,
        latents: Var<'t>,
        tokens: Var<'t>,
    ) -> Result<(Var<'t>, Var<'t>), NumericsError> {
        let q_in = self.norm_latents.forward(f, latents)?;
        let kv_in = self.norm_tokens.forward(f, tokens)?;
        let (out, weights) = self.proj.attend(f, q_in, kv_in)?;
        let out = f.dropout(out, self.dropout)?;
        Ok((f.tape.add(latents, out)?, weights))
    }

    pub fn forward<'t>(
        &self,
        f: &mut Forward<'_, 't>,
        latents: Var<'t>,
        tokens: Var<'t>,
    ) -> Result<Var<'t>, NumericsError> {
        Ok(self.forward_with_weights(f, latents, tokens)?.0)
    }
}

/// Latents attend to each other.
#[derive(Debug, Clone)]
pub struct SelfAttention {
    pub norm: LayerNorm,
    pub proj: AttentionProjections,
    pub dropout: f64,
}

impl SelfAttention {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize, dropout: f64, rng: &mut dyn RngCore) -> Self {
        Self {
            norm: LayerNorm::new(store, &format!("{name}.norm"), dim),
            proj: AttentionProjections::new(store, name, dim, dim, rng),
            dropout,
        }
    }

    pub fn num_params(dim: usize) -> usize {
        LayerNorm::num_params(dim) + AttentionProjections::num_params(dim, dim)
    }

    pub fn forward_with_weights<'t>(
        &self,
        f: &mut Forward<'_, 't>,
        latents: Var<'t>,
    ) -> Result<(Var<'t>, Var<'t>), NumericsError> {
        let x = self.norm.forward(f, latents)?;
        let (out, weights) = self.proj.attend(f, x, x)?;
        let out = f.dropout(out, self.dropout)?;
        Ok((f.tape.add(latents, out)?, weights))
    }

    pub fn forward<'t>(&self, f: &mut Forward<'_, 't>, latents: Var<'t>) -> Result<Var<'t>, NumericsError> {
        Ok(self.forward_with_weights(f, latents)?.0)
    }
}

/// Pre-norm gated feed-forward: `x + W_down (W_up x ⊙ gelu(W_gate x))`.
#[derive(Debug, Clone)]
pub struct GatedFfn {
    pub norm: LayerNorm,
    pub up: Linear,
    pub gate: Linear,
    pub down: Linear,
    pub dropout: f64,
}

impl GatedFfn {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        dim: usize,
        expansion: usize,
        dropout: f64,
        rng: &mut dyn RngCore,
    ) -> Self {
        let hidden = expansion * dim;
        Self {
            norm: LayerNorm::new(store, &format!("{name}.norm"), dim),
            up: Linear::new(store, &format!("{name}.up"), dim, hidden, rng),
            gate: Linear::new(store, &format!("{name}.gate"), dim, hidden, rng),
            down: Linear::new(store, &format!("{name}.down"), hidden, dim, rng),
            dropout,
        }
    }

    pub fn num_params(dim: usize, expansion: usize) -> usize {
        let hidden = expansion * dim;
        LayerNorm::num_params(dim) + 2 * Linear::num_params(dim, hidden) + Linear::num_params(hidden, dim)
    }

    pub fn forward<'t>(&self, f: &mut Forward<'_, 't>, x: Var<'t>) -> Result<Var<'t>, NumericsError> {
        let h = self.norm.forward(f, x)?;
        let u = self.up.forward(f, h)?;
        let g = f.tape.gelu(self.gate.forward(f, h)?);
        let out = self.down.forward(f, f.tape.mul(u, g)?)?;
        let out = f.dropout(out, self.dropout)?;
        f.tape.add(x, out)
    }
}
