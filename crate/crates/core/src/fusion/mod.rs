//! Turning window and full-signal embeddings into class logits.
//!
//! Every fusion variant implements [`FusionStrategy`] and is registered by
//! name in a [`FusionRegistry`]; training and evaluation pick one at run time
//! from the configuration. The default, `lf_avg_gate`, scores the additive,
//! concatenated and full-signal representations with separate heads, adds
//! their average as a fourth candidate and lets a hard Gumbel-Softmax gate
//! choose one per sample.

pub mod gate;
mod strategies;

use std::collections::BTreeMap;
use std::fmt;

use rand::RngCore;
use thiserror::Error;

pub use gate::{argmax, gumbel_hard, gumbel_noise, GateParams, BRANCHES, DEFAULT_TAU, GATE_WIDTH};
pub use strategies::{GatedFusion, JointHead, LateAverage, LateCoefficient, ThreeHeads, WindowHead};

use crate::numerics::{NumericsError, Var};
use crate::params::{Forward, ParamStore};

#[derive(Debug, Error, PartialEq)]
pub enum FusionError {
    #[error("unknown fusion variant {name:?}; known variants: {known}")]
    UnknownVariant { name: String, known: String },
    #[error("expected {expected} window embeddings, got {got}")]
    WindowCountMismatch { expected: usize, got: usize },
    #[error("no window embeddings to fuse")]
    NoWindows,
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Sizes a fusion head is built for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FusionDims {
    /// Width of one embedding.
    pub embed_dim: usize,
    /// Windows per signal; fixed because inputs are padded to one length.
    pub n_windows: usize,
    pub n_classes: usize,
}

/// Analytic size and forward cost of a fusion head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct HeadCost {
    pub params: usize,
    pub flops: u64,
}

/// Embeddings of one sample on the forward tape.
pub struct FusionInputs<'t> {
    /// One `1 × embed_dim` row per window, in time order.
    pub windows: Vec<Var<'t>>,
    /// Embedding of the whole padded signal.
    pub full: Var<'t>,
}

pub struct FusionOutput<'t> {
    pub logits: Var<'t>,
    /// Gate branch chosen for this sample, if the variant has a gate.
    pub selected: Option<usize>,
}

/// The four candidate logit rows of the gated variant.
pub struct LogitBundle<'t> {
    pub add: Var<'t>,
    pub concat: Var<'t>,
    pub full: Var<'t>,
    pub avg: Var<'t>,
}

impl<'t> LogitBundle<'t> {
    pub fn as_array(&self) -> [Var<'t>; GATE_WIDTH] {
        [self.add, self.concat, self.full, self.avg]
    }
}

/// Sum and order-preserving concatenation of window embeddings.
pub fn fuse_windows<'t>(windows: &[Var<'t>]) -> Result<(Var<'t>, Var<'t>), FusionError> {
    let first = *windows.first().ok_or(FusionError::NoWindows)?;
    let tape = first.tape();
    let mut sum = first;
    for w in &windows[1..] {
        sum = tape.add(sum, *w)?;
    }
    let concat = if windows.len() == 1 { first } else { tape.concat_cols(windows)? };
    Ok((sum, concat))
}

pub trait FusionStrategy: Send + Sync + fmt::Debug {
    fn name(&self) -> &'static str;

    fn dims(&self) -> FusionDims;

    /// Whether the variant reads the full-signal embedding. When false the
    /// full-signal encoder pass can be skipped.
    fn uses_full_signal(&self) -> bool {
        true
    }

    fn forward<'t>(&self, f: &mut Forward<'_, 't>, inputs: &FusionInputs<'t>) -> Result<FusionOutput<'t>, FusionError>;

    /// Current gate logits, for variants that have a gate.
    fn gate_params(&self, _store: &ParamStore) -> Option<GateParams> {
        None
    }
}

type BuildFn = fn(FusionDims, &mut ParamStore, &mut dyn RngCore) -> Box<dyn FusionStrategy>;
type CostFn = fn(FusionDims) -> HeadCost;

struct Entry {
    build: BuildFn,
    cost: CostFn,
    description: &'static str,
}

/// Name → constructor table for fusion variants.
pub struct FusionRegistry {
    entries: BTreeMap<&'static str, Entry>,
}

impl fmt::Debug for FusionRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.entries.keys()).finish()
    }
}

impl Default for FusionRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}

pub const DEFAULT_FUSION: &str = "lf_avg_gate";

impl FusionRegistry {
    pub fn empty() -> Self {
        Self {
            entries: BTreeMap::new(),
        }
    }

    /// All built-in variants.
    pub fn builtin() -> Self {
        let mut r = Self::empty();
        r.register("add", "one head on the summed window embeddings", WindowHead::build_add, WindowHead::cost);
        r.register(
            "concat",
            "one head on the concatenated window embeddings",
            WindowHead::build_concat,
            WindowHead::cost_concat,
        );
        r.register(
            "concat_add_concat",
            "one head on [z_add || z_concat]",
            JointHead::build_windows_only,
            JointHead::cost_windows_only,
        );
        r.register(
            "concat_all",
            "one head on [z_add || z_concat || z_full]",
            JointHead::build_with_full,
            JointHead::cost_with_full,
        );
        r.register(
            "lf_avg",
            "mean of the fused-window and full-signal head logits",
            LateAverage::build,
            LateAverage::cost,
        );
        r.register(
            "lf_coef",
            "sigmoid-weighted blend of fused-window and full-signal logits",
            LateCoefficient::build,
            LateCoefficient::cost,
        );
        r.register(
            DEFAULT_FUSION,
            "hard Gumbel-Softmax gate over add/concat/full/average logits",
            GatedFusion::build,
            GatedFusion::cost,
        );
        r
    }

    pub fn register(&mut self, name: &'static str, description: &'static str, build: BuildFn, cost: CostFn) {
        self.entries.insert(name, Entry { build, cost, description });
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.entries.keys().copied()
    }

    pub fn describe(&self) -> impl Iterator<Item = (&'static str, &'static str)> + '_ {
        self.entries.iter().map(|(k, e)| (*k, e.description))
    }

    fn entry(&self, name: &str) -> Result<&Entry, FusionError> {
        self.entries.get(name).ok_or_else(|| FusionError::UnknownVariant {
            name: name.to_string(),
            known: self.names().collect::<Vec<_>>().join(", "),
        })
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn build(
        &self,
        name: &str,
        dims: FusionDims,
        store: &mut ParamStore,
        rng: &mut dyn RngCore,
    ) -> Result<Box<dyn FusionStrategy>, FusionError> {
        Ok((self.entry(name)?.build)(dims, store, rng))
    }

    pub fn cost(&self, name: &str, dims: FusionDims) -> Result<HeadCost, FusionError> {
        Ok((self.entry(name)?.cost)(dims))
    }

    /// Whether the variant reads the full-signal embedding. Probes a
    /// one-wide instance, so it is cheap at any model size.
    pub fn uses_full_signal(&self, name: &str) -> Result<bool, FusionError> {
        let dims = FusionDims {
            embed_dim: 1,
            n_windows: 1,
            n_classes: 2,
        };
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
        Ok(self.build(name, dims, &mut ParamStore::new(), &mut rng)?.uses_full_signal())
    }
}
