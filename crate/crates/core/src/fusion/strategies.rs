use rand::RngCore;

use super::gate::{gumbel_hard, GateParams, GATE_WIDTH};
use super::{fuse_windows, FusionDims, FusionError, FusionInputs, FusionOutput, FusionStrategy, HeadCost, LogitBundle};
use crate::encoder::Linear;
use crate::numerics::{Tensor, Var};
use crate::params::{Forward, ParamId, ParamStore};

fn linear_flops(in_dim: usize, out_dim: usize) -> u64 {
    (2 * in_dim * out_dim + out_dim) as u64
}

fn linear_cost(in_dim: usize, out_dim: usize) -> HeadCost {
    HeadCost {
        params: Linear::num_params(in_dim, out_dim),
        flops: linear_flops(in_dim, out_dim),
    }
}

fn add_costs(parts: &[HeadCost]) -> HeadCost {
    parts.iter().fold(HeadCost::default(), |acc, c| HeadCost {
        params: acc.params + c.params,
        flops: acc.flops + c.flops,
    })
}

/// Element-wise additions spent summing the window embeddings.
fn window_sum_flops(dims: FusionDims) -> u64 {
    ((dims.n_windows.saturating_sub(1)) * dims.embed_dim) as u64
}

fn check_windows(dims: FusionDims, inputs: &FusionInputs<'_>) -> Result<(), FusionError> {
    if inputs.windows.len() != dims.n_windows {
        return Err(FusionError::WindowCountMismatch {
            expected: dims.n_windows,
            got: inputs.windows.len(),
        });
    }
    Ok(())
}

/// Single head on either the summed or the concatenated window embeddings.
#[derive(Debug)]
pub struct WindowHead {
    dims: FusionDims,
    concat: bool,
    head: Linear,
}

impl WindowHead {
    pub fn build_add(dims: FusionDims, store: &mut ParamStore, rng: &mut dyn RngCore) -> Box<dyn FusionStrategy> {
        let head = Linear::new(store, "head.add", dims.embed_dim, dims.n_classes, rng);
        Box::new(Self { dims, concat: false, head })
    }

    pub fn build_concat(dims: FusionDims, store: &mut ParamStore, rng: &mut dyn RngCore) -> Box<dyn FusionStrategy> {
        let head = Linear::new(store, "head.concat", dims.n_windows * dims.embed_dim, dims.n_classes, rng);
        Box::new(Self { dims, concat: true, head })
    }

    pub fn cost(dims: FusionDims) -> HeadCost {
        let mut c = linear_cost(dims.embed_dim, dims.n_classes);
        c.flops += window_sum_flops(dims);
        c
    }

    pub fn cost_concat(dims: FusionDims) -> HeadCost {
        linear_cost(dims.n_windows * dims.embed_dim, dims.n_classes)
    }
}

impl FusionStrategy for WindowHead {
    fn name(&self) -> &'static str {
        if self.concat {
            "concat"
        } else {
            "add"
        }
    }

    fn dims(&self) -> FusionDims {
        self.dims
    }

    fn uses_full_signal(&self) -> bool {
        false
    }

    fn forward<'t>(&self, f: &mut Forward<'_, 't>, inputs: &FusionInputs<'t>) -> Result<FusionOutput<'t>, FusionError> {
        check_windows(self.dims, inputs)?;
        let (sum, concat) = fuse_windows(&inputs.windows)?;
        let z = if self.concat { concat } else { sum };
        Ok(FusionOutput {
            logits: self.head.forward(f, z)?,
            selected: None,
        })
    }
}

/// Single head on `[z_add ‖ z_concat]`, optionally followed by `‖ z_full`.
#[derive(Debug)]
pub struct JointHead {
    dims: FusionDims,
    with_full: bool,
    head: Linear,
}

impl JointHead {
    fn width(dims: FusionDims, with_full: bool) -> usize {
        dims.embed_dim + dims.n_windows * dims.embed_dim + if with_full { dims.embed_dim } else { 0 }
    }

    pub fn input_width(&self) -> usize {
        Self::width(self.dims, self.with_full)
    }

    fn build(dims: FusionDims, with_full: bool, store: &mut ParamStore, rng: &mut dyn RngCore) -> Box<dyn FusionStrategy> {
        let name = if with_full { "head.all" } else { "head.add_concat" };
        let head = Linear::new(store, name, Self::width(dims, with_full), dims.n_classes, rng);
        Box::new(Self { dims, with_full, head })
    }

    pub fn build_windows_only(dims: FusionDims, store: &mut ParamStore, rng: &mut dyn RngCore) -> Box<dyn FusionStrategy> {
        Self::build(dims, false, store, rng)
    }

    pub fn build_with_full(dims: FusionDims, store: &mut ParamStore, rng: &mut dyn RngCore) -> Box<dyn FusionStrategy> {
        Self::build(dims, true, store, rng)
    }

    pub fn cost_windows_only(dims: FusionDims) -> HeadCost {
        let mut c = linear_cost(Self::width(dims, false), dims.n_classes);
        c.flops += window_sum_flops(dims);
        c
    }

    pub fn cost_with_full(dims: FusionDims) -> HeadCost {
        let mut c = linear_cost(Self::width(dims, true), dims.n_classes);
        c.flops += window_sum_flops(dims);
        c
    }
}

impl FusionStrategy for JointHead {
    fn name(&self) -> &'static str {
        if self.with_full {
            "concat_all"
        } else {
            "concat_add_concat"
        }
    }

    fn dims(&self) -> FusionDims {
        self.dims
    }

    fn uses_full_signal(&self) -> bool {
        self.with_full
    }

    fn forward<'t>(&self, f: &mut Forward<'_, 't>, inputs: &FusionInputs<'t>) -> Result<FusionOutput<'t>, FusionError> {
        check_windows(self.dims, inputs)?;
        let (sum, concat) = fuse_windows(&inputs.windows)?;
        let z = if self.with_full {
            f.tape.concat_cols(&[sum, concat, inputs.full])?
        } else {
            f.tape.concat_cols(&[sum, concat])?
        };
        Ok(FusionOutput {
            logits: self.head.forward(f, z)?,
            selected: None,
        })
    }
}

/// Logits of the `[z_add ‖ z_concat]` head and of the full-signal head.
fn fused_and_full<'t>(
    dims: FusionDims,
    fused: &Linear,
    full: &Linear,
    f: &mut Forward<'_, 't>,
    inputs: &FusionInputs<'t>,
) -> Result<(Var<'t>, Var<'t>), FusionError> {
    check_windows(dims, inputs)?;
    let (sum, concat) = fuse_windows(&inputs.windows)?;
    let z = f.tape.concat_cols(&[sum, concat])?;
    Ok((fused.forward(f, z)?, full.forward(f, inputs.full)?))
}

/// `½ (l_fused + l_full)`.
#[derive(Debug)]
pub struct LateAverage {
    dims: FusionDims,
    fused: Linear,
    full: Linear,
}

impl LateAverage {
    pub fn build(dims: FusionDims, store: &mut ParamStore, rng: &mut dyn RngCore) -> Box<dyn FusionStrategy> {
        let fused = Linear::new(store, "head.add_concat", JointHead::width(dims, false), dims.n_classes, rng);
        let full = Linear::new(store, "head.full", dims.embed_dim, dims.n_classes, rng);
        Box::new(Self { dims, fused, full })
    }

    pub fn cost(dims: FusionDims) -> HeadCost {
        let mut c = add_costs(&[
            linear_cost(JointHead::width(dims, false), dims.n_classes),
            linear_cost(dims.embed_dim, dims.n_classes),
        ]);
        c.flops += window_sum_flops(dims) + 2 * dims.n_classes as u64;
        c
    }
}

impl FusionStrategy for LateAverage {
    fn name(&self) -> &'static str {
        "lf_avg"
    }

    fn dims(&self) -> FusionDims {
        self.dims
    }

    fn forward<'t>(&self, f: &mut Forward<'_, 't>, inputs: &FusionInputs<'t>) -> Result<FusionOutput<'t>, FusionError> {
        let (fused, full) = fused_and_full(self.dims, &self.fused, &self.full, f, inputs)?;
        Ok(FusionOutput {
            logits: f.tape.mean_of(&[fused, full])?,
            selected: None,
        })
    }
}

/// `α l_fused + (1 − α) l_full` with `α = sigmoid(a)` and `a` learnable.
#[derive(Debug)]
pub struct LateCoefficient {
    dims: FusionDims,
    fused: Linear,
    full: Linear,
    alpha_logit: ParamId,
}

impl LateCoefficient {
    pub fn build(dims: FusionDims, store: &mut ParamStore, rng: &mut dyn RngCore) -> Box<dyn FusionStrategy> {
        let fused = Linear::new(store, "head.add_concat", JointHead::width(dims, false), dims.n_classes, rng);
        let full = Linear::new(store, "head.full", dims.embed_dim, dims.n_classes, rng);
        let alpha_logit = store.add("fusion.alpha_logit", Tensor::zeros(&[1, 1]));
        Box::new(Self { dims, fused, full, alpha_logit })
    }

    pub fn cost(dims: FusionDims) -> HeadCost {
        let mut c = add_costs(&[
            linear_cost(JointHead::width(dims, false), dims.n_classes),
            linear_cost(dims.embed_dim, dims.n_classes),
        ]);
        c.params += 1;
        c.flops += window_sum_flops(dims) + 4 + 3 * dims.n_classes as u64;
        c
    }

    /// Current blend weight `α ∈ (0, 1)`.
    pub fn alpha(&self, store: &ParamStore) -> f64 {
        crate::numerics::sigmoid(store.get(self.alpha_logit).data()[0])
    }
}

impl FusionStrategy for LateCoefficient {
    fn name(&self) -> &'static str {
        "lf_coef"
    }

    fn dims(&self) -> FusionDims {
        self.dims
    }

    fn forward<'t>(&self, f: &mut Forward<'_, 't>, inputs: &FusionInputs<'t>) -> Result<FusionOutput<'t>, FusionError> {
        let (fused, full) = fused_and_full(self.dims, &self.fused, &self.full, f, inputs)?;
        let alpha = f.tape.sigmoid(f.param(self.alpha_logit));
        let delta = f.tape.scale_by(f.tape.sub(fused, full)?, alpha)?;
        Ok(FusionOutput {
            logits: f.tape.add(full, delta)?,
            selected: None,
        })
    }
}

/// Dedicated one-layer classifiers for `z_add`, `z_concat` and `z_full`.
#[derive(Debug)]
pub struct ThreeHeads {
    pub add: Linear,
    pub concat: Linear,
    pub full: Linear,
}

impl ThreeHeads {
    pub fn new(dims: FusionDims, store: &mut ParamStore, rng: &mut dyn RngCore) -> Self {
        Self {
            add: Linear::new(store, "head.add", dims.embed_dim, dims.n_classes, rng),
            concat: Linear::new(store, "head.concat", dims.n_windows * dims.embed_dim, dims.n_classes, rng),
            full: Linear::new(store, "head.full", dims.embed_dim, dims.n_classes, rng),
        }
    }

    /// Logits of the three heads plus their element-wise mean.
    pub fn forward<'t>(
        &self,
        f: &mut Forward<'_, 't>,
        z_add: Var<'t>,
        z_concat: Var<'t>,
        z_full: Var<'t>,
    ) -> Result<LogitBundle<'t>, FusionError> {
        let expected = self.concat.in_dim;
        let got = z_concat.value().len();
        if got != expected {
            return Err(FusionError::WindowCountMismatch {
                expected: expected / self.add.in_dim,
                got: got / self.add.in_dim.max(1),
            });
        }
        let add = self.add.forward(f, z_add)?;
        let concat = self.concat.forward(f, z_concat)?;
        let full = self.full.forward(f, z_full)?;
        let avg = f.tape.mean_of(&[add, concat, full])?;
        Ok(LogitBundle { add, concat, full, avg })
    }
}

/// Per-sample hard selection among `l_add`, `l_concat`, `l_full`, `l_avg`.
#[derive(Debug)]
pub struct GatedFusion {
    dims: FusionDims,
    heads: ThreeHeads,
    gate: ParamId,
    tau: f64,
}

impl GatedFusion {
    pub fn build(dims: FusionDims, store: &mut ParamStore, rng: &mut dyn RngCore) -> Box<dyn FusionStrategy> {
        Box::new(Self::new(dims, super::DEFAULT_TAU, store, rng))
    }

    pub fn new(dims: FusionDims, tau: f64, store: &mut ParamStore, rng: &mut dyn RngCore) -> Self {
        let heads = ThreeHeads::new(dims, store, rng);
        let gate = store.add("fusion.gate", Tensor::zeros(&[1, GATE_WIDTH]));
        Self { dims, heads, gate, tau }
    }

    pub fn cost(dims: FusionDims) -> HeadCost {
        let mut c = add_costs(&[
            linear_cost(dims.embed_dim, dims.n_classes),
            linear_cost(dims.n_windows * dims.embed_dim, dims.n_classes),
            linear_cost(dims.embed_dim, dims.n_classes),
        ]);
        c.params += GATE_WIDTH;
        // window sum, the logit average, then the one-hot mix (a 1×4 by 4×C product)
        c.flops += window_sum_flops(dims) + 3 * dims.n_classes as u64 + (2 * GATE_WIDTH * dims.n_classes) as u64;
        c
    }

    pub fn heads(&self) -> &ThreeHeads {
        &self.heads
    }

    pub fn gate_id(&self) -> ParamId {
        self.gate
    }
}

impl FusionStrategy for GatedFusion {
    fn name(&self) -> &'static str {
        super::DEFAULT_FUSION
    }

    fn dims(&self) -> FusionDims {
        self.dims
    }

    fn forward<'t>(&self, f: &mut Forward<'_, 't>, inputs: &FusionInputs<'t>) -> Result<FusionOutput<'t>, FusionError> {
        check_windows(self.dims, inputs)?;
        let (z_add, z_concat) = fuse_windows(&inputs.windows)?;
        let bundle = self.heads.forward(f, z_add, z_concat, inputs.full)?;
        let decision = gumbel_hard(f.param(self.gate), self.tau, f.training, &mut *f.rng)?;
        let stacked = f.tape.concat_rows(&bundle.as_array())?;
        Ok(FusionOutput {
            logits: f.tape.matmul(decision.weights, stacked)?,
            selected: Some(decision.index),
        })
    }

    fn gate_params(&self, store: &ParamStore) -> Option<GateParams> {
        let g = store.get(self.gate).data();
        Some(GateParams {
            logits: [g[0], g[1], g[2], g[3]],
            tau: self.tau,
        })
    }
}
