//! Hard Gumbel-Softmax selection among candidate logit sets.

use rand::distr::Open01;
use rand::Rng;

use crate::numerics::{NumericsError, Var};

/// Fixed temperature; no annealing schedule is applied.
pub const DEFAULT_TAU: f64 = 1.0;

/// Number of candidate logit sets the gate chooses from.
pub const GATE_WIDTH: usize = 4;

/// Branch names in gate order.
pub const BRANCHES: [&str; GATE_WIDTH] = ["add", "concat", "full", "avg"];

/// Plain-value gate parameters, for analysis outside a forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct GateParams {
    pub logits: [f64; GATE_WIDTH],
    pub tau: f64,
}

impl Default for GateParams {
    fn default() -> Self {
        Self {
            logits: [0.0; GATE_WIDTH],
            tau: DEFAULT_TAU,
        }
    }
}

impl GateParams {
    /// Index chosen by the gate: `argmax(g)` at inference, `argmax((g + G) / τ)`
    /// with fresh Gumbel noise `G` during training.
    pub fn select<R: Rng + ?Sized>(&self, training: bool, rng: &mut R) -> usize {
        if training {
            let noise = gumbel_noise(rng, GATE_WIDTH);
            let perturbed: Vec<f64> = self
                .logits
                .iter()
                .zip(&noise)
                .map(|(g, e)| (g + e) / self.tau)
                .collect();
            argmax(&perturbed)
        } else {
            argmax(&self.logits)
        }
    }

    pub fn one_hot(index: usize) -> [f64; GATE_WIDTH] {
        let mut w = [0.0; GATE_WIDTH];
        w[index] = 1.0;
        w
    }
}

/// Standard Gumbel samples `-ln(-ln U)`, `U ~ U(0, 1)` open.
pub fn gumbel_noise<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let u: f64 = rng.sample(Open01);
            -(-u.ln()).ln()
        })
        .collect()
}

/// First index of the largest value.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Gate output on the tape: the one-hot weights and the chosen index.
pub struct GateDecision<'t> {
    pub weights: Var<'t>,
    pub index: usize,
}

/// Draws a hard one-hot selection from the `1 × 4` gate logits.
///
/// Training samples Gumbel noise and backpropagates through the soft
/// relaxation; inference picks `argmax(g)` and consumes no randomness.
pub fn gumbel_hard<'t, R: Rng + ?Sized>(
    logits: Var<'t>,
    tau: f64,
    training: bool,
    rng: &mut R,
) -> Result<GateDecision<'t>, NumericsError> {
    let g = logits.value();
    let noise = if training {
        gumbel_noise(rng, g.len())
    } else {
        vec![0.0; g.len()]
    };
    let perturbed: Vec<f64> = g.data().iter().zip(&noise).map(|(a, e)| (a + e) / tau).collect();
    let index = argmax(&perturbed);
    let weights = logits.tape().straight_through_one_hot(logits, &noise, tau, index)?;
    Ok(GateDecision { weights, index })
}
