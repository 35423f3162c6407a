//! Named parameter storage shared by the encoder and the fusion heads.

use rand::{Rng, RngCore};
use rand_distr::{Distribution, Normal};

use crate::numerics::{GradTape, NumericsError, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Ordered collection of named trainable tensors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, tensor: Tensor) -> ParamId {
        self.names.push(name.into());
        self.tensors.push(tensor.with_requires_grad(true));
        ParamId(self.tensors.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    /// Replaces a tensor, keeping its shape.
    pub fn set(&mut self, id: ParamId, tensor: Tensor) -> Result<(), NumericsError> {
        let current = &self.tensors[id.0];
        if current.shape() != tensor.shape() {
            return Err(NumericsError::ShapeMismatch {
                op: "param_set",
                left: current.shape().to_vec(),
                right: tensor.shape().to_vec(),
            });
        }
        self.tensors[id.0] = tensor.with_requires_grad(true);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Tensor)> {
        self.names
            .iter()
            .zip(&self.tensors)
            .enumerate()
            .map(|(i, (n, t))| (ParamId(i), n.as_str(), t))
    }

    /// Total number of scalar parameters, by enumeration.
    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Records every parameter as a trainable leaf on `tape`.
    pub fn bind<'t>(&self, tape: &'t GradTape) -> Bound<'t> {
        Bound {
            vars: self.tensors.iter().map(|t| tape.param(t)).collect(),
        }
    }
}

/// Parameters recorded on one tape.
pub struct Bound<'t> {
    vars: Vec<Var<'t>>,
}

impl<'t> Bound<'t> {
    pub fn get(&self, id: ParamId) -> Var<'t> {
        self.vars[id.0]
    }

    pub fn vars(&self) -> &[Var<'t>] {
        &self.vars
    }
}

/// State threaded through one forward pass.
pub struct Forward<'a, 't> {
    pub tape: &'t GradTape,
    pub params: &'a Bound<'t>,
    pub training: bool,
    pub rng: &'a mut dyn RngCore,
}

impl<'t> Forward<'_, 't> {
    pub fn param(&self, id: ParamId) -> Var<'t> {
        self.params.get(id)
    }

    pub fn dropout(&mut self, x: Var<'t>, rate: f64) -> Result<Var<'t>, NumericsError> {
        self.tape.dropout(x, rate, self.training, &mut *self.rng)
    }
}

/// Weight initialisers.
pub mod init {
    use super::*;

    /// `U(-1/sqrt(fan_in), 1/sqrt(fan_in))` for a `fan_in × fan_out` matrix.
    pub fn fan_in_uniform(rng: &mut dyn RngCore, fan_in: usize, fan_out: usize) -> Tensor {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let data = (0..fan_in * fan_out).map(|_| rng.random_range(-bound..bound)).collect();
        Tensor::new(&[fan_in, fan_out], data).expect("finite init")
    }

    pub fn gaussian(rng: &mut dyn RngCore, shape: &[usize], std: f64) -> Tensor {
        let normal = Normal::new(0.0, std).expect("valid std");
        let n = shape.iter().product();
        let data = (0..n).map(|_| normal.sample(rng)).collect();
        Tensor::new(shape, data).expect("finite init")
    }
}
