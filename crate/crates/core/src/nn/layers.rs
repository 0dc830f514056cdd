//! Parameter containers, dense layers and initialisers.

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use super::tape::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Anything that owns trainable tensors.
///
/// Both methods must list the same tensors in the same order; optimizers
/// key their per-parameter state on that order and checkpoints on the names.
pub trait Parameterized {
    fn params(&self) -> Vec<(String, &Tensor)>;
    fn params_mut(&mut self) -> Vec<(String, &mut Tensor)>;

    /// Copy gradients for every bound parameter out of `tape`.
    fn collect_grads(&mut self, tape: &Tape) {
        for (_, p) in self.params_mut() {
            let g = tape.grad_for(p).cloned();
            p.set_grad(g);
        }
    }

    fn clear_grads(&mut self) {
        for (_, p) in self.params_mut() {
            p.clear_grad();
        }
    }

    fn num_params(&self) -> usize {
        self.params().iter().map(|(_, t)| t.value().len()).sum()
    }
}

impl<A: Parameterized, B: Parameterized> Parameterized for (A, B) {
    fn params(&self) -> Vec<(String, &Tensor)> {
        let mut out = self.0.params();
        out.extend(self.1.params());
        out
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out = self.0.params_mut();
        out.extend(self.1.params_mut());
        out
    }
}

impl<T: Parameterized> Parameterized for &mut T {
    fn params(&self) -> Vec<(String, &Tensor)> {
        (**self).params()
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        (**self).params_mut()
    }
}

pub(crate) fn prefixed<'a>(prefix: &str, items: Vec<(String, &'a Tensor)>) -> Vec<(String, &'a Tensor)> {
    items
        .into_iter()
        .map(|(n, t)| (format!("{prefix}.{n}"), t))
        .collect()
}

pub(crate) fn prefixed_mut<'a>(
    prefix: &str,
    items: Vec<(String, &'a mut Tensor)>,
) -> Vec<(String, &'a mut Tensor)> {
    items
        .into_iter()
        .map(|(n, t)| (format!("{prefix}.{n}"), t))
        .collect()
}

/// Fully connected layer `y = W x + b`, `W: d_out × d_in`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weight: Tensor,
    pub bias: Tensor,
}

/// A dense layer bound onto a tape.
#[derive(Debug, Clone, Copy)]
pub struct DenseVars {
    pub weight: Var,
    pub bias: Var,
}

impl DenseLayer {
    /// Fan-in uniform initialisation in `[-1/√d_in, 1/√d_in]`.
    pub fn new<R: Rng + ?Sized>(d_in: usize, d_out: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (d_in.max(1) as f64).sqrt();
        Self {
            weight: Tensor::new(uniform_matrix(d_out, d_in, bound, rng)),
            bias: Tensor::new(uniform_matrix(1, d_out, bound, rng)),
        }
    }

    pub fn from_parts(weight: Array2<f64>, bias: Array2<f64>) -> Result<Self> {
        if bias.dim() != (1, weight.nrows()) {
            return Err(Error::shape(format!(
                "bias {:?} does not match weight {:?}",
                bias.dim(),
                weight.dim()
            )));
        }
        Ok(Self {
            weight: Tensor::new(weight),
            bias: Tensor::new(bias),
        })
    }

    pub fn zeros(d_in: usize, d_out: usize) -> Self {
        Self {
            weight: Tensor::zeros(d_out, d_in),
            bias: Tensor::zeros(1, d_out),
        }
    }

    pub fn d_in(&self) -> usize {
        self.weight.shape().1
    }

    pub fn d_out(&self) -> usize {
        self.weight.shape().0
    }

    pub fn bind(&self, tape: &mut Tape, track: bool) -> DenseVars {
        DenseVars {
            weight: tape.bind(&self.weight, track),
            bias: tape.bind(&self.bias, track),
        }
    }

    /// Apply to a batch `x: n × d_in` without recording gradients.
    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.weight.value().t()) + self.bias.value()
    }
}

impl DenseVars {
    pub fn apply(&self, tape: &mut Tape, x: Var) -> Var {
        tape.linear(x, self.weight, self.bias)
    }
}

impl Parameterized for DenseLayer {
    fn params(&self) -> Vec<(String, &Tensor)> {
        vec![("weight".into(), &self.weight), ("bias".into(), &self.bias)]
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        vec![
            ("weight".into(), &mut self.weight),
            ("bias".into(), &mut self.bias),
        ]
    }
}

pub fn uniform_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, bound: f64, rng: &mut R) -> Array2<f64> {
    if bound == 0.0 {
        return Array2::zeros((rows, cols));
    }
    let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
    Array2::from_shape_simple_fn((rows, cols), || dist.sample(rng))
}

pub fn normal_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, scale: f64, rng: &mut R) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || {
        let z: f64 = StandardNormal.sample(rng);
        z * scale
    })
}

/// Embedding table initialised from `N(0, 1) / √dim`.
pub fn embedding_table<R: Rng + ?Sized>(count: usize, dim: usize, rng: &mut R) -> Tensor {
    Tensor::new(normal_matrix(count, dim, 1.0 / (dim.max(1) as f64).sqrt(), rng))
}

pub fn relu(x: &Array2<f64>) -> Array2<f64> {
    x.mapv(|v| v.max(0.0))
}

pub fn leaky_relu(x: &Array2<f64>, slope: f64) -> Array2<f64> {
    x.mapv(|v| if v >= 0.0 { v } else { slope * v })
}

pub const LEAKY_SLOPE: f64 = 0.01;
