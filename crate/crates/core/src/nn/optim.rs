//! First-order optimizers.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::layers::Parameterized;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "scheme")]
pub enum Scheme {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Scheme {
    pub fn adam() -> Self {
        Scheme::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl Default for Scheme {
    fn default() -> Self {
        Scheme::adam()
    }
}

#[derive(Debug, Clone)]
struct Moments {
    m: Array2<f64>,
    v: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct Optimizer {
    learning_rate: f64,
    scheme: Scheme,
    step: u64,
    moments: Vec<Option<Moments>>,
}

impl Optimizer {
    /// A zero learning rate is accepted and turns every step into a no-op.
    pub fn new(learning_rate: f64, scheme: Scheme) -> Result<Self> {
        if !(learning_rate >= 0.0 && learning_rate.is_finite()) {
            return Err(Error::config(format!(
                "learning rate must be finite and non-negative, got {learning_rate}"
            )));
        }
        Ok(Self {
            learning_rate,
            scheme,
            step: 0,
            moments: Vec::new(),
        })
    }

    pub fn adam(learning_rate: f64) -> Result<Self> {
        Self::new(learning_rate, Scheme::adam())
    }

    pub fn sgd(learning_rate: f64) -> Result<Self> {
        Self::new(learning_rate, Scheme::Sgd)
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Apply one update from the gradients stored on `model`'s tensors.
    /// Tensors without a gradient are left alone.
    pub fn step(&mut self, model: &mut impl Parameterized) {
        self.step += 1;
        let mut params = model.params_mut();
        if self.moments.len() < params.len() {
            self.moments.resize(params.len(), None);
        }
        if self.learning_rate == 0.0 {
            return;
        }
        let lr = self.learning_rate;
        for (k, (_, p)) in params.iter_mut().enumerate() {
            let Some(g) = p.grad().cloned() else { continue };
            match self.scheme {
                Scheme::Sgd => p.value_mut().scaled_add(-lr, &g),
                Scheme::Adam { beta1, beta2, eps } => {
                    let state = self.moments[k].get_or_insert_with(|| Moments {
                        m: Array2::zeros(g.dim()),
                        v: Array2::zeros(g.dim()),
                    });
                    state.m.zip_mut_with(&g, |m, &g| *m = beta1 * *m + (1.0 - beta1) * g);
                    state.v.zip_mut_with(&g, |v, &g| *v = beta2 * *v + (1.0 - beta2) * g * g);
                    let t = self.step as i32;
                    let c1 = 1.0 - beta1.powi(t);
                    let c2 = 1.0 - beta2.powi(t);
                    let value = p.value_mut();
                    ndarray::Zip::from(value)
                        .and(&state.m)
                        .and(&state.v)
                        .for_each(|w, &m, &v| {
                            *w -= lr * (m / c1) / ((v / c2).sqrt() + eps);
                        });
                }
            }
        }
    }
}
