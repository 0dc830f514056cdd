//! Differentiable numeric substrate: a reverse-mode tape over dense
//! matrices, dense layers, optimizers, a finite-difference gradient checker
//! and a binary checkpoint container.

pub mod checkpoint;
pub mod gradcheck;
pub mod layers;
pub mod optim;
pub mod sparse;
pub mod tape;

pub use checkpoint::Checkpoint;
pub use gradcheck::{gradient_check, GradCheckReport};
pub use layers::{leaky_relu, relu, DenseLayer, DenseVars, Parameterized, LEAKY_SLOPE};
pub use optim::{Optimizer, Scheme};
pub use sparse::SparseMatrix;
pub use tape::{Tape, Tensor, Var};
