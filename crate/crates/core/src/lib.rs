//! Completion of missing visual features in multimodal knowledge graphs.
//!
//! The pipeline trains a structure-conditioned generator against a pair
//! discriminator (with a cross-modal contrastive term), imputes the visual
//! features of modality-missing entities, and feeds the completed features
//! into multimodal link-prediction models evaluated under the filtered
//! ranking protocol.
//!
//! * [`data`]: triples, vocabularies, modality masks, toy graphs
//! * [`nn`]: reverse-mode tape, dense layers, optimizers, gradient checker
//! * [`encoder`]: relational graph convolution over the training graph
//! * [`completer`]: generator, discriminator, losses, training, imputation
//! * [`kgc`]: multimodal scorers, negative sampling, margin-rank training
//! * [`eval`]: filtered ranks, MRR/Hits@K, rank-bucket comparison
//! * [`experiment`]: configuration, end-to-end runs and grid sweeps

pub mod completer;
pub mod data;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod exec;
pub mod experiment;
pub mod kgc;
pub mod nn;
pub mod rng;

pub use error::{Error, Result};
pub use exec::Exec;
