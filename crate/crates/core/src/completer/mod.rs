//! Adversarial + contrastive visual-feature completion.

mod complete;
mod losses;
mod networks;
mod train;

pub use complete::{complete_features, imputation_cosine, pool_candidates, Completion, Strategy, STREAM_COMPLETE};
pub use losses::{
    adv_loss, adv_loss_from_probs, adv_loss_tape, contrastive_loss, contrastive_tape, non_saturating_tape,
    pair_score, PROB_EPS,
};
pub use networks::{Discriminator, Generator};
pub use train::{train_completer, CompleterEpoch, CompleterHistory};

use serde::{Deserialize, Serialize};

use crate::data::KnowledgeGraph;
use crate::encoder::RgcnEncoder;
use crate::error::{Error, Result};
use crate::nn::layers::{prefixed, prefixed_mut, Parameterized};
use crate::nn::{Scheme, Tensor};
use crate::rng::stream_rng;

/// Shape of the discriminator's output layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscriminatorHead {
    /// Linear layer over `[h; v]`.
    #[default]
    Concat,
    /// `Concat` plus a bilinear `vᵀ U h` term.
    Projection,
    /// Hidden LeakyReLU layer over `[h; v]`, then the logit.
    Joint,
}

/// Entities whose structural features condition fake pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FakePool {
    /// Every entity.
    #[default]
    All,
    /// Modality-complete entities only, the same pool as real pairs.
    Complete,
}

/// Which step updates the structural encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderTraining {
    /// Generator step, full generator objective.
    #[default]
    Generator,
    /// Discriminator step, minimizing the cross-entropy.
    Discriminator,
    /// Generator step, contrastive term only.
    Contrastive,
    /// Never.
    Frozen,
}

/// Which objective the generator step optimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorObjective {
    /// Maximize the discriminator's cross-entropy.
    #[default]
    Saturating,
    /// Minimize `-ln D(s, g)`.
    NonSaturating,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CompleterConfig {
    /// Structural feature width.
    pub d_s: usize,
    pub d_z: usize,
    pub hidden: usize,
    pub encoder_layers: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub lr_generator: f64,
    pub lr_discriminator: f64,
    pub optimizer: Scheme,
    pub tau: f64,
    pub alpha: f64,
    pub k: usize,
    pub accept_threshold: f64,
    pub strategy: Strategy,
    pub seed: u64,
    /// `false` feeds the generator noise only.
    pub conditional: bool,
    /// `false` replaces message passing with plain learned embeddings.
    pub structural_encoder: bool,
    pub generator_objective: GeneratorObjective,
    pub discriminator_head: DiscriminatorHead,
    /// Also show the discriminator real features paired with the wrong
    /// entity, labelled fake.
    pub mismatch_negatives: bool,
    pub encoder_training: EncoderTraining,
    pub fake_pool: FakePool,
    pub d_steps: usize,
    pub g_steps: usize,
}

impl Default for CompleterConfig {
    fn default() -> Self {
        Self {
            d_s: 768,
            d_z: 128,
            hidden: 256,
            encoder_layers: 2,
            batch_size: 128,
            epochs: 500,
            lr_generator: 1e-4,
            lr_discriminator: 1e-4,
            optimizer: Scheme::adam(),
            tau: 1.0,
            alpha: 0.01,
            k: 512,
            accept_threshold: 0.5,
            strategy: Strategy::Gen,
            seed: 0,
            conditional: true,
            structural_encoder: true,
            generator_objective: GeneratorObjective::Saturating,
            discriminator_head: DiscriminatorHead::Concat,
            mismatch_negatives: false,
            encoder_training: EncoderTraining::Generator,
            fake_pool: FakePool::All,
            d_steps: 1,
            g_steps: 1,
        }
    }
}

impl CompleterConfig {
    pub fn validate(&self, d_v: usize) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::config(format!("tau must be positive, got {}", self.tau)));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::config(format!("alpha must be non-negative, got {}", self.alpha)));
        }
        if self.k == 0 {
            return Err(Error::config("K must be at least 1"));
        }
        if !(self.accept_threshold > 0.0 && self.accept_threshold < 1.0) {
            return Err(Error::config("accept threshold must lie in (0, 1)"));
        }
        if self.d_s == 0 || self.d_z == 0 || self.hidden == 0 || self.batch_size == 0 {
            return Err(Error::config("completer widths and batch size must be positive"));
        }
        if self.structural_encoder && self.encoder_layers == 0 {
            return Err(Error::config("encoder needs at least one layer"));
        }
        if self.d_steps == 0 || self.g_steps == 0 {
            return Err(Error::config("d_steps and g_steps must be positive"));
        }
        for lr in [self.lr_generator, self.lr_discriminator] {
            if !(lr >= 0.0 && lr.is_finite()) {
                return Err(Error::config(format!("learning rate must be non-negative, got {lr}")));
            }
        }
        if self.alpha > 0.0 && d_v != self.d_s {
            return Err(Error::config(format!(
                "contrastive term needs d_v = d_s, got d_v = {d_v}, d_s = {}",
                self.d_s
            )));
        }
        Ok(())
    }
}

const STREAM_ENCODER: u64 = 11;
const STREAM_GENERATOR: u64 = 12;
const STREAM_DISCRIMINATOR: u64 = 13;

/// Encoder, generator and discriminator trained together.
#[derive(Debug, Clone, PartialEq)]
pub struct CompleterModel {
    pub encoder: RgcnEncoder,
    pub generator: Generator,
    pub discriminator: Discriminator,
    /// Whether structural features come from message passing.
    pub structural_encoder: bool,
}

impl CompleterModel {
    /// Fresh parameters drawn from streams of `config.seed`.
    pub fn init(graph: &KnowledgeGraph, d_v: usize, config: &CompleterConfig) -> Result<Self> {
        config.validate(d_v)?;
        let layers = if config.structural_encoder { config.encoder_layers } else { 0 };
        let mut rng = stream_rng(config.seed, STREAM_ENCODER);
        let base = crate::nn::layers::embedding_table(graph.num_entities(), config.d_s, &mut rng);
        let layers = (0..layers)
            .map(|_| crate::encoder::RgcnLayer::new(config.d_s, 2 * graph.num_relations(), &mut rng))
            .collect();
        let encoder = RgcnEncoder::from_parts(base.value().clone(), layers)?;
        let mut rng = stream_rng(config.seed, STREAM_GENERATOR);
        let generator = Generator::new(config.d_s, config.d_z, config.hidden, d_v, config.conditional, &mut rng);
        let mut rng = stream_rng(config.seed, STREAM_DISCRIMINATOR);
        let discriminator = match config.discriminator_head {
            DiscriminatorHead::Concat => Discriminator::new(config.d_s, d_v, config.hidden, &mut rng),
            DiscriminatorHead::Projection => {
                Discriminator::new(config.d_s, d_v, config.hidden, &mut rng).with_interaction()
            }
            DiscriminatorHead::Joint => Discriminator::new_joint(config.d_s, d_v, config.hidden, &mut rng),
        };
        Ok(Self {
            encoder,
            generator,
            discriminator,
            structural_encoder: config.structural_encoder,
        })
    }

    /// Structural features of every entity under the current parameters.
    pub fn structural_features(&self, graph: &KnowledgeGraph) -> Result<ndarray::Array2<f64>> {
        if self.structural_encoder {
            crate::encoder::encode(graph, &self.encoder)
        } else {
            Ok(crate::encoder::encode_plain(&self.encoder))
        }
    }
}

impl Parameterized for CompleterModel {
    fn params(&self) -> Vec<(String, &Tensor)> {
        let mut out = prefixed("encoder", self.encoder.params());
        out.extend(prefixed("generator", self.generator.params()));
        out.extend(prefixed("discriminator", self.discriminator.params()));
        out
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out = prefixed_mut("encoder", self.encoder.params_mut());
        out.extend(prefixed_mut("generator", self.generator.params_mut()));
        out.extend(prefixed_mut("discriminator", self.discriminator.params_mut()));
        out
    }
}
