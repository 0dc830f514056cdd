//! Multimodal link-prediction models over structural and projected visual
//! entity embeddings.

mod baseline;
mod score;
mod train;

pub use baseline::{baseline_completion, Baseline};
pub use score::FrozenModel;
pub use train::{
    margin_loss, margin_loss_tape, sample_negatives, self_adv_weights, train_kgc, KgcEpoch, KgcHistory,
};

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data::ModalityStore;
use crate::error::{Error, Result};
use crate::nn::layers::{embedding_table, prefixed, prefixed_mut, Parameterized};
use crate::nn::{Checkpoint, DenseLayer, Scheme, Tensor};
use crate::rng::stream_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScorerKind {
    #[default]
    IkrlLike,
    TbkgcLike,
    RsmeGated,
}

impl ScorerKind {
    pub const ALL: [ScorerKind; 3] = [ScorerKind::IkrlLike, ScorerKind::TbkgcLike, ScorerKind::RsmeGated];

    pub fn id(self) -> &'static str {
        match self {
            ScorerKind::IkrlLike => "ikrl_like",
            ScorerKind::TbkgcLike => "tbkgc_like",
            ScorerKind::RsmeGated => "rsme_gated",
        }
    }
}

impl fmt::Display for ScorerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for ScorerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ScorerKind::ALL
            .into_iter()
            .find(|k| k.id() == s)
            .ok_or_else(|| Error::config(format!("unknown scorer `{s}` (expected ikrl_like, tbkgc_like or rsme_gated)")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KgcConfig {
    pub d: usize,
    pub margin: f64,
    pub beta: f64,
    pub negatives: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub optimizer: Scheme,
    pub seed: u64,
    /// Train the raw visual table along with everything else.
    pub finetune_visual: bool,
}

impl Default for KgcConfig {
    fn default() -> Self {
        Self {
            d: 128,
            margin: 6.0,
            beta: 2.0,
            negatives: 32,
            batch_size: 1024,
            epochs: 100,
            learning_rate: 1e-3,
            optimizer: Scheme::adam(),
            seed: 0,
            finetune_visual: false,
        }
    }
}

impl KgcConfig {
    pub fn validate(&self, scorer: ScorerKind) -> Result<()> {
        if self.d == 0 {
            return Err(Error::config("embedding dimension must be positive"));
        }
        if scorer == ScorerKind::RsmeGated && self.d % 2 != 0 {
            return Err(Error::config("rsme_gated splits embeddings into real and imaginary halves; d must be even"));
        }
        if !(self.margin > 0.0 && self.margin.is_finite()) {
            return Err(Error::config(format!("margin must be positive, got {}", self.margin)));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::config(format!("beta must be non-negative, got {}", self.beta)));
        }
        if self.negatives == 0 || self.batch_size == 0 {
            return Err(Error::config("negatives and batch size must be positive"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning rate must be finite and non-negative"));
        }
        Ok(())
    }
}

const STREAM_INIT: u64 = 41;

#[derive(Debug, Clone, PartialEq)]
pub struct MultiModalKgcModel {
    pub scorer: ScorerKind,
    pub struct_emb: Tensor,
    pub rel_emb: Tensor,
    /// Never updated unless `finetune_visual` is set.
    pub visual_raw: Tensor,
    pub visual_proj: DenseLayer,
    /// Present for `rsme_gated` only.
    pub gate_emb: Option<Tensor>,
    pub finetune_visual: bool,
}

impl MultiModalKgcModel {
    pub fn new(
        num_entities: usize,
        num_relations: usize,
        visual: &Array2<f64>,
        config: &KgcConfig,
        scorer: ScorerKind,
    ) -> Result<Self> {
        config.validate(scorer)?;
        if visual.nrows() != num_entities {
            return Err(Error::shape(format!(
                "{} visual rows for {num_entities} entities",
                visual.nrows()
            )));
        }
        let mut rng = stream_rng(config.seed, STREAM_INIT);
        let struct_emb = embedding_table(num_entities, config.d, &mut rng);
        let rel_emb = embedding_table(num_relations, config.d, &mut rng);
        let visual_proj = DenseLayer::new(visual.ncols(), config.d, &mut rng);
        let gate_emb = (scorer == ScorerKind::RsmeGated).then(|| Tensor::zeros(num_relations, config.d));
        Ok(Self {
            scorer,
            struct_emb,
            rel_emb,
            visual_raw: Tensor::new(visual.clone()),
            visual_proj,
            gate_emb,
            finetune_visual: config.finetune_visual,
        })
    }

    /// Model for a completed store; every row must be present.
    pub fn for_store(
        num_relations: usize,
        store: &ModalityStore,
        config: &KgcConfig,
        scorer: ScorerKind,
    ) -> Result<Self> {
        if !store.is_fully_complete() {
            return Err(Error::data("KGC training needs a completed store (every mask entry true)"));
        }
        Self::new(store.num_entities(), num_relations, store.features(), config, scorer)
    }

    pub fn num_entities(&self) -> usize {
        self.struct_emb.shape().0
    }

    pub fn num_relations(&self) -> usize {
        self.rel_emb.shape().0
    }

    pub fn dim(&self) -> usize {
        self.struct_emb.shape().1
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let mut meta = BTreeMap::new();
        meta.insert("scorer".to_string(), self.scorer.id().to_string());
        meta.insert("finetune_visual".to_string(), self.finetune_visual.to_string());
        // Frozen visual rows are stored too so the checkpoint is self-contained.
        let mut all = self.clone();
        all.finetune_visual = true;
        Checkpoint::from_model(&all, meta)
    }

    /// Rebuild a model of matching shape from a checkpoint.
    pub fn restore(&mut self, ckpt: &Checkpoint) -> Result<()> {
        if let Some(id) = ckpt.metadata.get("scorer") {
            let kind: ScorerKind = id.parse()?;
            if kind != self.scorer {
                return Err(Error::config(format!("checkpoint scorer {kind} differs from model scorer {}", self.scorer)));
            }
        }
        let finetune = self.finetune_visual;
        self.finetune_visual = true;
        let res = ckpt.load_into(self);
        self.finetune_visual = finetune;
        res
    }
}

impl Parameterized for MultiModalKgcModel {
    fn params(&self) -> Vec<(String, &Tensor)> {
        let mut out = vec![
            ("struct_emb".to_string(), &self.struct_emb),
            ("rel_emb".to_string(), &self.rel_emb),
        ];
        if self.finetune_visual {
            out.push(("visual_raw".to_string(), &self.visual_raw));
        }
        out.extend(prefixed("visual_proj", self.visual_proj.params()));
        if let Some(g) = &self.gate_emb {
            out.push(("gate_emb".to_string(), g));
        }
        out
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out = vec![
            ("struct_emb".to_string(), &mut self.struct_emb),
            ("rel_emb".to_string(), &mut self.rel_emb),
        ];
        if self.finetune_visual {
            out.push(("visual_raw".to_string(), &mut self.visual_raw));
        }
        out.extend(prefixed_mut("visual_proj", self.visual_proj.params_mut()));
        if let Some(g) = &mut self.gate_emb {
            out.push(("gate_emb".to_string(), g));
        }
        out
    }
}
