//! Self-adversarial margin-rank training.

use std::collections::HashSet;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{KgcConfig, MultiModalKgcModel, ScorerKind};
use crate::data::{KnowledgeGraph, ModalityStore, Triple};
use crate::error::{Error, Result};
use crate::nn::layers::Parameterized;
use crate::nn::{Optimizer, Tape, Var};
use crate::rng::{stream_rng, Rng};

const MAX_RESAMPLE: usize = 100;
const STREAM_SHUFFLE: u64 = 51;
const STREAM_NEGATIVES: u64 = 52;

/// `softmax(beta · scores)` with max subtraction.
pub fn self_adv_weights(scores: &[f64], beta: f64) -> Vec<f64> {
    if scores.is_empty() {
        return Vec::new();
    }
    let scaled: Vec<f64> = scores.iter().map(|&s| beta * s).collect();
    let max = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scaled.iter().map(|&x| (x - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// `max(0, lambda - pos + Σ_i w_i · neg_i)`.
pub fn margin_loss(pos: f64, negs: &[f64], weights: &[f64], lambda: f64) -> f64 {
    let weighted: f64 = negs.iter().zip(weights).map(|(s, w)| s * w).sum();
    (lambda - pos + weighted).max(0.0)
}

/// Batch mean of the margin loss. `pos: n × 1`, `neg: n × N`, `weights`
/// an `n × N` constant.
pub fn margin_loss_tape(tape: &mut Tape, pos: Var, neg: Var, weights: Array2<f64>, lambda: f64) -> Var {
    let weighted = tape.mul_const(neg, weights);
    let weighted = tape.row_sum(weighted);
    let gap = tape.sub(weighted, pos);
    let gap = tape.add_scalar(gap, lambda);
    let hinge = tape.relu(gap);
    tape.mean(hinge)
}

/// Corrupt the head or tail (fair coin) with a different, uniformly drawn
/// entity. Draws that hit a training triple are redrawn up to 100 times,
/// after which the last draw is kept.
pub fn sample_negatives(
    triple: Triple,
    num_entities: usize,
    train: &HashSet<Triple>,
    n: usize,
    rng: &mut Rng,
) -> Vec<Triple> {
    assert!(num_entities >= 2, "negative sampling needs at least two entities");
    let draw = |rng: &mut Rng| {
        let replace_head = rng.random_bool(0.5);
        let original = if replace_head { triple.head } else { triple.tail };
        let mut e = rng.random_range(0..num_entities - 1);
        if e >= original {
            e += 1;
        }
        if replace_head {
            Triple::new(e, triple.relation, triple.tail)
        } else {
            Triple::new(triple.head, triple.relation, e)
        }
    };
    (0..n)
        .map(|_| {
            let mut cand = draw(rng);
            for _ in 0..MAX_RESAMPLE {
                if !train.contains(&cand) {
                    break;
                }
                cand = draw(rng);
            }
            cand
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KgcEpoch {
    pub epoch: usize,
    pub loss: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct KgcHistory {
    pub epochs: Vec<KgcEpoch>,
}

impl MultiModalKgcModel {
    /// Margin loss of positives against their `N` negatives each
    /// (`negatives` laid out positive-major). Weights default to the
    /// detached self-adversarial softmax.
    pub fn batch_loss(
        &self,
        tape: &mut Tape,
        positives: &[Triple],
        negatives: &[Triple],
        config: &KgcConfig,
        weights: Option<Array2<f64>>,
        track: bool,
    ) -> Result<Var> {
        let n = positives.len();
        if n == 0 || negatives.len() % n != 0 {
            return Err(Error::shape(format!(
                "{} negatives do not divide evenly over {n} positives",
                negatives.len()
            )));
        }
        let per = negatives.len() / n;
        let pos = self.score_tape(tape, positives, track)?;
        let neg = self.score_tape(tape, negatives, track)?;
        let neg = tape.reshape(neg, n, per);
        let weights = match weights {
            Some(w) => w,
            None => {
                let values = tape.value(neg);
                let mut w = Array2::zeros((n, per));
                for (i, row) in values.rows().into_iter().enumerate() {
                    let p = self_adv_weights(row.as_slice().expect("contiguous"), config.beta);
                    w.row_mut(i).assign(&ndarray::Array1::from(p));
                }
                w
            }
        };
        Ok(margin_loss_tape(tape, pos, neg, weights, config.margin))
    }
}

/// Train a fresh model on the training split of `graph` with the completed
/// visual features of `store`.
pub fn train_kgc(
    graph: &KnowledgeGraph,
    store: &ModalityStore,
    config: &KgcConfig,
    scorer: ScorerKind,
) -> Result<(MultiModalKgcModel, KgcHistory)> {
    let mut model = MultiModalKgcModel::for_store(graph.num_relations(), store, config, scorer)?;
    if graph.num_entities() < 2 {
        return Err(Error::data("link prediction needs at least two entities"));
    }
    let train_set: HashSet<Triple> = graph.train().iter().copied().collect();
    let mut order: Vec<Triple> = graph.train().to_vec();
    let mut shuffle_rng = stream_rng(config.seed, STREAM_SHUFFLE);
    let mut neg_rng = stream_rng(config.seed, STREAM_NEGATIVES);
    let mut opt = Optimizer::new(config.learning_rate, config.optimizer)?;
    let mut history = KgcHistory::default();
    let n_ent = graph.num_entities();

    for epoch in 0..config.epochs {
        order.shuffle(&mut shuffle_rng);
        let (mut total, mut batches) = (0.0, 0usize);
        for (b, batch) in order.chunks(config.batch_size).enumerate() {
            let negatives: Vec<Triple> = batch
                .iter()
                .flat_map(|&t| sample_negatives(t, n_ent, &train_set, config.negatives, &mut neg_rng))
                .collect();
            let mut tape = Tape::new();
            let loss = model.batch_loss(&mut tape, batch, &negatives, config, None, true)?;
            let value = tape.scalar(loss);
            if !value.is_finite() {
                return Err(Error::numerical(
                    "train_kgc",
                    format!("loss = {value} at epoch {epoch}, batch {b}"),
                ));
            }
            tape.backward(loss);
            model.collect_grads(&tape);
            opt.step(&mut model);
            total += value;
            batches += 1;
        }
        let loss = if batches == 0 { 0.0 } else { total / batches as f64 };
        log::debug!("kgc epoch {epoch}: loss {loss:.4}");
        history.epochs.push(KgcEpoch { epoch, loss });
    }
    Ok((model, history))
}
