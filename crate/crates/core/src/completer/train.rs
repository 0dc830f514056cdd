//! Alternating discriminator / generator optimization.

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::losses::{adv_loss_tape, contrastive_tape, non_saturating_tape, PROB_EPS};
use super::{CompleterConfig, CompleterModel, EncoderTraining, FakePool, GeneratorObjective};
use crate::data::{KnowledgeGraph, ModalityStore};
use crate::encoder::MessagePassing;
use crate::error::{Error, Result};
use crate::nn::layers::{normal_matrix, Parameterized};
use crate::nn::{Optimizer, Tape, Var};
use crate::rng::{stream_rng, Rng};

const STREAM_BATCHES: u64 = 21;
const STREAM_NOISE: u64 = 22;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompleterEpoch {
    pub epoch: usize,
    /// Discriminator cross-entropy in the D step.
    pub d_loss: f64,
    /// Cross-entropy seen by the generator step.
    pub adv_loss: f64,
    pub con_loss: f64,
    /// What the generator step minimized.
    pub g_objective: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CompleterHistory {
    pub epochs: Vec<CompleterEpoch>,
}

/// Cycles through a shuffled copy of `ids`, reshuffling on wrap-around.
struct Cycler {
    ids: Vec<usize>,
    pos: usize,
}

impl Cycler {
    fn new(ids: Vec<usize>, rng: &mut Rng) -> Self {
        let mut c = Self { ids, pos: 0 };
        c.ids.shuffle(rng);
        c
    }

    fn take(&mut self, n: usize, rng: &mut Rng) -> Vec<usize> {
        let n = n.min(self.ids.len());
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            if self.pos == self.ids.len() {
                self.ids.shuffle(rng);
                self.pos = 0;
            }
            out.push(self.ids[self.pos]);
            self.pos += 1;
        }
        out
    }
}

fn check_finite(what: &str, value: f64, epoch: usize, batch: usize) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::numerical(
            "train_completer",
            format!("{what} = {value} at epoch {epoch}, batch {batch}"),
        ))
    }
}

struct Batch<'a> {
    fake: &'a [usize],
    real: &'a [usize],
    real_v: Array2<f64>,
}

fn structural(model: &CompleterModel, mp: &MessagePassing, tape: &mut Tape, track: bool) -> Result<Var> {
    if model.structural_encoder {
        model.encoder.forward(mp, tape, track)
    } else {
        Ok(model.encoder.forward_plain(tape, track))
    }
}

/// Structural rows for a batch. The rows are tracked only when `track` is
/// set, so the encoder receives gradient from exactly the terms that use
/// tracked rows.
fn batch_rows(tape: &mut Tape, s_all: Var, rows: &[usize], track: bool) -> Var {
    if track {
        tape.gather_rows(s_all, rows)
    } else {
        let value = tape.value(s_all).select(Axis(0), rows);
        tape.constant(value)
    }
}

fn discriminator_step(
    model: &mut CompleterModel,
    mp: &MessagePassing,
    batch: &Batch,
    config: &CompleterConfig,
    noise: &mut Rng,
    opt: &mut Optimizer,
    enc_opt: &mut Optimizer,
) -> Result<f64> {
    let d_z = model.generator.d_z;
    let train_encoder = config.encoder_training == EncoderTraining::Discriminator;
    let mut tape = Tape::new();
    let s_all = structural(model, mp, &mut tape, train_encoder)?;
    let s_fake = batch_rows(&mut tape, s_all, batch.fake, train_encoder);
    let s_real = batch_rows(&mut tape, s_all, batch.real, train_encoder);
    let s_gen = batch_rows(&mut tape, s_all, batch.fake, false);
    let z = tape.constant(normal_matrix(batch.fake.len(), d_z, 1.0, noise));
    let g = model.generator.forward(&mut tape, s_gen, z, false)?;
    let p_fake = model.discriminator.forward(&mut tape, s_fake, g, true)?;
    let v_real = tape.constant(batch.real_v.clone());
    let p_real = model.discriminator.forward(&mut tape, s_real, v_real, true)?;
    let mut loss = adv_loss_tape(&mut tape, p_real, p_fake);
    if config.mismatch_negatives && batch.real.len() > 1 {
        // Real features shifted by one row: right modality, wrong entity.
        let n = batch.real.len();
        let shifted: Vec<usize> = (0..n).map(|i| (i + 1) % n).collect();
        let v_wrong = tape.gather_rows(v_real, &shifted);
        let p_wrong = model.discriminator.forward(&mut tape, s_real, v_wrong, true)?;
        let one_minus = tape.neg(p_wrong);
        let one_minus = tape.add_scalar(one_minus, 1.0);
        let log_wrong = tape.log_clamped(one_minus, PROB_EPS, 1.0 - PROB_EPS);
        let term = tape.mean(log_wrong);
        loss = tape.sub(loss, term);
    }
    tape.backward(loss);
    model.discriminator.collect_grads(&tape);
    opt.step(&mut model.discriminator);
    if train_encoder {
        model.encoder.collect_grads(&tape);
        enc_opt.step(&mut model.encoder);
    }
    Ok(tape.scalar(loss))
}

struct GeneratorStep {
    adv: f64,
    con: f64,
    objective: f64,
}

fn generator_step(
    model: &mut CompleterModel,
    mp: &MessagePassing,
    batch: &Batch,
    config: &CompleterConfig,
    noise: &mut Rng,
    opt: &mut Optimizer,
    enc_opt: &mut Optimizer,
) -> Result<GeneratorStep> {
    let d_z = model.generator.d_z;
    let adversarial = config.encoder_training == EncoderTraining::Generator;
    let contrastive = adversarial || config.encoder_training == EncoderTraining::Contrastive;
    let mut tape = Tape::new();
    let s_all = structural(model, mp, &mut tape, adversarial || contrastive)?;
    let s_fake = batch_rows(&mut tape, s_all, batch.fake, adversarial);
    let s_real = batch_rows(&mut tape, s_all, batch.real, adversarial);
    let z = tape.constant(normal_matrix(batch.fake.len(), d_z, 1.0, noise));
    let g = model.generator.forward(&mut tape, s_fake, z, true)?;
    let p_fake = model.discriminator.forward(&mut tape, s_fake, g, false)?;
    let v_real = tape.constant(batch.real_v.clone());
    let p_real = model.discriminator.forward(&mut tape, s_real, v_real, false)?;
    let adv = adv_loss_tape(&mut tape, p_real, p_fake);
    let mut objective = match config.generator_objective {
        GeneratorObjective::Saturating => tape.neg(adv),
        GeneratorObjective::NonSaturating => non_saturating_tape(&mut tape, p_fake),
    };
    let mut con = 0.0;
    if config.alpha > 0.0 {
        let s_con = if adversarial { s_fake } else { batch_rows(&mut tape, s_all, batch.fake, contrastive) };
        let l_con = contrastive_tape(&mut tape, s_con, g, config.tau);
        con = tape.scalar(l_con);
        let weighted = tape.scale(l_con, config.alpha);
        objective = tape.add(objective, weighted);
    }
    tape.backward(objective);
    model.generator.collect_grads(&tape);
    opt.step(&mut model.generator);
    if adversarial || contrastive {
        model.encoder.collect_grads(&tape);
        enc_opt.step(&mut model.encoder);
    }
    Ok(GeneratorStep {
        adv: tape.scalar(adv),
        con,
        objective: tape.scalar(objective),
    })
}

/// Train `model` in place and return per-epoch mean losses.
///
/// Each batch pairs a slice of a shuffled pass over the fake pool (fake
/// pairs) with an equally sized draw from the modality-complete entities
/// (real pairs). The discriminator and then the generator side are updated
/// `d_steps` / `g_steps` times, each with fresh noise. Structural features
/// are constants in the discriminator step.
pub fn train_completer(
    graph: &KnowledgeGraph,
    store: &ModalityStore,
    model: &mut CompleterModel,
    config: &CompleterConfig,
) -> Result<CompleterHistory> {
    config.validate(store.dim())?;
    if store.num_entities() != graph.num_entities() || model.encoder.num_entities() != graph.num_entities() {
        return Err(Error::shape("store, encoder and graph disagree on the entity count"));
    }
    let complete = store.complete_ids();
    if complete.is_empty() {
        return Err(Error::data("completer requires at least one modality-complete entity"));
    }

    let mp = MessagePassing::new(graph);
    let mut batch_rng = stream_rng(config.seed, STREAM_BATCHES);
    let mut noise = stream_rng(config.seed, STREAM_NOISE);
    let mut d_opt = Optimizer::new(config.lr_discriminator, config.optimizer)?;
    let mut g_opt = Optimizer::new(config.lr_generator, config.optimizer)?;
    let enc_lr = match config.encoder_training {
        EncoderTraining::Discriminator => config.lr_discriminator,
        _ => config.lr_generator,
    };
    let mut enc_opt = Optimizer::new(enc_lr, config.optimizer)?;
    let mut real_ids = Cycler::new(complete.clone(), &mut batch_rng);
    let mut all: Vec<usize> = match config.fake_pool {
        FakePool::All => (0..graph.num_entities()).collect(),
        FakePool::Complete => complete.clone(),
    };
    let mut history = CompleterHistory::default();

    for epoch in 0..config.epochs {
        all.shuffle(&mut batch_rng);
        let (mut d_sum, mut adv_sum, mut con_sum, mut obj_sum) = (0.0, 0.0, 0.0, 0.0);
        let mut d_count = 0usize;
        let mut g_count = 0usize;
        for (b, fake) in all.chunks(config.batch_size).enumerate() {
            let real = real_ids.take(fake.len(), &mut batch_rng);
            let batch = Batch {
                fake,
                real: &real,
                real_v: store.features().select(Axis(0), &real),
            };
            for _ in 0..config.d_steps {
                let d = discriminator_step(model, &mp, &batch, config, &mut noise, &mut d_opt, &mut enc_opt)?;
                check_finite("discriminator loss", d, epoch, b)?;
                d_sum += d;
                d_count += 1;
            }
            for _ in 0..config.g_steps {
                let step = generator_step(model, &mp, &batch, config, &mut noise, &mut g_opt, &mut enc_opt)?;
                check_finite("generator objective", step.objective, epoch, b)?;
                adv_sum += step.adv;
                con_sum += step.con;
                obj_sum += step.objective;
                g_count += 1;
            }
        }
        let dn = d_count.max(1) as f64;
        let gn = g_count.max(1) as f64;
        history.epochs.push(CompleterEpoch {
            epoch,
            d_loss: d_sum / dn,
            adv_loss: adv_sum / gn,
            con_loss: con_sum / gn,
            g_objective: obj_sum / gn,
        });
        log::debug!(
            "completer epoch {epoch}: d {:.4} adv {:.4} con {:.4}",
            d_sum / dn,
            adv_sum / gn,
            con_sum / gn
        );
    }
    Ok(history)
}
