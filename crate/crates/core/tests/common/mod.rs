//! Fixtures and independent oracles shared by the integration targets.
#![allow(dead_code)]

use std::collections::HashSet;

use ndarray::{Array2, Array3};

use mmkg_core::completer::{adv_loss_tape, contrastive_tape, CompleterConfig, CompleterModel};
use mmkg_core::data::{drop_modality, synth_mmkg, KnowledgeGraph, ModalityStore, SynthConfig, Triple};
use mmkg_core::encoder::MessagePassing;
use mmkg_core::eval::{Direction, LinkScorer};
use mmkg_core::kgc::{sample_negatives, self_adv_weights, KgcConfig, MultiModalKgcModel, ScorerKind};
use mmkg_core::nn::layers::normal_matrix;
use mmkg_core::nn::{gradient_check, GradCheckReport, Tape};
use mmkg_core::rng::rng_from_seed;

pub const GRAD_EPS: f64 = 1e-5;
pub const GRAD_TOL: f64 = 1e-4;

/// Score table indexed `[h, r, t]`.
pub struct TableScorer(pub Array3<f64>);

impl LinkScorer for TableScorer {
    fn num_entities(&self) -> usize {
        self.0.shape()[0]
    }
    fn score_tails(&self, h: usize, r: usize) -> Vec<f64> {
        (0..self.num_entities()).map(|t| self.0[[h, r, t]]).collect()
    }
    fn score_heads(&self, r: usize, t: usize) -> Vec<f64> {
        (0..self.num_entities()).map(|h| self.0[[h, r, t]]).collect()
    }
}

/// Mid-rank by sorting: the answer's tied block occupies positions
/// `a..=b` (1-based) among the surviving candidates; its rank is `(a+b)/2`.
pub fn oracle_rank(
    score: impl Fn(usize, usize, usize) -> f64,
    n: usize,
    triple: Triple,
    direction: Direction,
    known: &[Triple],
) -> f64 {
    let (h, r, t) = (triple.head, triple.relation, triple.tail);
    let mut survivors: Vec<(f64, bool)> = Vec::new();
    for e in 0..n {
        let cand = match direction {
            Direction::Tail => Triple::new(h, r, e),
            Direction::Head => Triple::new(e, r, t),
        };
        let is_truth = cand == triple;
        if !is_truth && known.iter().any(|k| *k == cand) {
            continue;
        }
        let s = score(cand.head, cand.relation, cand.tail);
        survivors.push((if s.is_nan() { f64::NEG_INFINITY } else { s }, is_truth));
    }
    survivors.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    let target = survivors.iter().find(|x| x.1).unwrap().0;
    let first = survivors.iter().position(|x| x.0 == target).unwrap() + 1;
    let last = survivors.iter().rposition(|x| x.0 == target).unwrap() + 1;
    (first + last) as f64 / 2.0
}

pub fn oracle_mrr(ranks: &[f64]) -> f64 {
    let mut total = 0.0;
    for r in ranks {
        total += 1.0 / r;
    }
    total / ranks.len() as f64
}

pub fn oracle_hits(ranks: &[f64], k: usize) -> f64 {
    let mut c = 0usize;
    for &r in ranks {
        if r <= k as f64 {
            c += 1;
        }
    }
    c as f64 / ranks.len() as f64
}

/// A toy graph with at most eight entities and its masked store.
pub fn toy_graph(seed: u64) -> (KnowledgeGraph, ModalityStore, ModalityStore) {
    let (kg, truth) = synth_mmkg(&SynthConfig::new(8, 2, 24, 3, 0.05, seed)).unwrap();
    let masked = drop_modality(&truth, 0.25, seed).unwrap();
    (kg, truth, masked)
}

pub fn toy_completer(kg: &KnowledgeGraph, d: usize, seed: u64) -> (CompleterModel, CompleterConfig) {
    let cfg = CompleterConfig { d_s: d, d_z: 2, hidden: 5, encoder_layers: 2, seed, ..CompleterConfig::default() };
    (CompleterModel::init(kg, d, &cfg).unwrap(), cfg)
}

/// Finite-difference check of the adversarial loss over encoder,
/// generator and discriminator parameters.
pub fn grad_check_adv(seed: u64) -> GradCheckReport {
    let (kg, _, masked) = toy_graph(seed);
    let (mut model, _) = toy_completer(&kg, 3, seed);
    let mp = MessagePassing::new(&kg);
    let real = masked.complete_ids();
    let fake: Vec<usize> = (0..kg.num_entities()).collect();
    let v_real = masked.features().select(ndarray::Axis(0), &real);
    let z = normal_matrix(fake.len(), 2, 1.0, &mut rng_from_seed(seed + 100));
    gradient_check(&mut model, GRAD_EPS, GRAD_TOL, |m, tape: &mut Tape| {
        let s = m.encoder.forward(&mp, tape, true)?;
        let s_real = tape.gather_rows(s, &real);
        let s_fake = tape.gather_rows(s, &fake);
        let v = tape.constant(v_real.clone());
        let zv = tape.constant(z.clone());
        let g = m.generator.forward(tape, s_fake, zv, true)?;
        let p_real = m.discriminator.forward(tape, s_real, v, true)?;
        let p_fake = m.discriminator.forward(tape, s_fake, g, true)?;
        Ok(adv_loss_tape(tape, p_real, p_fake))
    })
    .unwrap()
}

/// Finite-difference check of the contrastive loss over encoder and
/// generator parameters.
pub fn grad_check_con(seed: u64, tau: f64) -> GradCheckReport {
    let (kg, _, _) = toy_graph(seed);
    let (mut model, _) = toy_completer(&kg, 3, seed);
    let mp = MessagePassing::new(&kg);
    let rows: Vec<usize> = (0..kg.num_entities()).collect();
    let z = normal_matrix(rows.len(), 2, 1.0, &mut rng_from_seed(seed + 200));
    gradient_check(&mut model, GRAD_EPS, GRAD_TOL, |m, tape: &mut Tape| {
        let s = m.encoder.forward(&mp, tape, true)?;
        let s = tape.gather_rows(s, &rows);
        let zv = tape.constant(z.clone());
        let g = m.generator.forward(tape, s, zv, true)?;
        Ok(contrastive_tape(tape, s, g, tau))
    })
    .unwrap()
}

/// Finite-difference check of the self-adversarial margin loss through
/// `scorer`, with the negative weights computed once and held fixed.
pub fn grad_check_margin(scorer: ScorerKind, seed: u64) -> GradCheckReport {
    let (kg, truth, _) = toy_graph(seed);
    let cfg = KgcConfig { d: 4, negatives: 3, finetune_visual: true, seed, ..KgcConfig::default() };
    let mut model = MultiModalKgcModel::for_store(kg.num_relations(), &truth, &cfg, scorer).unwrap();
    let mut rng = rng_from_seed(seed + 300);
    if let Some(g) = &mut model.gate_emb {
        *g.value_mut() = normal_matrix(g.shape().0, g.shape().1, 1.0, &mut rng);
    }
    let train: HashSet<Triple> = kg.train().iter().copied().collect();
    let pos: Vec<Triple> = kg.train().iter().take(6).copied().collect();
    let neg: Vec<Triple> = pos
        .iter()
        .flat_map(|&t| sample_negatives(t, kg.num_entities(), &train, cfg.negatives, &mut rng))
        .collect();
    let weights = {
        let mut tape = Tape::new();
        let s = model.score_tape(&mut tape, &neg, false).unwrap();
        let v = tape.value(s);
        let mut w = Array2::zeros((pos.len(), cfg.negatives));
        for i in 0..pos.len() {
            let row: Vec<f64> = (0..cfg.negatives).map(|j| v[[i * cfg.negatives + j, 0]]).collect();
            for (j, x) in self_adv_weights(&row, cfg.beta).into_iter().enumerate() {
                w[[i, j]] = x;
            }
        }
        w
    };
    gradient_check(&mut model, GRAD_EPS, GRAD_TOL, |m, tape: &mut Tape| {
        m.batch_loss(tape, &pos, &neg, &cfg, Some(weights.clone()), true)
    })
    .unwrap()
}
