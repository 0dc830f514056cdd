//! K-sample generation, discriminator filtering and mean pooling.

use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use super::{CompleterConfig, CompleterModel};
use crate::data::{KnowledgeGraph, ModalityStore, Vocab};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::nn::layers::normal_matrix;
use crate::rng::{derive_seed, stream_rng};

/// Stream id of the per-entity completion noise.
pub const STREAM_COMPLETE: u64 = 31;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Impute modality-missing entities only.
    #[default]
    Gen,
    /// Regenerate every entity's feature.
    AllGen,
}

/// Mean of the rows whose flag is set; the mean of all rows when none is.
pub fn pool_candidates(candidates: &Array2<f64>, flags: &[bool]) -> Result<Array1<f64>> {
    if candidates.nrows() != flags.len() || flags.is_empty() {
        return Err(Error::shape(format!(
            "{} candidates with {} flags",
            candidates.nrows(),
            flags.len()
        )));
    }
    let accepted = flags.iter().filter(|&&f| f).count();
    let use_all = accepted == 0;
    let mut sum = Array1::zeros(candidates.ncols());
    for (row, &f) in candidates.rows().into_iter().zip(flags) {
        if f || use_all {
            sum += &row;
        }
    }
    let count = if use_all { flags.len() } else { accepted };
    Ok(sum / count as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    /// All rows present.
    pub store: ModalityStore,
    pub strategy: Strategy,
    pub k: usize,
    pub accept_threshold: f64,
    pub seed: u64,
    /// Entities whose rows were generated, ascending.
    pub targets: Vec<usize>,
    /// Accepted candidates per target, aligned with `targets`.
    pub accepted: Vec<usize>,
}

#[derive(Serialize)]
struct AcceptanceRecord<'a> {
    entity: &'a str,
    accepted: usize,
}

#[derive(Serialize)]
struct Provenance<'a> {
    strategy: Strategy,
    k: usize,
    accept_threshold: f64,
    seed: u64,
    fallback_entities: usize,
    acceptance: Vec<AcceptanceRecord<'a>>,
}

impl Completion {
    pub fn provenance_json(&self, entities: &Vocab) -> Result<String> {
        let acceptance = self
            .targets
            .iter()
            .zip(&self.accepted)
            .map(|(&e, &accepted)| AcceptanceRecord {
                entity: entities.decode(e).unwrap_or("?"),
                accepted,
            })
            .collect();
        let doc = Provenance {
            strategy: self.strategy,
            k: self.k,
            accept_threshold: self.accept_threshold,
            seed: self.seed,
            fallback_entities: self.accepted.iter().filter(|&&a| a == 0).count(),
            acceptance,
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn save_provenance(&self, path: &Path, entities: &Vocab) -> Result<()> {
        std::fs::write(path, self.provenance_json(entities)?).map_err(|e| Error::io(path, e))
    }
}

/// Impute features with a trained completer.
///
/// Each target draws its K noise vectors from a stream keyed by
/// `(seed, entity)`, so the result does not depend on `exec`.
pub fn complete_features(
    model: &CompleterModel,
    graph: &KnowledgeGraph,
    store: &ModalityStore,
    config: &CompleterConfig,
    exec: Exec,
) -> Result<Completion> {
    config.validate(store.dim())?;
    let s = model.structural_features(graph)?;
    if s.nrows() != store.num_entities() {
        return Err(Error::shape("structural features and store disagree on the entity count"));
    }
    let targets = match config.strategy {
        Strategy::Gen => store.missing_ids(),
        Strategy::AllGen => (0..store.num_entities()).collect(),
    };
    let base = derive_seed(config.seed, STREAM_COMPLETE);
    let results: Vec<Result<(Array1<f64>, usize)>> = exec.map_slice(&targets, |&e| {
        complete_one(model, s.row(e), config, stream_rng(base, e as u64))
    });

    let mut rows = Array2::zeros((targets.len(), store.dim()));
    let mut accepted = Vec::with_capacity(targets.len());
    for (k, r) in results.into_iter().enumerate() {
        let (row, n) = r?;
        rows.row_mut(k).assign(&row);
        accepted.push(n);
    }
    let mut out = store.clone();
    out.fill_rows(&targets, &rows)?;
    Ok(Completion {
        store: out,
        strategy: config.strategy,
        k: config.k,
        accept_threshold: config.accept_threshold,
        seed: config.seed,
        targets,
        accepted,
    })
}

fn complete_one(
    model: &CompleterModel,
    s: ArrayView1<f64>,
    config: &CompleterConfig,
    mut rng: crate::rng::Rng,
) -> Result<(Array1<f64>, usize)> {
    let z = normal_matrix(config.k, model.generator.d_z, 1.0, &mut rng);
    let s_rep = s.insert_axis(Axis(0)).broadcast((config.k, s.len())).expect("broadcast").to_owned();
    let candidates = model.generator.generate_batch(&s_rep, &z)?;
    let probs = model.discriminator.discriminate_batch(&s_rep, &candidates)?;
    let flags: Vec<bool> = probs.iter().map(|&p| p >= config.accept_threshold).collect();
    let n = flags.iter().filter(|&&f| f).count();
    Ok((pool_candidates(&candidates, &flags)?, n))
}

/// Mean cosine similarity between rows `ids` of `a` and `b`. A zero row
/// contributes 0.
pub fn imputation_cosine(a: &Array2<f64>, b: &Array2<f64>, ids: &[usize]) -> f64 {
    if ids.is_empty() {
        return 0.0;
    }
    let total: f64 = ids
        .iter()
        .map(|&i| {
            let (x, y) = (a.row(i), b.row(i));
            let d = x.dot(&x).sqrt() * y.dot(&y).sqrt();
            if d == 0.0 {
                0.0
            } else {
                x.dot(&y) / d
            }
        })
        .sum();
    total / ids.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{drop_modality, synth_mmkg, SynthConfig};
    use ndarray::array;

    #[test]
    fn mean_of_accepted() {
        let c = array![[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]];
        let v = pool_candidates(&c, &[true, false, true]).unwrap();
        assert_eq!(v, array![1.0, 0.5]);
    }

    #[test]
    fn all_accepted_and_all_rejected_give_plain_mean() {
        let c = array![[1.0, 0.0], [0.0, 1.0], [2.0, 2.0]];
        let mean = c.mean_axis(Axis(0)).unwrap();
        assert_eq!(pool_candidates(&c, &[true; 3]).unwrap(), mean);
        assert_eq!(pool_candidates(&c, &[false; 3]).unwrap(), mean);
    }

    #[test]
    fn flag_count_mismatch() {
        let c = array![[1.0], [2.0]];
        assert!(pool_candidates(&c, &[true]).is_err());
    }

    fn setup(strategy: Strategy) -> (KnowledgeGraph, ModalityStore, CompleterModel, CompleterConfig) {
        let (kg, full) = synth_mmkg(&SynthConfig::new(20, 2, 60, 4, 0.05, 3)).unwrap();
        let store = drop_modality(&full, 0.5, 3).unwrap();
        let cfg = CompleterConfig {
            d_s: 4,
            d_z: 2,
            hidden: 5,
            k: 16,
            strategy,
            seed: 9,
            ..CompleterConfig::default()
        };
        let model = CompleterModel::init(&kg, 4, &cfg).unwrap();
        (kg, store, model, cfg)
    }

    #[test]
    fn gen_keeps_complete_rows() {
        let (kg, store, model, cfg) = setup(Strategy::Gen);
        let out = complete_features(&model, &kg, &store, &cfg, Exec::Sequential).unwrap();
        assert!(out.store.is_fully_complete());
        for i in store.complete_ids() {
            for (a, b) in store.features().row(i).iter().zip(out.store.features().row(i)) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
        assert_eq!(out.targets, store.missing_ids());
        assert!(out.accepted.iter().all(|&n| n <= cfg.k));
    }

    #[test]
    fn all_gen_rewrites_everything() {
        let (kg, store, model, cfg) = setup(Strategy::AllGen);
        let out = complete_features(&model, &kg, &store, &cfg, Exec::Sequential).unwrap();
        assert_eq!(out.targets.len(), 20);
        let changed = store
            .complete_ids()
            .into_iter()
            .any(|i| store.features().row(i) != out.store.features().row(i));
        assert!(changed);
    }

    #[test]
    fn parallel_matches_sequential() {
        let (kg, store, model, cfg) = setup(Strategy::AllGen);
        let a = complete_features(&model, &kg, &store, &cfg, Exec::Sequential).unwrap();
        let b = complete_features(&model, &kg, &store, &cfg, Exec::Parallel).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn provenance_lists_targets() {
        let (kg, store, model, cfg) = setup(Strategy::Gen);
        let out = complete_features(&model, &kg, &store, &cfg, Exec::Sequential).unwrap();
        let v: serde_json::Value = serde_json::from_str(&out.provenance_json(kg.entities()).unwrap()).unwrap();
        assert_eq!(v["k"], 16);
        assert_eq!(v["strategy"], "gen");
        assert_eq!(v["acceptance"].as_array().unwrap().len(), store.missing_ids().len());
    }

    #[test]
    fn cosine_helper() {
        let a = array![[1.0, 0.0], [0.0, 2.0], [0.0, 0.0]];
        let b = array![[2.0, 0.0], [1.0, 0.0], [1.0, 1.0]];
        assert_eq!(imputation_cosine(&a, &b, &[0, 1]), 0.5);
        assert_eq!(imputation_cosine(&a, &b, &[2]), 0.0);
    }
}
