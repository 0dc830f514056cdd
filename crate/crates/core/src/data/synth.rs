//! Seeded toy multimodal knowledge graphs.
//!
//! Entities are split into communities and every relation maps each
//! community onto a target community, so the triples carry learnable
//! structure. An entity's visual feature is a fixed random linear map of its
//! neighborhood-indicator vector (over all splits, both directions) plus
//! Gaussian noise, which makes the features a function of graph structure.

use std::collections::HashSet;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::graph::{KnowledgeGraph, Triple, Vocab};
use super::modality::ModalityStore;
use crate::error::{Error, Result};
use crate::nn::layers::normal_matrix;
use crate::rng::{stream_rng, Rng as SeedRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub num_entities: usize,
    pub num_relations: usize,
    pub num_triples: usize,
    pub d_v: usize,
    pub noise_level: f64,
    pub seed: u64,
    /// Number of entity communities (capped at the entity count); 1 gives
    /// uniformly random triples.
    pub communities: usize,
    /// Probability that a triple's tail is drawn from the community its
    /// relation targets rather than uniformly.
    pub affinity: f64,
    pub valid_fraction: f64,
    pub test_fraction: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_entities: 200,
            num_relations: 5,
            num_triples: 1500,
            d_v: 32,
            noise_level: 0.05,
            seed: 0,
            communities: 8,
            affinity: 0.9,
            valid_fraction: 0.1,
            test_fraction: 0.1,
        }
    }
}

impl SynthConfig {
    pub fn new(
        num_entities: usize,
        num_relations: usize,
        num_triples: usize,
        d_v: usize,
        noise_level: f64,
        seed: u64,
    ) -> Self {
        Self {
            num_entities,
            num_relations,
            num_triples,
            d_v,
            noise_level,
            seed,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.num_entities < 2 || self.num_relations == 0 || self.num_triples == 0 || self.d_v == 0 {
            return Err(Error::config(
                "synthetic graph needs ≥ 2 entities and positive relation, triple and feature counts",
            ));
        }
        if !(self.noise_level >= 0.0 && self.noise_level.is_finite()) {
            return Err(Error::config("noise level must be finite and non-negative"));
        }
        if !(0.0..=1.0).contains(&self.affinity) {
            return Err(Error::config("affinity must lie in [0, 1]"));
        }
        let held = self.valid_fraction + self.test_fraction;
        if self.valid_fraction < 0.0 || self.test_fraction < 0.0 || held >= 1.0 {
            return Err(Error::config("valid + test fractions must be non-negative and < 1"));
        }
        if self.communities == 0 {
            return Err(Error::config("communities must be positive"));
        }
        let n = self.num_entities as u128;
        let max = self.num_relations as u128 * n * (n - 1);
        if self.num_triples as u128 > max {
            return Err(Error::config(format!(
                "{} triples requested but only {max} distinct triples exist",
                self.num_triples
            )));
        }
        Ok(())
    }
}

const STREAM_TRIPLES: u64 = 1;
const STREAM_MAP: u64 = 2;
const STREAM_NOISE: u64 = 3;
const STREAM_SPLIT: u64 = 4;

/// Generate a toy graph together with its complete ground-truth features.
pub fn synth_mmkg(cfg: &SynthConfig) -> Result<(KnowledgeGraph, ModalityStore)> {
    cfg.validate()?;
    let n = cfg.num_entities;
    let mut rng = stream_rng(cfg.seed, STREAM_TRIPLES);
    let mut triples = sample_triples(cfg, &mut rng);

    let mut split_rng = stream_rng(cfg.seed, STREAM_SPLIT);
    triples.shuffle(&mut split_rng);
    let n_test = (cfg.test_fraction * triples.len() as f64).round() as usize;
    let n_valid = (cfg.valid_fraction * triples.len() as f64).round() as usize;
    let test = triples.split_off(triples.len() - n_test);
    let valid = triples.split_off(triples.len() - n_valid);
    let train = triples;

    let entities = Vocab::from_names((0..n).map(|i| format!("e{i}")))?;
    let relations = Vocab::from_names((0..cfg.num_relations).map(|r| format!("r{r}")))?;
    let kg = KnowledgeGraph::from_parts(entities, relations, train, valid, test)?;
    let features = structural_features(&kg, cfg);
    Ok((kg, ModalityStore::complete(features)))
}

fn community(entity: usize, communities: usize) -> usize {
    entity % communities
}

fn sample_triples(cfg: &SynthConfig, rng: &mut SeedRng) -> Vec<Triple> {
    let n = cfg.num_entities;
    let c = cfg.communities.min(n);
    // Each relation sends community k to target[r][k].
    let targets: Vec<Vec<usize>> = (0..cfg.num_relations)
        .map(|_| (0..c).map(|_| rng.random_range(0..c)).collect())
        .collect();
    let members: Vec<Vec<usize>> = (0..c)
        .map(|k| (0..n).filter(|&e| community(e, c) == k).collect())
        .collect();

    let mut seen = HashSet::with_capacity(cfg.num_triples);
    let mut out = Vec::with_capacity(cfg.num_triples);
    let max_attempts = cfg.num_triples.saturating_mul(200).max(10_000);
    let mut attempts = 0;
    while out.len() < cfg.num_triples && attempts < max_attempts {
        attempts += 1;
        let r = rng.random_range(0..cfg.num_relations);
        let h = rng.random_range(0..n);
        let t = if rng.random_bool(cfg.affinity) {
            let pool = &members[targets[r][community(h, c)]];
            pool[rng.random_range(0..pool.len())]
        } else {
            rng.random_range(0..n)
        };
        if h == t {
            continue;
        }
        let tr = Triple::new(h, r, t);
        if seen.insert(tr) {
            out.push(tr);
        }
    }
    if out.len() < cfg.num_triples {
        // Dense request: top up from the remaining distinct triples.
        let mut rest: Vec<Triple> = (0..cfg.num_relations)
            .flat_map(|r| (0..n).flat_map(move |h| (0..n).filter(move |&t| t != h).map(move |t| Triple::new(h, r, t))))
            .filter(|t| !seen.contains(t))
            .collect();
        rest.shuffle(rng);
        out.extend(rest.into_iter().take(cfg.num_triples - out.len()));
    }
    out
}

/// `v_i = M a_i + noise`, `a_i` the 0/1 neighbor indicator of entity `i`.
fn structural_features(kg: &KnowledgeGraph, cfg: &SynthConfig) -> Array2<f64> {
    let n = kg.num_entities();
    let mut neighbors: Vec<Vec<usize>> = vec![Vec::new(); n];
    for t in kg.all_triples() {
        neighbors[t.head].push(t.tail);
        neighbors[t.tail].push(t.head);
    }
    for nb in &mut neighbors {
        nb.sort_unstable();
        nb.dedup();
    }
    let mean_degree = neighbors.iter().map(Vec::len).sum::<usize>() as f64 / n as f64;
    let mut map_rng = stream_rng(cfg.seed, STREAM_MAP);
    // Column j of the map is entity j's contribution.
    let map = normal_matrix(n, cfg.d_v, 1.0 / mean_degree.max(1.0).sqrt(), &mut map_rng);
    let mut features = Array2::zeros((n, cfg.d_v));
    for (i, nb) in neighbors.iter().enumerate() {
        let mut row = features.row_mut(i);
        for &j in nb {
            row += &map.row(j);
        }
    }
    if cfg.noise_level > 0.0 {
        let mut noise_rng = stream_rng(cfg.seed, STREAM_NOISE);
        features += &normal_matrix(n, cfg.d_v, cfg.noise_level, &mut noise_rng);
    }
    features
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_and_no_self_loops() {
        let cfg = SynthConfig::new(50, 3, 300, 8, 0.05, 1);
        let (kg, store) = synth_mmkg(&cfg).unwrap();
        assert_eq!(kg.num_entities(), 50);
        assert_eq!(kg.num_relations(), 3);
        let all: Vec<_> = kg.all_triples().copied().collect();
        assert_eq!(all.len(), 300);
        assert!(all.iter().all(|t| t.head != t.tail));
        let unique: HashSet<_> = all.iter().collect();
        assert_eq!(unique.len(), 300);
        assert!(kg.split_overlaps().is_empty());
        assert_eq!(store.features().dim(), (50, 8));
        assert!(store.is_fully_complete());
    }

    #[test]
    fn deterministic() {
        let cfg = SynthConfig::new(40, 2, 120, 4, 0.1, 9);
        let (a, fa) = synth_mmkg(&cfg).unwrap();
        let (b, fb) = synth_mmkg(&cfg).unwrap();
        assert_eq!(a, b);
        assert!(fa
            .features()
            .iter()
            .zip(fb.features())
            .all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn noiseless_features_are_function_of_neighborhood() {
        let mut cfg = SynthConfig::new(30, 2, 80, 6, 0.0, 3);
        cfg.communities = 3;
        let (kg, store) = synth_mmkg(&cfg).unwrap();
        let mut nbs: Vec<Vec<usize>> = vec![Vec::new(); 30];
        for t in kg.all_triples() {
            nbs[t.head].push(t.tail);
            nbs[t.tail].push(t.head);
        }
        for nb in &mut nbs {
            nb.sort_unstable();
            nb.dedup();
        }
        for i in 0..30 {
            for j in 0..30 {
                if nbs[i] == nbs[j] {
                    assert_eq!(store.features().row(i), store.features().row(j));
                }
            }
            if nbs[i].is_empty() {
                assert!(store.features().row(i).iter().all(|&x| x == 0.0));
            }
        }
    }

    #[test]
    fn too_many_triples_is_error() {
        let cfg = SynthConfig::new(3, 1, 7, 2, 0.0, 0);
        assert!(synth_mmkg(&cfg).is_err());
        let full = SynthConfig::new(3, 1, 6, 2, 0.0, 0);
        let (kg, _) = synth_mmkg(&full).unwrap();
        assert_eq!(kg.all_triples().count(), 6);
    }
}
