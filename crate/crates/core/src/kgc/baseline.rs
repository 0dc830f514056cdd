//! Non-learned fills for modality-missing rows.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data::ModalityStore;
use crate::error::Result;
use crate::nn::layers::normal_matrix;
use crate::rng::stream_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    /// Seeded standard-normal rows.
    Random,
    /// All-ones rows.
    One,
}

const STREAM_RANDOM: u64 = 61;

/// Fill every missing row; present rows are unchanged.
pub fn baseline_completion(store: &ModalityStore, kind: Baseline, seed: u64) -> Result<ModalityStore> {
    let missing = store.missing_ids();
    let rows = match kind {
        Baseline::Random => normal_matrix(missing.len(), store.dim(), 1.0, &mut stream_rng(seed, STREAM_RANDOM)),
        Baseline::One => Array2::ones((missing.len(), store.dim())),
    };
    let mut out = store.clone();
    out.fill_rows(&missing, &rows)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store() -> ModalityStore {
        let f = Array2::from_shape_fn((6, 3), |(i, j)| (i * 3 + j) as f64);
        ModalityStore::new(f, vec![true, false, true, false, false, true]).unwrap()
    }

    #[test]
    fn ones() {
        let s = store();
        let out = baseline_completion(&s, Baseline::One, 0).unwrap();
        assert!(out.is_fully_complete());
        for i in s.missing_ids() {
            assert!(out.features().row(i).iter().all(|&x| x == 1.0));
        }
        for i in s.complete_ids() {
            assert_eq!(out.features().row(i), s.features().row(i));
        }
    }

    #[test]
    fn random_is_seeded() {
        let s = store();
        let a = baseline_completion(&s, Baseline::Random, 3).unwrap();
        let b = baseline_completion(&s, Baseline::Random, 3).unwrap();
        let c = baseline_completion(&s, Baseline::Random, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
