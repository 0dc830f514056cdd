//! Visual feature matrix plus the presence mask that splits entities into
//! modality-complete and modality-missing sets.

use ndarray::Array2;
use rand::seq::index::sample;

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

#[derive(Debug, Clone, PartialEq)]
pub struct ModalityStore {
    features: Array2<f64>,
    mask: Vec<bool>,
}

impl ModalityStore {
    /// Every entity has a feature.
    pub fn complete(features: Array2<f64>) -> Self {
        let mask = vec![true; features.nrows()];
        Self { features, mask }
    }

    /// Rows with `mask = false` are zeroed.
    pub fn new(mut features: Array2<f64>, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != features.nrows() {
            return Err(Error::shape(format!(
                "mask length {} differs from {} feature rows",
                mask.len(),
                features.nrows()
            )));
        }
        for (mut row, &present) in features.rows_mut().into_iter().zip(&mask) {
            if !present {
                row.fill(0.0);
            }
        }
        Ok(Self { features, mask })
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn num_entities(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_present(&self, entity: usize) -> bool {
        self.mask[entity]
    }

    pub fn is_fully_complete(&self) -> bool {
        self.mask.iter().all(|&m| m)
    }

    /// Ids of modality-complete entities, ascending.
    pub fn complete_ids(&self) -> Vec<usize> {
        (0..self.mask.len()).filter(|&i| self.mask[i]).collect()
    }

    /// Ids of modality-missing entities, ascending.
    pub fn missing_ids(&self) -> Vec<usize> {
        (0..self.mask.len()).filter(|&i| !self.mask[i]).collect()
    }

    /// Replace the rows of `entities` and mark them present.
    pub fn fill_rows(&mut self, entities: &[usize], rows: &Array2<f64>) -> Result<()> {
        if rows.dim() != (entities.len(), self.dim()) {
            return Err(Error::shape(format!(
                "fill rows {:?}, expected ({}, {})",
                rows.dim(),
                entities.len(),
                self.dim()
            )));
        }
        for (k, &e) in entities.iter().enumerate() {
            self.features.row_mut(e).assign(&rows.row(k));
            self.mask[e] = true;
        }
        Ok(())
    }
}

/// Number of entities masked for a given rate: `floor(rate · n)`.
///
/// A tolerance of 1e-9 absorbs representation error so that e.g.
/// `0.29 · 100` yields 29.
pub fn masked_count(missing_rate: f64, n: usize) -> usize {
    ((missing_rate * n as f64) + 1e-9).floor() as usize
}

/// Hide the features of `floor(missing_rate · |E|)` uniformly chosen entities.
pub fn drop_modality(store: &ModalityStore, missing_rate: f64, seed: u64) -> Result<ModalityStore> {
    if !(0.0..=1.0).contains(&missing_rate) {
        return Err(Error::config(format!(
            "missing rate must lie in [0, 1], got {missing_rate}"
        )));
    }
    if !store.is_fully_complete() {
        return Err(Error::data(
            "drop_modality expects a modality-complete store",
        ));
    }
    let n = store.num_entities();
    let k = masked_count(missing_rate, n).min(n);
    let mut rng = rng_from_seed(seed);
    let mut mask = vec![true; n];
    for i in sample(&mut rng, n, k).into_iter() {
        mask[i] = false;
    }
    ModalityStore::new(store.features().clone(), mask)
}
