use std::collections::BTreeMap;
use std::path::Path;

use serde_json::Value;

use super::{run_experiment, ExperimentConfig};
use crate::error::{Error, Result};
use crate::rng::derive_seed;

/// Overwrite the value at a dotted path; every segment must already exist.
pub fn set_path(root: &mut Value, path: &str, value: Value) -> Result<()> {
    let mut cur = root;
    for seg in path.split('.') {
        cur = cur
            .as_object_mut()
            .and_then(|o| o.get_mut(seg))
            .ok_or_else(|| Error::config(format!("unknown config parameter `{path}`")))?;
    }
    *cur = value;
    Ok(())
}

/// Cartesian product in key order, last key varying fastest.
pub fn expand_grid(grid: &BTreeMap<String, Vec<Value>>) -> Result<Vec<Vec<(String, Value)>>> {
    if grid.is_empty() || grid.values().any(Vec::is_empty) {
        return Err(Error::config("sweep grid must name at least one parameter, each with at least one value"));
    }
    let mut cells: Vec<Vec<(String, Value)>> = vec![Vec::new()];
    for (key, values) in grid {
        cells = cells
            .into_iter()
            .flat_map(|cell| {
                values.iter().map(move |v| {
                    let mut c = cell.clone();
                    c.push((key.clone(), v.clone()));
                    c
                })
            })
            .collect();
    }
    Ok(cells)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub cell: usize,
    pub seed: u64,
    pub params: Vec<(String, Value)>,
    pub mrr: f64,
    pub hits: BTreeMap<usize, f64>,
    pub imputation_cosine: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub parameters: Vec<String>,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["cell".to_string(), "seed".to_string()];
        header.extend(self.parameters.iter().cloned());
        header.extend(["mrr", "hits@1", "hits@3", "hits@10", "imputation_cosine"].map(String::from));
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![r.cell.to_string(), r.seed.to_string()];
            rec.extend(r.params.iter().map(|(_, v)| match v {
                Value::String(s) => s.clone(),
                other => other.to_string(),
            }));
            rec.push(r.mrr.to_string());
            for k in crate::eval::HITS_AT {
                rec.push(r.hits.get(&k).copied().unwrap_or(0.0).to_string());
            }
            rec.push(r.imputation_cosine.map(|c| c.to_string()).unwrap_or_default());
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Configuration of one sweep cell: grid values applied, seed derived
/// from the base seed and cell index, output under `cell_NNN`.
pub fn cell_config(base: &ExperimentConfig, index: usize, params: &[(String, Value)]) -> Result<ExperimentConfig> {
    let mut doc = serde_json::to_value(base)?;
    for (k, v) in params {
        set_path(&mut doc, k, v.clone())?;
    }
    let mut cfg: ExperimentConfig =
        serde_json::from_value(doc).map_err(|e| Error::config(format!("sweep cell {index}: {e}")))?;
    cfg.seed = derive_seed(base.seed, index as u64);
    cfg.output_dir = base.output_dir.join(format!("cell_{index:03}"));
    Ok(cfg)
}

/// Run every cell in order and write `sweep.csv` under the base output
/// directory.
pub fn sweep(base: &ExperimentConfig, grid: &BTreeMap<String, Vec<Value>>) -> Result<SweepTable> {
    let cells = expand_grid(grid)?;
    let configs: Vec<ExperimentConfig> = cells
        .iter()
        .enumerate()
        .map(|(i, p)| cell_config(base, i, p))
        .collect::<Result<_>>()?;
    let mut rows = Vec::with_capacity(cells.len());
    for (i, (cfg, params)) in configs.iter().zip(cells).enumerate() {
        log::info!("sweep cell {i}: {params:?}");
        let out = run_experiment(cfg)?;
        rows.push(SweepRow {
            cell: i,
            seed: cfg.seed,
            params,
            mrr: out.report.overall.mrr,
            hits: out.report.overall.hits.clone(),
            imputation_cosine: out.imputation_cosine,
        });
    }
    let table = SweepTable { parameters: grid.keys().cloned().collect(), rows };
    std::fs::create_dir_all(&base.output_dir).map_err(|e| Error::io(&base.output_dir, e))?;
    table.save_csv(&base.output_dir.join("sweep.csv"))?;
    Ok(table)
}
