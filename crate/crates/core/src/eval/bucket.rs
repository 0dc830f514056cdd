use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Direction, EvalReport};
use crate::error::{Error, Result};

/// Rank intervals given by their inclusive upper bounds; a final open
/// interval catches everything above the last bound.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Buckets {
    uppers: Vec<usize>,
}

impl Default for Buckets {
    fn default() -> Self {
        Self { uppers: vec![1, 3, 10, 50, 200] }
    }
}

impl Buckets {
    pub fn new(uppers: Vec<usize>) -> Result<Self> {
        if uppers.is_empty() || uppers[0] == 0 || uppers.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("bucket bounds must be positive and strictly increasing"));
        }
        Ok(Self { uppers })
    }

    pub fn len(&self) -> usize {
        self.uppers.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Mid-ranks are floored before bucketing.
    pub fn index(&self, rank: f64) -> usize {
        let r = rank.floor().max(1.0) as usize;
        self.uppers.iter().position(|&u| r <= u).unwrap_or(self.uppers.len())
    }

    pub fn labels(&self) -> Vec<String> {
        let mut lo = 1;
        let mut out = Vec::with_capacity(self.len());
        for &u in &self.uppers {
            out.push(if lo == u { u.to_string() } else { format!("{lo}-{u}") });
            lo = u + 1;
        }
        out.push(format!("{lo}+"));
        out
    }
}

/// `matrix[x][y]` counts queries in bucket `x` under report A and `y`
/// under report B.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketComparison {
    pub labels: Vec<String>,
    pub overall: Vec<Vec<usize>>,
    pub modality_missing: Vec<Vec<usize>>,
    pub modality_complete: Vec<Vec<usize>>,
}

type Key = (usize, usize, usize, Direction);

pub fn bucket_compare(a: &EvalReport, b: &EvalReport, buckets: &Buckets) -> Result<BucketComparison> {
    let n = buckets.len();
    let key = |q: &super::QueryRank| -> Key { (q.head, q.relation, q.tail, q.direction) };
    let mut b_ranks: HashMap<Key, Vec<(f64, bool)>> = HashMap::new();
    for q in &b.per_query {
        b_ranks.entry(key(q)).or_default().push((q.rank, q.modality_missing));
    }
    if a.per_query.len() != b.per_query.len() {
        return Err(Error::data(format!(
            "reports cover different query sets ({} vs {} queries)",
            a.per_query.len(),
            b.per_query.len()
        )));
    }
    let mut out = BucketComparison {
        labels: buckets.labels(),
        overall: vec![vec![0; n]; n],
        modality_missing: vec![vec![0; n]; n],
        modality_complete: vec![vec![0; n]; n],
    };
    for q in &a.per_query {
        let (rank_b, missing_b) = b_ranks
            .get_mut(&key(q))
            .and_then(|v| v.pop())
            .ok_or_else(|| Error::data(format!("query {:?} missing from the second report", key(q))))?;
        if missing_b != q.modality_missing {
            return Err(Error::data(format!("reports disagree on the modality split of {:?}", key(q))));
        }
        let (x, y) = (buckets.index(q.rank), buckets.index(rank_b));
        out.overall[x][y] += 1;
        let split = if q.modality_missing { &mut out.modality_missing } else { &mut out.modality_complete };
        split[x][y] += 1;
    }
    Ok(out)
}

impl BucketComparison {
    pub fn splits(&self) -> [(&'static str, &Vec<Vec<usize>>); 3] {
        [
            ("all", &self.overall),
            ("modality_missing", &self.modality_missing),
            ("modality_complete", &self.modality_complete),
        ]
    }

    /// One row per (split, bucket of A); one column per bucket of B.
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let wrap = |e: csv::Error| Error::data(format!("{}: {e}", path.display()));
        let mut w = csv::Writer::from_path(path).map_err(wrap)?;
        let mut header = vec!["split".to_string(), "bucket_a".to_string()];
        header.extend(self.labels.iter().cloned());
        w.write_record(&header).map_err(wrap)?;
        for (name, m) in self.splits() {
            for (label, row) in self.labels.iter().zip(m) {
                let mut rec = vec![name.to_string(), label.clone()];
                rec.extend(row.iter().map(|c| c.to_string()));
                w.write_record(&rec).map_err(wrap)?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}
