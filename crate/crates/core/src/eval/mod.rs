//! Filtered link-prediction evaluation.
//!
//! Every test triple yields a tail query `(h, r, ?)` and a head query
//! `(?, r, t)`. Candidates that form a known triple (other than the answer
//! itself) are removed, and ties are mid-ranked.

mod bucket;

pub use bucket::{bucket_compare, BucketComparison, Buckets};

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{KnowledgeGraph, Triple};
use crate::error::{Error, Result};
use crate::exec::Exec;

pub const HITS_AT: [usize; 3] = [1, 3, 10];

/// Anything that can score every candidate of a link-prediction query.
pub trait LinkScorer: Sync {
    fn num_entities(&self) -> usize;
    /// Scores of `(h, r, e)` for every entity `e`.
    fn score_tails(&self, h: usize, r: usize) -> Vec<f64>;
    /// Scores of `(e, r, t)` for every entity `e`.
    fn score_heads(&self, r: usize, t: usize) -> Vec<f64>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Head,
    Tail,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterMode {
    /// Filter against train, valid and test.
    #[default]
    Full,
    /// Filter against train only.
    Train,
}

/// Known-true triples indexed by `(h, r)` and `(r, t)`.
#[derive(Debug, Clone, Default)]
pub struct KnownTriples {
    tails: HashMap<(usize, usize), HashSet<usize>>,
    heads: HashMap<(usize, usize), HashSet<usize>>,
}

impl KnownTriples {
    pub fn from_triples<'a>(triples: impl IntoIterator<Item = &'a Triple>) -> Self {
        let mut known = Self::default();
        for t in triples {
            known.tails.entry((t.head, t.relation)).or_default().insert(t.tail);
            known.heads.entry((t.relation, t.tail)).or_default().insert(t.head);
        }
        known
    }

    pub fn from_graph(graph: &KnowledgeGraph, mode: FilterMode) -> Self {
        match mode {
            FilterMode::Full => Self::from_triples(graph.all_triples()),
            FilterMode::Train => Self::from_triples(graph.train()),
        }
    }

    pub fn contains(&self, t: &Triple) -> bool {
        self.tails.get(&(t.head, t.relation)).is_some_and(|s| s.contains(&t.tail))
    }

    fn filtered(&self, triple: &Triple, direction: Direction) -> Option<&HashSet<usize>> {
        match direction {
            Direction::Tail => self.tails.get(&(triple.head, triple.relation)),
            Direction::Head => self.heads.get(&(triple.relation, triple.tail)),
        }
    }
}

/// `1 + #{greater} + #{equal}/2` over the candidates that survive `keep`.
/// The answer itself is never filtered; NaN scores rank last.
pub fn rank_from_scores(scores: &[f64], truth: usize, keep: impl Fn(usize) -> bool) -> f64 {
    let clean = |x: f64| if x.is_nan() { f64::NEG_INFINITY } else { x };
    let target = clean(scores[truth]);
    let (mut greater, mut equal) = (0usize, 0usize);
    for (e, &s) in scores.iter().enumerate() {
        if e == truth || !keep(e) {
            continue;
        }
        let s = clean(s);
        if s > target {
            greater += 1;
        } else if s == target {
            equal += 1;
        }
    }
    1.0 + greater as f64 + equal as f64 / 2.0
}

/// Filtered rank of the answer of `triple` for the query in `direction`.
pub fn filtered_rank<S: LinkScorer + ?Sized>(
    scorer: &S,
    triple: Triple,
    direction: Direction,
    known: &KnownTriples,
) -> f64 {
    let (scores, truth) = match direction {
        Direction::Tail => (scorer.score_tails(triple.head, triple.relation), triple.tail),
        Direction::Head => (scorer.score_heads(triple.relation, triple.tail), triple.head),
    };
    match known.filtered(&triple, direction) {
        Some(set) => rank_from_scores(&scores, truth, |e| !set.contains(&e)),
        None => rank_from_scores(&scores, truth, |_| true),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueryRank {
    pub head: usize,
    pub relation: usize,
    pub tail: usize,
    pub direction: Direction,
    pub rank: f64,
    /// Head or tail lacked visual features before completion.
    pub modality_missing: bool,
}

impl QueryRank {
    pub fn triple(&self) -> Triple {
        Triple::new(self.head, self.relation, self.tail)
    }
}

/// MRR and Hits@K over a set of ranks. All zero when `count` is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub count: usize,
    pub mrr: f64,
    pub hits: BTreeMap<usize, f64>,
}

impl Metrics {
    pub fn from_ranks(ranks: &[f64]) -> Self {
        let n = ranks.len();
        let frac = |k: usize| {
            if n == 0 {
                0.0
            } else {
                ranks.iter().filter(|&&r| r <= k as f64).count() as f64 / n as f64
            }
        };
        let mrr = if n == 0 { 0.0 } else { ranks.iter().map(|r| 1.0 / r).sum::<f64>() / n as f64 };
        Self {
            count: n,
            mrr,
            hits: HITS_AT.iter().map(|&k| (k, frac(k))).collect(),
        }
    }

    pub fn hits_at(&self, k: usize) -> f64 {
        self.hits.get(&k).copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_query: Vec<QueryRank>,
    pub overall: Metrics,
    pub modality_missing: Metrics,
    pub modality_complete: Metrics,
}

impl EvalReport {
    pub fn from_queries(per_query: Vec<QueryRank>) -> Self {
        let pick = |f: &dyn Fn(&QueryRank) -> bool| {
            let ranks: Vec<f64> = per_query.iter().filter(|q| f(q)).map(|q| q.rank).collect();
            Metrics::from_ranks(&ranks)
        };
        let overall = pick(&|_| true);
        let modality_missing = pick(&|q| q.modality_missing);
        let modality_complete = pick(&|q| !q.modality_missing);
        Self {
            per_query,
            overall,
            modality_missing,
            modality_complete,
        }
    }

    pub fn splits(&self) -> [(&'static str, &Metrics); 3] {
        [
            ("all", &self.overall),
            ("modality_missing", &self.modality_missing),
            ("modality_complete", &self.modality_complete),
        ]
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(file), self)
            .map_err(|e| Error::data(format!("{}: {e}", path.display())))
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_reader(std::io::BufReader::new(file))
            .map_err(|e| Error::data(format!("{}: {e}", path.display())))
    }

    /// `split,metric,value` rows.
    pub fn summary_rows(&self) -> Vec<(String, String, f64)> {
        let mut rows = Vec::new();
        for (name, m) in self.splits() {
            rows.push((name.to_string(), "count".to_string(), m.count as f64));
            rows.push((name.to_string(), "mrr".to_string(), m.mrr));
            for (k, v) in &m.hits {
                rows.push((name.to_string(), format!("hits@{k}"), *v));
            }
        }
        rows
    }

    pub fn save_summary_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::data(format!("{}: {e}", path.display())))?;
        let wrap = |e: csv::Error| Error::data(format!("{}: {e}", path.display()));
        w.write_record(["split", "metric", "value"]).map_err(wrap)?;
        for (split, metric, value) in self.summary_rows() {
            w.write_record([split, metric, value.to_string()]).map_err(wrap)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Rank both directions of every test triple. `mask` is the modality mask
/// before completion.
pub fn evaluate<S: LinkScorer + ?Sized>(
    scorer: &S,
    test: &[Triple],
    known: &KnownTriples,
    mask: &[bool],
    exec: Exec,
) -> Result<EvalReport> {
    let n = scorer.num_entities();
    if mask.len() != n {
        return Err(Error::shape(format!("mask covers {} entities, scorer {n}", mask.len())));
    }
    if let Some(t) = test.iter().find(|t| t.head >= n || t.tail >= n) {
        return Err(Error::data(format!("test triple {t:?} references an unknown entity")));
    }
    let queries: Vec<(Triple, Direction)> = test
        .iter()
        .flat_map(|&t| [(t, Direction::Tail), (t, Direction::Head)])
        .collect();
    let per_query = exec.map_slice(&queries, |&(t, direction)| QueryRank {
        head: t.head,
        relation: t.relation,
        tail: t.tail,
        direction,
        rank: filtered_rank(scorer, t, direction, known),
        modality_missing: !mask[t.head] || !mask[t.tail],
    });
    Ok(EvalReport::from_queries(per_query))
}
