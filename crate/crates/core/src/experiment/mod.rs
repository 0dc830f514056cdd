//! End-to-end runs: modality dropping, completion, KGC training,
//! evaluation, and grid sweeps over them.

mod manifest;
mod sweep;

pub use manifest::{content_hash, file_hash, Manifest, StageRecord, LOG, MANIFEST};
pub use sweep::{cell_config, expand_grid, set_path, sweep, SweepRow, SweepTable};

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::completer::{
    complete_features, imputation_cosine, train_completer, CompleterConfig, CompleterModel, Strategy,
};
use crate::data::{drop_modality, load_graph, load_modality, synth_mmkg, KnowledgeGraph, ModalityStore, SynthConfig};
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalReport, FilterMode, KnownTriples};
use crate::exec::Exec;
use crate::kgc::{baseline_completion, train_kgc, Baseline, FrozenModel, KgcConfig, ScorerKind};
use crate::nn::Checkpoint;
use crate::rng::derive_seed;
use manifest::Recorder;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompletionMode {
    #[default]
    MacoGen,
    MacoAllGen,
    Random,
    One,
}

impl CompletionMode {
    pub const ALL: [CompletionMode; 4] =
        [CompletionMode::MacoGen, CompletionMode::MacoAllGen, CompletionMode::Random, CompletionMode::One];

    pub fn id(self) -> &'static str {
        match self {
            CompletionMode::MacoGen => "maco_gen",
            CompletionMode::MacoAllGen => "maco_all_gen",
            CompletionMode::Random => "random",
            CompletionMode::One => "one",
        }
    }

    pub fn uses_completer(self) -> bool {
        matches!(self, CompletionMode::MacoGen | CompletionMode::MacoAllGen)
    }
}

impl std::str::FromStr for CompletionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.id() == s)
            .ok_or_else(|| Error::config(format!("unknown completion mode `{s}`")))
    }
}

/// Where the graph and visual features come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Synth(SynthConfig),
    Files {
        /// Directory with `train.txt`, `valid.txt`, `test.txt`.
        graph_dir: PathBuf,
        features: PathBuf,
        #[serde(default)]
        mask: Option<PathBuf>,
    },
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Synth(SynthConfig::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub data: DataSource,
    pub missing_rate: f64,
    pub completer: CompleterConfig,
    pub kgc: KgcConfig,
    pub completion_mode: CompletionMode,
    pub scorer: ScorerKind,
    pub output_dir: PathBuf,
    /// Stage seeds derive from this; the synthetic graph keeps its own.
    pub seed: u64,
    pub filter: FilterMode,
    pub exec: Exec,
    /// Also write the completed feature table.
    pub save_completed_features: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            data: DataSource::default(),
            missing_rate: 0.4,
            completer: CompleterConfig { d_s: 32, ..CompleterConfig::default() },
            kgc: KgcConfig { d: 32, ..KgcConfig::default() },
            completion_mode: CompletionMode::MacoGen,
            scorer: ScorerKind::IkrlLike,
            output_dir: PathBuf::from("runs/default"),
            seed: 0,
            filter: FilterMode::Full,
            exec: Exec::Parallel,
            save_completed_features: false,
        }
    }
}

const STAGE_DROP: u64 = 1;
const STAGE_COMPLETER: u64 = 2;
const STAGE_KGC: u64 = 3;
const STAGE_BASELINE: u64 = 4;

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn drop_seed(&self) -> u64 {
        derive_seed(self.seed, STAGE_DROP)
    }

    /// Sub-configurations with their seeds derived from `seed`.
    pub fn resolved(&self) -> Self {
        let mut out = self.clone();
        out.completer.seed = derive_seed(self.seed, STAGE_COMPLETER);
        out.completer.strategy = match self.completion_mode {
            CompletionMode::MacoAllGen => Strategy::AllGen,
            _ => Strategy::Gen,
        };
        out.kgc.seed = derive_seed(self.seed, STAGE_KGC);
        out
    }

    pub fn validate(&self, d_v: usize) -> Result<()> {
        if !(0.0..=1.0).contains(&self.missing_rate) {
            return Err(Error::config(format!("missing rate must lie in [0, 1], got {}", self.missing_rate)));
        }
        if self.completion_mode.uses_completer() {
            self.completer.validate(d_v)?;
        }
        self.kgc.validate(self.scorer)
    }
}

/// Result of a run, mirroring what is written to its directory.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub report: EvalReport,
    /// `(split, metric, value)` rows of `metrics.csv`.
    pub metrics: Vec<(String, String, f64)>,
    /// Mean cosine to the ground truth over entities whose features were
    /// dropped; `None` when nothing was dropped.
    pub imputation_cosine: Option<f64>,
    pub completed: ModalityStore,
    /// Store after dropping, before completion.
    pub masked: ModalityStore,
}

impl RunOutcome {
    pub fn metric(&self, split: &str, metric: &str) -> Option<f64> {
        self.metrics.iter().find(|(s, m, _)| s == split && m == metric).map(|r| r.2)
    }
}

/// Graph, ground-truth store and the hashes identifying them.
pub fn load_data(source: &DataSource) -> Result<(KnowledgeGraph, ModalityStore, BTreeMap<String, String>)> {
    let mut hashes = BTreeMap::new();
    match source {
        DataSource::Synth(cfg) => {
            let (kg, store) = synth_mmkg(cfg)?;
            hashes.insert("synth_config".to_string(), content_hash(serde_json::to_string(cfg)?.as_bytes()));
            Ok((kg, store, hashes))
        }
        DataSource::Files { graph_dir, features, mask } => {
            let kg = load_graph(graph_dir)?;
            for name in ["train.txt", "valid.txt", "test.txt", "entities.txt", "relations.txt"] {
                let p = graph_dir.join(name);
                if p.exists() {
                    hashes.insert(name.to_string(), file_hash(&p)?);
                }
            }
            hashes.insert("features".to_string(), file_hash(features)?);
            if let Some(m) = mask {
                hashes.insert("mask".to_string(), file_hash(m)?);
            }
            let store = load_modality(features, mask.as_deref(), kg.entities())?;
            Ok((kg, store, hashes))
        }
    }
}

/// Drop features at `missing_rate`; an already-masked store is used as is
/// when the rate is zero.
pub fn mask_store(store: &ModalityStore, missing_rate: f64, seed: u64) -> Result<ModalityStore> {
    if missing_rate == 0.0 && !store.is_fully_complete() {
        return Ok(store.clone());
    }
    drop_modality(store, missing_rate, seed)
}

fn write_metrics(path: &Path, rows: &[(String, String, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["split", "metric", "value"])?;
    for (s, m, v) in rows {
        w.write_record([s.as_str(), m.as_str(), &v.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)?).map_err(|e| Error::io(path, e))
}

fn write_cosines(path: &Path, kg: &KnowledgeGraph, truth: &ModalityStore, completed: &ModalityStore, ids: &[usize]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["entity", "cosine"])?;
    for &i in ids {
        let c = imputation_cosine(truth.features(), completed.features(), &[i]);
        w.write_record([kg.entities().decode(i).unwrap_or("?"), &c.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Run every stage and write the run directory `config.output_dir`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunOutcome> {
    let cfg = config.resolved();
    let mut rec = Recorder::create(&cfg.output_dir, cfg.seed)?;
    let snapshot = cfg.to_json()?;
    fs::write(rec.artifact("config.json"), &snapshot).map_err(|e| Error::io(cfg.output_dir.join("config.json"), e))?;
    rec.inputs.insert("config".to_string(), content_hash(snapshot.as_bytes()));

    let (kg, truth, masked) = rec.stage("prepare", |rec| {
        let (kg, truth, hashes) = load_data(&cfg.data)?;
        rec.inputs.extend(hashes);
        cfg.validate(truth.dim())?;
        let masked = mask_store(&truth, cfg.missing_rate, cfg.drop_seed())?;
        crate::data::io::save_mask(&rec.artifact("mask.txt"), kg.entities(), masked.mask())?;
        rec.log(&format!(
            "{} entities, {} relations, {}/{}/{} triples, {} modality-missing",
            kg.num_entities(),
            kg.num_relations(),
            kg.train().len(),
            kg.valid().len(),
            kg.test().len(),
            masked.missing_ids().len()
        ));
        Ok((kg, truth, masked))
    })?;

    let completer = if cfg.completion_mode.uses_completer() {
        Some(rec.stage("train_completer", |rec| {
            let mut model = CompleterModel::init(&kg, masked.dim(), &cfg.completer)?;
            let history = train_completer(&kg, &masked, &mut model, &cfg.completer)?;
            write_json(&rec.artifact("completer_history.json"), &history)?;
            let mut meta = BTreeMap::new();
            meta.insert("kind".to_string(), "completer".to_string());
            Checkpoint::from_model(&model, meta).save(&rec.artifact("completer.ckpt"))?;
            Ok(model)
        })?)
    } else {
        None
    };

    let completed = rec.stage("complete", |rec| {
        let completed = match (&completer, cfg.completion_mode) {
            (Some(model), _) => {
                let c = complete_features(model, &kg, &masked, &cfg.completer, cfg.exec)?;
                c.save_provenance(&rec.artifact("completion.json"), kg.entities())?;
                c.store
            }
            (None, CompletionMode::Random) => {
                baseline_completion(&masked, Baseline::Random, derive_seed(cfg.seed, STAGE_BASELINE))?
            }
            (None, _) => baseline_completion(&masked, Baseline::One, derive_seed(cfg.seed, STAGE_BASELINE))?,
        };
        if cfg.save_completed_features {
            crate::data::io::save_features(&rec.artifact("completed_features.tsv"), kg.entities(), completed.features())?;
        }
        Ok(completed)
    })?;

    let dropped: Vec<usize> = if truth.is_fully_complete() {
        masked.missing_ids()
    } else {
        (0..truth.num_entities()).filter(|&i| truth.is_present(i) && !masked.is_present(i)).collect()
    };
    let cosine = (!dropped.is_empty()).then(|| imputation_cosine(truth.features(), completed.features(), &dropped));
    if cosine.is_some() {
        write_cosines(&rec.artifact("imputation_cosine.csv"), &kg, &truth, &completed, &dropped)?;
    }

    let model = rec.stage("train_kgc", |rec| {
        let (model, history) = train_kgc(&kg, &completed, &cfg.kgc, cfg.scorer)?;
        write_json(&rec.artifact("kgc_history.json"), &history)?;
        model.checkpoint().save(&rec.artifact("kgc.ckpt"))?;
        Ok(model)
    })?;

    let (report, metrics) = rec.stage("evaluate", |rec| {
        let known = KnownTriples::from_graph(&kg, cfg.filter);
        let report = evaluate(&FrozenModel::new(&model), kg.test(), &known, masked.mask(), cfg.exec)?;
        report.save_json(&rec.artifact("eval.json"))?;
        report.save_summary_csv(&rec.artifact("eval_summary.csv"))?;
        let mut metrics = report.summary_rows();
        if let Some(c) = cosine {
            metrics.push(("imputation".to_string(), "cosine".to_string(), c));
        }
        write_metrics(&rec.artifact("metrics.csv"), &metrics)?;
        rec.log(&format!("test MRR {:.4}, Hits@10 {:.4}", report.overall.mrr, report.overall.hits_at(10)));
        Ok((report, metrics))
    })?;

    rec.write_manifest(None)?;
    Ok(RunOutcome {
        dir: rec.dir().to_path_buf(),
        report,
        metrics,
        imputation_cosine: cosine,
        completed,
        masked,
    })
}
