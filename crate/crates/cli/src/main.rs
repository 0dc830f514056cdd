use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::Value;

use mmkg_core::completer::{complete_features, train_completer, CompleterModel};
use mmkg_core::data::io::{save_features, save_mask};
use mmkg_core::data::{load_graph, load_modality, save_graph, KnowledgeGraph, ModalityStore};
use mmkg_core::eval::{bucket_compare, evaluate, Buckets, EvalReport, FilterMode, KnownTriples};
use mmkg_core::experiment::{load_data, mask_store, run_experiment, set_path, sweep, ExperimentConfig};
use mmkg_core::kgc::{train_kgc, FrozenModel, MultiModalKgcModel};
use mmkg_core::nn::{Checkpoint, Parameterized};
use mmkg_core::{Error, Exec, Result};

/// Adversarial completion of missing visual features and multimodal link
/// prediction.
#[derive(Parser)]
#[command(name = "mmkg", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a dataset directory: graph, ground-truth features, mask.
    Prepare(PrepareArgs),
    /// Train the feature completer on a prepared directory.
    TrainCompleter(StageArgs),
    /// Impute missing features with a trained completer.
    Complete(StageArgs),
    /// Train a link-prediction model on completed features.
    TrainKgc(StageArgs),
    /// Rank the test split with a trained link-prediction model.
    Evaluate(StageArgs),
    /// Rank-bucket comparison of two evaluation reports.
    Compare(CompareArgs),
    /// Full pipeline into one run directory.
    Run(ConfigArgs),
    /// Grid over configuration parameters.
    Sweep(SweepArgs),
}

/// Experiment configuration: file first, then flags.
#[derive(Args, Clone, Default)]
struct ConfigArgs {
    /// JSON file with `ExperimentConfig` fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    missing_rate: Option<f64>,
    /// maco_gen, maco_all_gen, random or one.
    #[arg(long)]
    completion_mode: Option<String>,
    /// ikrl_like, tbkgc_like or rsme_gated.
    #[arg(long)]
    scorer: Option<String>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Filter known triples of the training split only.
    #[arg(long)]
    train_filter: bool,
    /// Disable data-parallel loops.
    #[arg(long)]
    sequential: bool,
    /// Dotted-path override, e.g. `completer.tau=2` (repeatable).
    #[arg(long = "set", value_name = "PATH=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct PrepareArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Directory to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct StageArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Directory written by `prepare`.
    #[arg(long)]
    data: PathBuf,
    /// Feature table to use instead of the prepared one.
    #[arg(long)]
    features: Option<PathBuf>,
    /// Checkpoint to read.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Output file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    a: PathBuf,
    b: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Inclusive upper bounds of all but the last bucket.
    #[arg(long, value_delimiter = ',', default_values_t = [1usize, 3, 10, 50, 200])]
    bounds: Vec<usize>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// `path=v1,v2,...` (repeatable); values are parsed as JSON when possible.
    #[arg(long, required = true)]
    grid: Vec<String>,
}

fn parse_value(text: &str) -> Value {
    serde_json::from_str(text).unwrap_or_else(|_| Value::String(text.to_string()))
}

fn split_assignment(s: &str) -> Result<(&str, &str)> {
    s.split_once('=')
        .ok_or_else(|| Error::config(format!("expected PATH=VALUE, got `{s}`")))
}

impl ConfigArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if !self.overrides.is_empty() {
            let mut doc = serde_json::to_value(&cfg)?;
            for o in &self.overrides {
                let (k, v) = split_assignment(o)?;
                set_path(&mut doc, k, parse_value(v))?;
            }
            cfg = serde_json::from_value(doc).map_err(|e| Error::config(e.to_string()))?;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(m) = self.missing_rate {
            cfg.missing_rate = m;
        }
        if let Some(m) = &self.completion_mode {
            cfg.completion_mode = m.parse()?;
        }
        if let Some(s) = &self.scorer {
            cfg.scorer = s.parse()?;
        }
        if let Some(d) = &self.output_dir {
            cfg.output_dir = d.clone();
        }
        if self.train_filter {
            cfg.filter = FilterMode::Train;
        }
        if self.sequential {
            cfg.exec = Exec::Sequential;
        }
        Ok(cfg.resolved())
    }
}

const FEATURES: &str = "features.tsv";
const MASK: &str = "mask.txt";

fn create_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => fs::create_dir_all(p).map_err(|e| Error::io(p, e)),
        _ => Ok(()),
    }
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    create_parent(path)?;
    fs::write(path, serde_json::to_string_pretty(value)?).map_err(|e| Error::io(path, e))
}

/// Graph, masked store and (when given) an alternative feature table.
fn load_prepared(args: &StageArgs) -> Result<(KnowledgeGraph, ModalityStore, Option<ModalityStore>)> {
    let kg = load_graph(&args.data)?;
    let masked = load_modality(&args.data.join(FEATURES), Some(&args.data.join(MASK)), kg.entities())?;
    let alt = match &args.features {
        Some(p) => Some(load_modality(p, None, kg.entities())?),
        None => None,
    };
    Ok((kg, masked, alt))
}

fn required<'a>(p: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    p.as_deref().ok_or_else(|| Error::config(format!("--{flag} is required")))
}

fn completer_model(kg: &KnowledgeGraph, d_v: usize, cfg: &ExperimentConfig, ckpt: Option<&Path>) -> Result<CompleterModel> {
    let mut model = CompleterModel::init(kg, d_v, &cfg.completer)?;
    if let Some(p) = ckpt {
        Checkpoint::load(p)?.load_into(&mut model)?;
    }
    Ok(model)
}

fn kgc_model(kg: &KnowledgeGraph, store: &ModalityStore, cfg: &ExperimentConfig, ckpt: &Path) -> Result<MultiModalKgcModel> {
    let mut model = MultiModalKgcModel::for_store(kg.num_relations(), store, &cfg.kgc, cfg.scorer)?;
    model.restore(&Checkpoint::load(ckpt)?)?;
    Ok(model)
}

fn prepare(args: &PrepareArgs) -> Result<()> {
    let cfg = args.config.resolve()?;
    let (kg, truth, _) = load_data(&cfg.data)?;
    let masked = mask_store(&truth, cfg.missing_rate, cfg.drop_seed())?;
    fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    save_graph(&args.out, &kg)?;
    save_features(&args.out.join(FEATURES), kg.entities(), truth.features())?;
    save_mask(&args.out.join(MASK), kg.entities(), masked.mask())?;
    println!(
        "{}: {} entities, {} relations, {} modality-missing",
        args.out.display(),
        kg.num_entities(),
        kg.num_relations(),
        masked.missing_ids().len()
    );
    Ok(())
}

fn run_stage(cmd: &Command) -> Result<()> {
    match cmd {
        Command::Prepare(a) => prepare(a),
        Command::TrainCompleter(a) => {
            let cfg = a.config.resolve()?;
            let (kg, masked, _) = load_prepared(a)?;
            let mut model = completer_model(&kg, masked.dim(), &cfg, a.checkpoint.as_deref())?;
            let history = train_completer(&kg, &masked, &mut model, &cfg.completer)?;
            create_parent(&a.out)?;
            Checkpoint::from_model(&model, BTreeMap::new()).save(&a.out)?;
            write_json(&a.out.with_extension("history.json"), &history)?;
            println!("{} parameters written to {}", model.num_params(), a.out.display());
            Ok(())
        }
        Command::Complete(a) => {
            let cfg = a.config.resolve()?;
            let (kg, masked, _) = load_prepared(a)?;
            let model = completer_model(&kg, masked.dim(), &cfg, Some(required(&a.checkpoint, "checkpoint")?))?;
            let completion = complete_features(&model, &kg, &masked, &cfg.completer, cfg.exec)?;
            create_parent(&a.out)?;
            save_features(&a.out, kg.entities(), completion.store.features())?;
            completion.save_provenance(&a.out.with_extension("provenance.json"), kg.entities())?;
            println!("{} rows generated into {}", completion.targets.len(), a.out.display());
            Ok(())
        }
        Command::TrainKgc(a) => {
            let cfg = a.config.resolve()?;
            let (kg, _, completed) = load_prepared(a)?;
            let completed = completed.ok_or_else(|| Error::config("--features (a completed table) is required"))?;
            let (model, history) = train_kgc(&kg, &completed, &cfg.kgc, cfg.scorer)?;
            create_parent(&a.out)?;
            model.checkpoint().save(&a.out)?;
            write_json(&a.out.with_extension("history.json"), &history)?;
            println!("{} model written to {}", cfg.scorer, a.out.display());
            Ok(())
        }
        Command::Evaluate(a) => {
            let cfg = a.config.resolve()?;
            let (kg, masked, completed) = load_prepared(a)?;
            let completed = completed.ok_or_else(|| Error::config("--features (a completed table) is required"))?;
            let model = kgc_model(&kg, &completed, &cfg, required(&a.checkpoint, "checkpoint")?)?;
            let known = KnownTriples::from_graph(&kg, cfg.filter);
            let report = evaluate(&FrozenModel::new(&model), kg.test(), &known, masked.mask(), cfg.exec)?;
            create_parent(&a.out)?;
            report.save_json(&a.out)?;
            report.save_summary_csv(&a.out.with_extension("csv"))?;
            for (split, metric, value) in report.summary_rows() {
                println!("{split:>18} {metric:>8} {value:.4}");
            }
            Ok(())
        }
        Command::Compare(a) => {
            let ra = EvalReport::load_json(&a.a)?;
            let rb = EvalReport::load_json(&a.b)?;
            let cmp = bucket_compare(&ra, &rb, &Buckets::new(a.bounds.clone())?)?;
            create_parent(&a.out)?;
            cmp.save_csv(&a.out)?;
            println!("bucket matrices written to {}", a.out.display());
            Ok(())
        }
        Command::Run(c) => {
            let cfg = c.resolve()?;
            let out = run_experiment(&cfg)?;
            println!(
                "{}: MRR {:.4}, Hits@1 {:.4}, Hits@10 {:.4}",
                out.dir.display(),
                out.report.overall.mrr,
                out.report.overall.hits_at(1),
                out.report.overall.hits_at(10)
            );
            Ok(())
        }
        Command::Sweep(a) => {
            let cfg = a.config.resolve()?;
            let mut grid = BTreeMap::new();
            for g in &a.grid {
                let (k, vs) = split_assignment(g)?;
                grid.insert(k.to_string(), vs.split(',').map(parse_value).collect::<Vec<_>>());
            }
            let table = sweep(&cfg, &grid)?;
            println!("{} cells written to {}", table.rows.len(), cfg.output_dir.join("sweep.csv").display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run_stage(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
