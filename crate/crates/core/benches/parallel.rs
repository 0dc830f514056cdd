use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use mmkg_core::completer::{complete_features, CompleterConfig, CompleterModel};
use mmkg_core::data::{drop_modality, synth_mmkg, SynthConfig};
use mmkg_core::eval::{evaluate, FilterMode, KnownTriples};
use mmkg_core::kgc::{FrozenModel, KgcConfig, MultiModalKgcModel, ScorerKind};
use mmkg_core::Exec;

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn completion(c: &mut Criterion) {
    let (kg, truth) = synth_mmkg(&SynthConfig::new(400, 5, 3000, 32, 0.05, 0)).unwrap();
    let masked = drop_modality(&truth, 0.4, 0).unwrap();
    let cfg = CompleterConfig { d_s: 32, d_z: 32, hidden: 64, k: 128, ..CompleterConfig::default() };
    let model = CompleterModel::init(&kg, 32, &cfg).unwrap();
    let mut group = c.benchmark_group("complete_features");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| complete_features(&model, &kg, &masked, &cfg, exec).unwrap())
        });
    }
    group.finish();
}

fn evaluation(c: &mut Criterion) {
    let (kg, truth) = synth_mmkg(&SynthConfig::new(1000, 5, 10000, 32, 0.05, 1)).unwrap();
    let model = MultiModalKgcModel::for_store(kg.num_relations(), &truth, &KgcConfig { d: 32, ..KgcConfig::default() }, ScorerKind::RsmeGated).unwrap();
    let frozen = FrozenModel::new(&model);
    let known = KnownTriples::from_graph(&kg, FilterMode::Full);
    let mut group = c.benchmark_group("evaluate");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| evaluate(&frozen, kg.test(), &known, truth.mask(), exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, completion, evaluation);
criterion_main!(benches);
