mod common;

use common::*;
use ndarray::Array3;
use rand::Rng;

use mmkg_core::data::{synth_mmkg, SynthConfig, Triple};
use mmkg_core::eval::{evaluate, filtered_rank, Direction, FilterMode, KnownTriples, HITS_AT};
use mmkg_core::kgc::{FrozenModel, KgcConfig, MultiModalKgcModel, ScorerKind};
use mmkg_core::rng::rng_from_seed;
use mmkg_core::Exec;

#[test]
fn model_scorers_match_enumeration() {
    for seed in 0..6u64 {
        let (kg, store) = synth_mmkg(&SynthConfig::new(12 + seed as usize * 6, 1 + seed as usize % 3, 80, 3, 0.05, seed)).unwrap();
        let scorer = ScorerKind::ALL[seed as usize % 3];
        let cfg = KgcConfig { d: 4, seed, ..KgcConfig::default() };
        let model = MultiModalKgcModel::for_store(kg.num_relations(), &store, &cfg, scorer).unwrap();
        let frozen = FrozenModel::new(&model);
        let all: Vec<Triple> = kg.all_triples().copied().collect();
        let known = KnownTriples::from_graph(&kg, FilterMode::Full);
        for &t in kg.test() {
            for d in [Direction::Tail, Direction::Head] {
                let got = filtered_rank(&frozen, t, d, &known);
                let want = oracle_rank(|h, r, t| frozen.score(h, r, t), kg.num_entities(), t, d, &all);
                assert_eq!(got, want, "{scorer} {t:?} {d:?}");
            }
        }
    }
}

#[test]
fn tie_heavy_tables_match_enumeration() {
    let mut rng = rng_from_seed(42);
    for case in 0..10 {
        let n = rng.random_range(3..=20);
        let r = rng.random_range(1..=3);
        let table = Array3::from_shape_fn((n, r, n), |_| rng.random_range(0..3) as f64);
        let triples: Vec<Triple> = (0..30)
            .map(|_| Triple::new(rng.random_range(0..n), rng.random_range(0..r), rng.random_range(0..n)))
            .collect();
        let (test, known_list) = triples.split_at(8);
        let mut everything = known_list.to_vec();
        everything.extend_from_slice(test);
        let known = KnownTriples::from_triples(&everything);
        let scorer = TableScorer(table.clone());
        let report = evaluate(&scorer, test, &known, &vec![true; n], Exec::Sequential).unwrap();
        let ranks: Vec<f64> = test
            .iter()
            .flat_map(|&t| [Direction::Tail, Direction::Head].map(|d| oracle_rank(|h, r, t| table[[h, r, t]], n, t, d, &everything)))
            .collect();
        let got: Vec<f64> = report.per_query.iter().map(|q| q.rank).collect();
        assert_eq!(got, ranks, "case {case}");
        assert_eq!(report.overall.mrr, oracle_mrr(&ranks));
        for k in HITS_AT {
            assert_eq!(report.overall.hits_at(k), oracle_hits(&ranks, k));
        }
    }
}

#[test]
fn filtering_never_worsens_rank() {
    let (kg, store) = synth_mmkg(&SynthConfig::new(30, 2, 150, 3, 0.05, 9)).unwrap();
    let model = MultiModalKgcModel::for_store(kg.num_relations(), &store, &KgcConfig { d: 4, ..KgcConfig::default() }, ScorerKind::IkrlLike).unwrap();
    let frozen = FrozenModel::new(&model);
    let full = KnownTriples::from_graph(&kg, FilterMode::Full);
    let train = KnownTriples::from_graph(&kg, FilterMode::Train);
    let none = KnownTriples::default();
    for &t in kg.test() {
        for d in [Direction::Tail, Direction::Head] {
            let f = filtered_rank(&frozen, t, d, &full);
            let tr = filtered_rank(&frozen, t, d, &train);
            let u = filtered_rank(&frozen, t, d, &none);
            assert!(f <= tr && tr <= u);
        }
    }
}

#[test]
fn parallel_evaluation_matches_sequential() {
    let (kg, store) = synth_mmkg(&SynthConfig::new(40, 3, 200, 3, 0.05, 4)).unwrap();
    let model = MultiModalKgcModel::for_store(kg.num_relations(), &store, &KgcConfig { d: 4, ..KgcConfig::default() }, ScorerKind::RsmeGated).unwrap();
    let frozen = FrozenModel::new(&model);
    let known = KnownTriples::from_graph(&kg, FilterMode::Full);
    let a = evaluate(&frozen, kg.test(), &known, store.mask(), Exec::Sequential).unwrap();
    let b = evaluate(&frozen, kg.test(), &known, store.mask(), Exec::Parallel).unwrap();
    assert_eq!(a, b);
}
