mod common;

use ndarray::{Array2, Array3};
use proptest::prelude::*;

use common::{oracle_rank, TableScorer};
use mmkg_core::completer::{adv_loss_from_probs, contrastive_loss, pool_candidates};
use mmkg_core::data::{build_graph, drop_modality, masked_count, KnowledgeGraph, ModalityStore, RawTriple, Triple, Vocab};
use mmkg_core::encoder::{encode, RgcnEncoder, RgcnLayer};
use mmkg_core::eval::{
    bucket_compare, filtered_rank, Buckets, Direction, EvalReport, KnownTriples, Metrics, QueryRank,
};
use mmkg_core::kgc::{margin_loss, self_adv_weights};
use mmkg_core::nn::layers::normal_matrix;
use mmkg_core::nn::{Tape, Tensor};
use mmkg_core::rng::rng_from_seed;

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Array2<f64>> {
    prop::collection::vec(-3.0f64..3.0, rows * cols).prop_map(move |v| Array2::from_shape_vec((rows, cols), v).unwrap())
}

fn ranks() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec((2u32..=400).prop_map(|x| x as f64 / 2.0), 1..40)
}

fn small_kg(n: usize, r: usize, triples: &[(usize, usize, usize)]) -> KnowledgeGraph {
    let ents = Vocab::from_names((0..n).map(|i| format!("e{i}"))).unwrap();
    let rels = Vocab::from_names((0..r).map(|i| format!("r{i}"))).unwrap();
    let train = triples.iter().map(|&(h, r, t)| Triple::new(h, r, t)).collect();
    KnowledgeGraph::from_parts(ents, rels, train, vec![], vec![]).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn drop_modality_masks_exact_count(n in 1usize..60, rate in 0.0f64..=1.0, seed in any::<u64>()) {
        let features = normal_matrix(n, 3, 1.0, &mut rng_from_seed(seed));
        let store = drop_modality(&ModalityStore::complete(features), rate, seed).unwrap();
        prop_assert_eq!(store.missing_ids().len(), masked_count(rate, n));
        prop_assert_eq!(masked_count(rate, n), (rate * n as f64 + 1e-9).floor() as usize);
        for e in store.missing_ids() {
            prop_assert!(store.features().row(e).iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn vocabulary_is_a_bijection(names in prop::collection::vec("[a-z]{1,4}", 1..30)) {
        let raw: Vec<RawTriple> = names.windows(2).map(|w| RawTriple::new(w[0].clone(), "rel", w[1].clone())).collect();
        let kg = build_graph(&raw, &[], &[]);
        for name in names.iter().filter(|_| !raw.is_empty()) {
            let id = kg.entities().encode(name).unwrap();
            prop_assert_eq!(kg.entities().decode(id), Some(name.as_str()));
        }
        for id in 0..kg.num_entities() {
            let name = kg.entities().decode(id).unwrap();
            prop_assert_eq!(kg.entities().encode(name), Some(id));
        }
    }

    #[test]
    fn gradients_are_linear(x in matrix(4, 3), w in matrix(3, 2), a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let param = Tensor::new(w);
        let grad_of = |coef_f: f64, coef_g: f64| {
            let mut tape = Tape::new();
            let wv = tape.param(&param);
            let xv = tape.constant(x.clone());
            let xw = tape.matmul(xv, wv);
            let act = tape.relu(xw);
            let f = tape.sum(act);
            let sq = tape.mul(wv, wv);
            let g = tape.mean(sq);
            let f = tape.scale(f, coef_f);
            let g = tape.scale(g, coef_g);
            let loss = tape.add(f, g);
            tape.backward(loss);
            tape.grad_for(&param).cloned().unwrap()
        };
        let combined = grad_of(a, b);
        let separate = grad_of(1.0, 0.0) * a + grad_of(0.0, 1.0) * b;
        for (c, s) in combined.iter().zip(separate.iter()) {
            prop_assert!((c - s).abs() <= 1e-12 * (1.0 + s.abs()));
        }
    }

    #[test]
    fn encoder_is_permutation_equivariant(
        n in 2usize..9,
        edges in prop::collection::vec((0usize..9, 0usize..2, 0usize..9), 1..20),
        perm_seed in any::<u64>(),
    ) {
        let edges: Vec<_> = edges.into_iter().map(|(h, r, t)| (h % n, r, t % n)).collect();
        let mut perm: Vec<usize> = (0..n).collect();
        rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut rng_from_seed(perm_seed));
        let permuted: Vec<_> = edges.iter().map(|&(h, r, t)| (perm[h], r, perm[t])).collect();

        let mut rng = rng_from_seed(perm_seed ^ 7);
        let base = normal_matrix(n, 3, 1.0, &mut rng);
        let layers: Vec<RgcnLayer> = (0..2).map(|_| RgcnLayer::new(3, 4, &mut rng)).collect();
        let mut moved = Array2::zeros((n, 3));
        for i in 0..n {
            moved.row_mut(perm[i]).assign(&base.row(i));
        }
        let out = encode(&small_kg(n, 2, &edges), &RgcnEncoder::from_parts(base, layers.clone()).unwrap()).unwrap();
        let out_p = encode(&small_kg(n, 2, &permuted), &RgcnEncoder::from_parts(moved, layers).unwrap()).unwrap();
        for i in 0..n {
            for k in 0..3 {
                prop_assert!((out[[i, k]] - out_p[[perm[i], k]]).abs() <= 1e-12);
            }
        }
        prop_assert!(out.iter().all(|x| x.is_finite() && *x >= 0.0));
    }

    #[test]
    fn adversarial_loss_is_nonnegative(
        real in prop::collection::vec(0.0f64..=1.0, 1..10),
        fake in prop::collection::vec(0.0f64..=1.0, 1..10),
    ) {
        prop_assert!(adv_loss_from_probs(&real, &fake).unwrap() >= 0.0);
    }

    #[test]
    fn contrastive_loss_bounds_and_scale_invariance(
        (s, g) in (1usize..7).prop_flat_map(|b| (matrix(b, 4), matrix(b, 4))),
        tau in 0.1f64..2.0,
        k in 0.1f64..10.0,
        row in 0usize..7,
    ) {
        prop_assume!(s.rows().into_iter().chain(g.rows()).all(|r| r.dot(&r) > 1e-6));
        let b = s.nrows();
        let loss = contrastive_loss(&s, &g, tau).unwrap();
        prop_assert!(loss >= 0.0);
        prop_assert!(loss <= (b as f64).ln() + 2.0 / tau + 1e-9);
        if b == 1 {
            prop_assert_eq!(loss, 0.0);
        }
        let mut s2 = s.clone();
        let mut g2 = g.clone();
        s2.row_mut(row % b).mapv_inplace(|x| x * k);
        g2.row_mut((row + 1) % b).mapv_inplace(|x| x * k);
        prop_assert!((contrastive_loss(&s2, &g2, tau).unwrap() - loss).abs() <= 1e-9);
    }

    #[test]
    fn pooled_feature_lies_in_candidate_box(c in (1usize..8).prop_flat_map(|k| (matrix(k, 3), prop::collection::vec(any::<bool>(), k)))) {
        let (cands, flags) = c;
        let v = pool_candidates(&cands, &flags).unwrap();
        for j in 0..3 {
            let col = cands.column(j);
            let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(v[j] >= lo - 1e-12 && v[j] <= hi + 1e-12);
        }
    }

    #[test]
    fn self_adversarial_weights_properties(
        scores in prop::collection::vec(-5.0f64..5.0, 1..12),
        beta in 0.0f64..3.0,
        shift in -10.0f64..10.0,
    ) {
        let w = self_adv_weights(&scores, beta);
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let shifted: Vec<f64> = scores.iter().map(|s| s + shift).collect();
        for (a, b) in w.iter().zip(self_adv_weights(&shifted, beta)) {
            prop_assert!((a - b).abs() < 1e-12);
        }
        for i in 0..scores.len() {
            for j in 0..scores.len() {
                if scores[i] > scores[j] {
                    prop_assert!(w[i] >= w[j]);
                }
            }
        }
    }

    #[test]
    fn margin_loss_properties(
        pos in -10.0f64..10.0,
        negs in prop::collection::vec(-10.0f64..10.0, 1..8),
        lambda in 0.0f64..12.0,
    ) {
        let w = self_adv_weights(&negs, 1.0);
        let loss = margin_loss(pos, &negs, &w, lambda);
        prop_assert!(loss >= 0.0);
        let weighted: f64 = negs.iter().zip(&w).map(|(a, b)| a * b).sum();
        prop_assert_eq!(margin_loss(lambda + weighted + 1e-6 + pos.abs(), &negs, &w, lambda), 0.0);
    }

    #[test]
    fn filtering_never_raises_rank(
        table in prop::collection::vec(prop::sample::select(vec![-1.0, 0.0, 0.5, 1.0, 2.0]), 6 * 2 * 6),
        known in prop::collection::vec((0usize..6, 0usize..2, 0usize..6), 1..20),
        which in 0usize..20,
    ) {
        let scorer = TableScorer(Array3::from_shape_vec((6, 2, 6), table.clone()).unwrap());
        let known: Vec<Triple> = known.into_iter().map(|(h, r, t)| Triple::new(h, r, t)).collect();
        let filter = KnownTriples::from_triples(&known);
        let empty = KnownTriples::from_triples(&[]);
        let q = known[which % known.len()];
        for dir in [Direction::Head, Direction::Tail] {
            let filtered = filtered_rank(&scorer, q, dir, &filter);
            prop_assert!(filtered <= filtered_rank(&scorer, q, dir, &empty));
            let score = |h: usize, r: usize, t: usize| table[(h * 2 + r) * 6 + t];
            prop_assert_eq!(filtered, oracle_rank(score, 6, q, dir, &known));
        }
    }

    #[test]
    fn metrics_are_ordered_and_bounded(r in ranks()) {
        let m = Metrics::from_ranks(&r);
        prop_assert!(m.mrr > 0.0 && m.mrr <= 1.0);
        prop_assert!(m.hits_at(1) <= m.hits_at(3) && m.hits_at(3) <= m.hits_at(10));
    }

    #[test]
    fn mrr_strictly_decreases_when_a_rank_grows(r in ranks(), i in 0usize..40, bump in 1u32..50) {
        let mut worse = r.clone();
        let i = i % r.len();
        worse[i] += bump as f64 / 2.0;
        prop_assert!(Metrics::from_ranks(&worse).mrr < Metrics::from_ranks(&r).mrr);
    }

    #[test]
    fn bucket_matrices_account_for_every_query(
        pairs in prop::collection::vec(((2u32..1000), (2u32..1000), any::<bool>()), 1..50),
    ) {
        let make = |pick: fn(&(u32, u32, bool)) -> u32| {
            let qs = pairs
                .iter()
                .enumerate()
                .map(|(i, p)| QueryRank {
                    head: i,
                    relation: 0,
                    tail: i + 1,
                    direction: Direction::Tail,
                    rank: pick(p) as f64 / 2.0,
                    modality_missing: p.2,
                })
                .collect();
            EvalReport::from_queries(qs)
        };
        let cmp = bucket_compare(&make(|p| p.0), &make(|p| p.1), &Buckets::default()).unwrap();
        let total = |m: &Vec<Vec<usize>>| m.iter().flatten().sum::<usize>();
        prop_assert_eq!(total(&cmp.overall), pairs.len());
        prop_assert_eq!(total(&cmp.modality_missing), pairs.iter().filter(|p| p.2).count());
        prop_assert_eq!(total(&cmp.modality_missing) + total(&cmp.modality_complete), pairs.len());
    }
}
