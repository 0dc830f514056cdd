//! Relational graph convolution over the training graph.
//!
//! Layer update for entity `i`:
//!
//! ```text
//! s_i' = ReLU( Σ_r Σ_{j ∈ N_i^r} W_r s_j / |N_i^r|  +  W_0 s_i )
//! ```
//!
//! `r` ranges over every relation and its inverse. Empty neighbor sets
//! contribute nothing. All rows of a layer are computed from the previous
//! layer's output.

use std::sync::Arc;

use ndarray::Array2;
use rand::Rng;

use crate::data::KnowledgeGraph;
use crate::error::{Error, Result};
use crate::nn::layers::{embedding_table, uniform_matrix, Parameterized};
use crate::nn::{SparseMatrix, Tape, Tensor, Var};

#[derive(Debug, Clone, PartialEq)]
pub struct RgcnLayer {
    pub self_weight: Tensor,
    pub relation_weights: Vec<Tensor>,
}

impl RgcnLayer {
    pub fn new<R: Rng + ?Sized>(dim: usize, num_relations: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (dim.max(1) as f64).sqrt();
        Self {
            self_weight: Tensor::new(uniform_matrix(dim, dim, bound, rng)),
            relation_weights: (0..num_relations)
                .map(|_| Tensor::new(uniform_matrix(dim, dim, bound, rng)))
                .collect(),
        }
    }

    /// Every weight set to the identity.
    pub fn identity(dim: usize, num_relations: usize) -> Self {
        let eye = || Tensor::new(Array2::eye(dim));
        Self {
            self_weight: eye(),
            relation_weights: (0..num_relations).map(|_| eye()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RgcnEncoder {
    pub base: Tensor,
    pub layers: Vec<RgcnLayer>,
}

/// Row-normalised adjacency matrices, one per relation slot, precomputed from
/// a graph's training adjacency.
#[derive(Debug, Clone)]
pub struct MessagePassing {
    num_entities: usize,
    relations: Vec<Option<Arc<SparseMatrix>>>,
}

impl MessagePassing {
    pub fn new(graph: &KnowledgeGraph) -> Self {
        let adj = graph.adjacency();
        let n = graph.num_entities();
        let relations = (0..adj.num_relations())
            .map(|r| {
                let rows: Vec<Vec<(usize, f64)>> = (0..n)
                    .map(|i| {
                        let nb = adj.neighbors(r, i);
                        let w = 1.0 / nb.len().max(1) as f64;
                        nb.iter().map(|&j| (j, w)).collect()
                    })
                    .collect();
                let m = SparseMatrix::from_rows(n, &rows);
                (m.nnz() > 0).then(|| Arc::new(m))
            })
            .collect();
        Self {
            num_entities: n,
            relations,
        }
    }

    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }

    pub fn num_entities(&self) -> usize {
        self.num_entities
    }
}

impl RgcnEncoder {
    /// `num_relations` counts relation slots including inverses (`2·|R|`).
    pub fn new<R: Rng + ?Sized>(
        num_entities: usize,
        num_relations: usize,
        dim: usize,
        num_layers: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if num_layers == 0 {
            return Err(Error::config("R-GCN needs at least one layer"));
        }
        let base = embedding_table(num_entities, dim, rng);
        let layers = (0..num_layers)
            .map(|_| RgcnLayer::new(dim, num_relations, rng))
            .collect();
        Ok(Self { base, layers })
    }

    /// For a graph: relation slots are `2·|R|`.
    pub fn for_graph<R: Rng + ?Sized>(graph: &KnowledgeGraph, dim: usize, num_layers: usize, rng: &mut R) -> Result<Self> {
        Self::new(graph.num_entities(), 2 * graph.num_relations(), dim, num_layers, rng)
    }

    /// Assemble from explicit parts. An empty layer list is allowed and makes
    /// [`encode`] return the base embeddings.
    pub fn from_parts(base: Array2<f64>, layers: Vec<RgcnLayer>) -> Result<Self> {
        let d = base.ncols();
        for (l, layer) in layers.iter().enumerate() {
            let square = |t: &Tensor| t.shape() == (d, d);
            if !square(&layer.self_weight) || !layer.relation_weights.iter().all(square) {
                return Err(Error::shape(format!("layer {l} matrices must be {d} × {d}")));
            }
        }
        Ok(Self {
            base: Tensor::new(base),
            layers,
        })
    }

    pub fn dim(&self) -> usize {
        self.base.shape().1
    }

    pub fn num_entities(&self) -> usize {
        self.base.shape().0
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    fn check(&self, mp: &MessagePassing) -> Result<()> {
        if mp.num_entities() != self.num_entities() {
            return Err(Error::shape(format!(
                "graph has {} entities, encoder {}",
                mp.num_entities(),
                self.num_entities()
            )));
        }
        for (l, layer) in self.layers.iter().enumerate() {
            if layer.relation_weights.len() != mp.num_relations() {
                return Err(Error::shape(format!(
                    "layer {l} has {} relation matrices, graph needs {}",
                    layer.relation_weights.len(),
                    mp.num_relations()
                )));
            }
        }
        Ok(())
    }

    /// Record the full forward pass on `tape`; parameters are tracked when
    /// `track` is set.
    pub fn forward(&self, mp: &MessagePassing, tape: &mut Tape, track: bool) -> Result<Var> {
        self.check(mp)?;
        let mut h = tape.bind(&self.base, track);
        for layer in &self.layers {
            let w0 = tape.bind(&layer.self_weight, track);
            let mut acc = tape.matmul_t(h, w0);
            for (adj, w) in mp.relations.iter().zip(&layer.relation_weights) {
                let Some(adj) = adj else { continue };
                let wr = tape.bind(w, track);
                let agg = tape.spmm(adj, h);
                let msg = tape.matmul_t(agg, wr);
                acc = tape.add(acc, msg);
            }
            h = tape.relu(acc);
        }
        Ok(h)
    }

    /// The "plain embedding" ablation: base embeddings without message passing.
    pub fn forward_plain(&self, tape: &mut Tape, track: bool) -> Var {
        tape.bind(&self.base, track)
    }
}

/// Structural features of every entity.
pub fn encode(graph: &KnowledgeGraph, encoder: &RgcnEncoder) -> Result<Array2<f64>> {
    encode_with(&MessagePassing::new(graph), encoder)
}

pub fn encode_with(mp: &MessagePassing, encoder: &RgcnEncoder) -> Result<Array2<f64>> {
    let mut tape = Tape::new();
    let out = encoder.forward(mp, &mut tape, false)?;
    Ok(tape.value(out).clone())
}

/// Base embeddings, unchanged.
pub fn encode_plain(encoder: &RgcnEncoder) -> Array2<f64> {
    encoder.base.value().clone()
}

impl Parameterized for RgcnEncoder {
    fn params(&self) -> Vec<(String, &Tensor)> {
        let mut out = vec![("base".to_string(), &self.base)];
        for (l, layer) in self.layers.iter().enumerate() {
            out.push((format!("layer{l}.self"), &layer.self_weight));
            for (r, w) in layer.relation_weights.iter().enumerate() {
                out.push((format!("layer{l}.rel{r}"), w));
            }
        }
        out
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out = vec![("base".to_string(), &mut self.base)];
        for (l, layer) in self.layers.iter_mut().enumerate() {
            out.push((format!("layer{l}.self"), &mut layer.self_weight));
            for (r, w) in layer.relation_weights.iter_mut().enumerate() {
                out.push((format!("layer{l}.rel{r}"), w));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{build_graph, RawTriple};
    use crate::nn::gradient_check;
    use ndarray::array;

    fn isolated_graph() -> KnowledgeGraph {
        // "c" only has a relation to itself-free partner "d"; "a" is isolated
        // in train because its only triple is in the test split.
        build_graph(
            &[RawTriple::new("c", "r", "d")],
            &[],
            &[RawTriple::new("a", "r", "c")],
        )
    }

    #[test]
    fn isolated_entity_identity_self_weight() {
        let kg = isolated_graph();
        let a = kg.entities().encode("a").unwrap();
        let mut base = Array2::zeros((kg.num_entities(), 2));
        base.row_mut(a).assign(&array![-1.0, 2.0]);
        let enc = RgcnEncoder::from_parts(base, vec![RgcnLayer::identity(2, 2)]).unwrap();
        let s = encode(&kg, &enc).unwrap();
        assert_eq!(s.row(a).to_vec(), vec![0.0, 2.0]);
    }

    #[test]
    fn single_edge_hand_evaluation() {
        // j --r--> i with all weights identity: s_i = ReLU(s_j + s_i).
        let kg = build_graph(&[RawTriple::new("j", "r", "i")], &[], &[]);
        let j = kg.entities().encode("j").unwrap();
        let i = kg.entities().encode("i").unwrap();
        let mut base = Array2::zeros((2, 2));
        base.row_mut(j).assign(&array![1.0, 0.0]);
        base.row_mut(i).assign(&array![0.0, 1.0]);
        let enc = RgcnEncoder::from_parts(base, vec![RgcnLayer::identity(2, 2)]).unwrap();
        let s = encode(&kg, &enc).unwrap();
        assert_eq!(s.row(i).to_vec(), vec![1.0, 1.0]);
        // The inverse edge carries s_i back to j.
        assert_eq!(s.row(j).to_vec(), vec![1.0, 1.0]);
    }

    #[test]
    fn mean_normalisation_over_neighbors() {
        let kg = build_graph(
            &[RawTriple::new("a", "r", "t"), RawTriple::new("b", "r", "t")],
            &[],
            &[],
        );
        let t = kg.entities().encode("t").unwrap();
        let a = kg.entities().encode("a").unwrap();
        let b = kg.entities().encode("b").unwrap();
        let mut base = Array2::zeros((3, 1));
        base[[a, 0]] = 2.0;
        base[[b, 0]] = 4.0;
        let mut layer = RgcnLayer::identity(1, 2);
        layer.self_weight = Tensor::zeros(1, 1);
        let enc = RgcnEncoder::from_parts(base, vec![layer]).unwrap();
        let s = encode(&kg, &enc).unwrap();
        assert_eq!(s[[t, 0]], 3.0);
    }

    #[test]
    fn plain_matches_base_and_zero_layers() {
        let kg = isolated_graph();
        let mut rng = crate::rng::rng_from_seed(2);
        let enc = RgcnEncoder::for_graph(&kg, 4, 2, &mut rng).unwrap();
        assert_eq!(encode_plain(&enc), *enc.base.value());
        let zero = RgcnEncoder::from_parts(enc.base.value().clone(), vec![]).unwrap();
        assert_eq!(encode(&kg, &zero).unwrap(), encode_plain(&zero));
    }

    #[test]
    fn dimension_mismatch_is_error() {
        let kg = isolated_graph();
        let mut rng = crate::rng::rng_from_seed(2);
        let enc = RgcnEncoder::new(kg.num_entities() + 1, 2, 3, 1, &mut rng).unwrap();
        assert!(matches!(encode(&kg, &enc), Err(Error::Shape(_))));
        let enc = RgcnEncoder::new(kg.num_entities(), 5, 3, 1, &mut rng).unwrap();
        assert!(matches!(encode(&kg, &enc), Err(Error::Shape(_))));
        assert!(RgcnEncoder::new(3, 2, 3, 0, &mut rng).is_err());
    }

    #[test]
    fn plain_gradient_is_base_gradient() {
        let mut rng = crate::rng::rng_from_seed(4);
        let enc = RgcnEncoder::new(3, 2, 2, 1, &mut rng).unwrap();
        let mut tape = Tape::new();
        let s = enc.forward_plain(&mut tape, true);
        let sq = tape.mul(s, s);
        let l = tape.sum(sq);
        tape.backward(l);
        let g = tape.grad_for(&enc.base).unwrap();
        assert_eq!(g, &(enc.base.value() * 2.0));
    }

    #[test]
    fn encoder_gradients_pass_finite_differences() {
        let kg = build_graph(
            &[
                RawTriple::new("a", "r", "b"),
                RawTriple::new("b", "s", "c"),
                RawTriple::new("c", "r", "a"),
                RawTriple::new("a", "s", "c"),
            ],
            &[],
            &[],
        );
        let mp = MessagePassing::new(&kg);
        let mut rng = crate::rng::rng_from_seed(11);
        let mut enc = RgcnEncoder::for_graph(&kg, 3, 2, &mut rng).unwrap();
        let weights = crate::nn::layers::normal_matrix(3, 3, 1.0, &mut rng);
        let report = gradient_check(&mut enc, 1e-5, 1e-4, |enc, tape| {
            let s = enc.forward(&mp, tape, true)?;
            let w = tape.constant(weights.clone());
            let p = tape.mul(s, w);
            Ok(tape.sum(p))
        })
        .unwrap();
        assert!(report.passed, "{report:?}");
    }
}
