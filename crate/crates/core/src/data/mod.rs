//! Knowledge-graph ingestion, the modality mask, and toy dataset synthesis.

pub mod graph;
pub mod io;
pub mod modality;
pub mod synth;

pub use graph::{build_graph, Adjacency, KnowledgeGraph, RawTriple, Split, SplitOverlap, Triple, Vocab};
pub use io::{load_graph, load_modality, load_triples, save_graph, save_modality, save_triples};
pub use modality::{drop_modality, masked_count, ModalityStore};
pub use synth::{synth_mmkg, SynthConfig};
