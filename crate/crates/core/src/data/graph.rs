//! Entity/relation vocabularies, triple splits and the training adjacency.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A triple of names as it appears in a dataset file.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RawTriple {
    pub head: String,
    pub relation: String,
    pub tail: String,
}

impl RawTriple {
    pub fn new(head: impl Into<String>, relation: impl Into<String>, tail: impl Into<String>) -> Self {
        Self {
            head: head.into(),
            relation: relation.into(),
            tail: tail.into(),
        }
    }
}

/// An id-encoded triple.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triple {
    pub head: usize,
    pub relation: usize,
    pub tail: usize,
}

impl Triple {
    pub fn new(head: usize, relation: usize, tail: usize) -> Self {
        Self {
            head,
            relation,
            tail,
        }
    }
}

/// Name ↔ id bijection; ids are assigned densely in insertion order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocab {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_names<I, S>(names: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut v = Self::new();
        for n in names {
            let n = n.into();
            if v.index.contains_key(&n) {
                return Err(Error::data(format!("duplicate vocabulary entry `{n}`")));
            }
            v.intern(&n);
        }
        Ok(v)
    }

    /// Return the id of `name`, assigning the next id if unseen.
    pub fn intern(&mut self, name: &str) -> usize {
        if let Some(&id) = self.index.get(name) {
            return id;
        }
        let id = self.names.len();
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), id);
        id
    }

    pub fn encode(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn decode(&self, id: usize) -> Option<&str> {
        self.names.get(id).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Valid,
    Test,
}

/// Per-relation neighbor sets in CSR form.
///
/// Relation ids `0..R` are the dataset relations and `R..2R` their
/// inverses. For a train triple `(h, r, t)`, `h ∈ N_t^r` and `t ∈ N_h^{r+R}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Adjacency {
    num_entities: usize,
    num_base_relations: usize,
    offsets: Vec<Vec<usize>>,
    neighbors: Vec<Vec<usize>>,
}

impl Adjacency {
    fn build(num_entities: usize, num_relations: usize, train: &[Triple]) -> Self {
        let total = 2 * num_relations;
        let mut sets: Vec<HashMap<usize, Vec<usize>>> = vec![HashMap::new(); total];
        for t in train {
            sets[t.relation].entry(t.tail).or_default().push(t.head);
            sets[t.relation + num_relations]
                .entry(t.head)
                .or_default()
                .push(t.tail);
        }
        let mut offsets = Vec::with_capacity(total);
        let mut neighbors = Vec::with_capacity(total);
        for rel in sets {
            let mut off = Vec::with_capacity(num_entities + 1);
            let mut nb = Vec::new();
            off.push(0);
            for i in 0..num_entities {
                if let Some(list) = rel.get(&i) {
                    let mut list = list.clone();
                    list.sort_unstable();
                    list.dedup();
                    nb.extend(list);
                }
                off.push(nb.len());
            }
            offsets.push(off);
            neighbors.push(nb);
        }
        Self {
            num_entities,
            num_base_relations: num_relations,
            offsets,
            neighbors,
        }
    }

    /// Number of relation slots including inverses.
    pub fn num_relations(&self) -> usize {
        self.offsets.len()
    }

    pub fn num_base_relations(&self) -> usize {
        self.num_base_relations
    }

    pub fn num_entities(&self) -> usize {
        self.num_entities
    }

    /// Id of the inverse of base relation `r`.
    pub fn inverse(&self, r: usize) -> usize {
        r + self.num_base_relations
    }

    /// Sorted, duplicate-free `N_i^r`.
    pub fn neighbors(&self, relation: usize, entity: usize) -> &[usize] {
        let off = &self.offsets[relation];
        &self.neighbors[relation][off[entity]..off[entity + 1]]
    }

    /// Total number of stored (relation, entity, neighbor) entries.
    pub fn num_edges(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KnowledgeGraph {
    entities: Vocab,
    relations: Vocab,
    train: Vec<Triple>,
    valid: Vec<Triple>,
    test: Vec<Triple>,
    adjacency: Adjacency,
}

/// A triple present in more than one split.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitOverlap {
    pub triple: Triple,
    pub first: Split,
    pub second: Split,
}

impl KnowledgeGraph {
    /// Encode raw splits. Vocabulary ids follow first appearance over
    /// train, then valid, then test; each triple's head precedes its tail.
    pub fn build(train: &[RawTriple], valid: &[RawTriple], test: &[RawTriple]) -> Self {
        let mut entities = Vocab::new();
        let mut relations = Vocab::new();
        let mut encode = |raw: &[RawTriple]| -> Vec<Triple> {
            raw.iter()
                .map(|t| {
                    let h = entities.intern(&t.head);
                    let r = relations.intern(&t.relation);
                    let tl = entities.intern(&t.tail);
                    Triple::new(h, r, tl)
                })
                .collect()
        };
        let train = encode(train);
        let valid = encode(valid);
        let test = encode(test);
        let kg = Self::assemble(entities, relations, train, valid, test);
        for o in kg.split_overlaps() {
            log::warn!(
                "triple ({}, {}, {}) appears in both {:?} and {:?}",
                o.triple.head,
                o.triple.relation,
                o.triple.tail,
                o.first,
                o.second
            );
        }
        kg
    }

    /// Assemble from pre-encoded parts, validating every id.
    pub fn from_parts(
        entities: Vocab,
        relations: Vocab,
        train: Vec<Triple>,
        valid: Vec<Triple>,
        test: Vec<Triple>,
    ) -> Result<Self> {
        for t in train.iter().chain(&valid).chain(&test) {
            if t.head >= entities.len() || t.tail >= entities.len() || t.relation >= relations.len() {
                return Err(Error::data(format!(
                    "triple {t:?} out of range for |E|={}, |R|={}",
                    entities.len(),
                    relations.len()
                )));
            }
        }
        Ok(Self::assemble(entities, relations, train, valid, test))
    }

    fn assemble(
        entities: Vocab,
        relations: Vocab,
        train: Vec<Triple>,
        valid: Vec<Triple>,
        test: Vec<Triple>,
    ) -> Self {
        let adjacency = Adjacency::build(entities.len(), relations.len(), &train);
        Self {
            entities,
            relations,
            train,
            valid,
            test,
            adjacency,
        }
    }

    pub fn entities(&self) -> &Vocab {
        &self.entities
    }

    pub fn relations(&self) -> &Vocab {
        &self.relations
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }

    pub fn split(&self, split: Split) -> &[Triple] {
        match split {
            Split::Train => &self.train,
            Split::Valid => &self.valid,
            Split::Test => &self.test,
        }
    }

    pub fn train(&self) -> &[Triple] {
        &self.train
    }

    pub fn valid(&self) -> &[Triple] {
        &self.valid
    }

    pub fn test(&self) -> &[Triple] {
        &self.test
    }

    pub fn adjacency(&self) -> &Adjacency {
        &self.adjacency
    }

    pub fn all_triples(&self) -> impl Iterator<Item = &Triple> {
        self.train.iter().chain(&self.valid).chain(&self.test)
    }

    /// Triples shared between splits, one entry per (triple, split pair).
    pub fn split_overlaps(&self) -> Vec<SplitOverlap> {
        let sets: Vec<(Split, HashSet<Triple>)> = [Split::Train, Split::Valid, Split::Test]
            .into_iter()
            .map(|s| (s, self.split(s).iter().copied().collect()))
            .collect();
        let mut out = Vec::new();
        for a in 0..sets.len() {
            for b in a + 1..sets.len() {
                let mut shared: Vec<Triple> = sets[a].1.intersection(&sets[b].1).copied().collect();
                shared.sort_unstable();
                out.extend(shared.into_iter().map(|triple| SplitOverlap {
                    triple,
                    first: sets[a].0,
                    second: sets[b].0,
                }));
            }
        }
        out
    }

    /// Decode a triple back into names.
    pub fn decode(&self, t: &Triple) -> RawTriple {
        RawTriple::new(
            self.entities.decode(t.head).unwrap_or("?"),
            self.relations.decode(t.relation).unwrap_or("?"),
            self.entities.decode(t.tail).unwrap_or("?"),
        )
    }
}

/// Free-function form of [`KnowledgeGraph::build`].
pub fn build_graph(train: &[RawTriple], valid: &[RawTriple], test: &[RawTriple]) -> KnowledgeGraph {
    KnowledgeGraph::build(train, valid, test)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(h: &str, r: &str, t: &str) -> RawTriple {
        RawTriple::new(h, r, t)
    }

    #[test]
    fn single_triple_adjacency() {
        let kg = build_graph(&[raw("a", "r", "b")], &[], &[]);
        assert_eq!(kg.num_entities(), 2);
        assert_eq!(kg.num_relations(), 1);
        let a = kg.entities().encode("a").unwrap();
        let b = kg.entities().encode("b").unwrap();
        let adj = kg.adjacency();
        assert_eq!(adj.num_relations(), 2);
        assert_eq!(adj.neighbors(0, b), &[a]);
        assert_eq!(adj.neighbors(adj.inverse(0), a), &[b]);
        assert!(adj.neighbors(0, a).is_empty());
        assert!(adj.neighbors(1, b).is_empty());
    }

    #[test]
    fn vocab_first_appearance_order() {
        let kg = build_graph(
            &[raw("x", "p", "y")],
            &[raw("z", "q", "x")],
            &[raw("w", "p", "z")],
        );
        assert_eq!(kg.entities().names(), &["x", "y", "z", "w"]);
        assert_eq!(kg.relations().names(), &["p", "q"]);
    }

    #[test]
    fn adjacency_uses_train_only() {
        let kg = build_graph(&[raw("a", "r", "b")], &[raw("b", "r", "c")], &[]);
        let c = kg.entities().encode("c").unwrap();
        assert!(kg.adjacency().neighbors(0, c).is_empty());
        assert_eq!(kg.adjacency().num_edges(), 2);
    }

    #[test]
    fn overlap_reported_and_kept() {
        let t = raw("a", "r", "b");
        let kg = build_graph(&[t.clone(), raw("b", "r", "c")], &[], &[t.clone()]);
        assert_eq!(kg.train().len(), 2);
        assert_eq!(kg.test().len(), 1);
        // Oracle: plain set intersection of the encoded splits.
        let train: HashSet<_> = kg.train().iter().copied().collect();
        let test: HashSet<_> = kg.test().iter().copied().collect();
        let expected: Vec<_> = train.intersection(&test).copied().collect();
        let overlaps = kg.split_overlaps();
        assert_eq!(overlaps.len(), expected.len());
        assert_eq!(overlaps[0].triple, expected[0]);
        assert_eq!((overlaps[0].first, overlaps[0].second), (Split::Train, Split::Test));
    }

    #[test]
    fn from_parts_rejects_out_of_range() {
        let e = Vocab::from_names(["a"]).unwrap();
        let r = Vocab::from_names(["r"]).unwrap();
        assert!(KnowledgeGraph::from_parts(e, r, vec![Triple::new(0, 0, 1)], vec![], vec![]).is_err());
    }

    #[test]
    fn vocab_rejects_duplicates() {
        assert!(Vocab::from_names(["a", "a"]).is_err());
    }
}
