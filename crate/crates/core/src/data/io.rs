//! Text formats for triples, visual features and modality masks.
//!
//! * triples: `head\trelation\ttail` per line
//! * features: header `#dim=<d>`, then `name\tf1 f2 … fd` per entity
//! * mask: one modality-missing entity name per line
//!
//! A graph directory holds `train.txt`, `valid.txt`, `test.txt` plus
//! `entities.txt` / `relations.txt` listing the vocabularies in id order.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::Array2;

use super::graph::{KnowledgeGraph, RawTriple, Triple, Vocab};
use super::modality::ModalityStore;
use crate::error::{Error, Result};

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn parse_error(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

pub fn parse_triples(path: &Path, text: &str) -> Result<Vec<RawTriple>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(parse_error(
                path,
                i + 1,
                format!("expected 3 tab-separated fields, found {}", fields.len()),
            ));
        }
        out.push(RawTriple::new(fields[0], fields[1], fields[2]));
    }
    Ok(out)
}

/// Parse a triple file in order, keeping duplicates.
pub fn load_triples(path: &Path) -> Result<Vec<RawTriple>> {
    parse_triples(path, &read_text(path)?)
}

pub fn save_triples(path: &Path, triples: &[RawTriple]) -> Result<()> {
    let mut s = String::new();
    for t in triples {
        let _ = writeln!(s, "{}\t{}\t{}", t.head, t.relation, t.tail);
    }
    write_text(path, &s)
}

fn save_encoded(path: &Path, kg: &KnowledgeGraph, triples: &[Triple]) -> Result<()> {
    let raw: Vec<RawTriple> = triples.iter().map(|t| kg.decode(t)).collect();
    save_triples(path, &raw)
}

fn save_vocab(path: &Path, vocab: &Vocab) -> Result<()> {
    let mut s = String::new();
    for n in vocab.names() {
        s.push_str(n);
        s.push('\n');
    }
    write_text(path, &s)
}

fn load_vocab(path: &Path) -> Result<Vocab> {
    let text = read_text(path)?;
    Vocab::from_names(text.lines().filter(|l| !l.is_empty()))
}

/// Write the three splits and both vocabularies under `dir`.
pub fn save_graph(dir: &Path, kg: &KnowledgeGraph) -> Result<()> {
    save_encoded(&dir.join("train.txt"), kg, kg.train())?;
    save_encoded(&dir.join("valid.txt"), kg, kg.valid())?;
    save_encoded(&dir.join("test.txt"), kg, kg.test())?;
    save_vocab(&dir.join("entities.txt"), kg.entities())?;
    save_vocab(&dir.join("relations.txt"), kg.relations())
}

/// Load a graph directory. When vocabulary files are present, ids follow
/// them; otherwise ids follow first appearance in the splits.
pub fn load_graph(dir: &Path) -> Result<KnowledgeGraph> {
    let train = load_triples(&dir.join("train.txt"))?;
    let valid = load_optional_triples(&dir.join("valid.txt"))?;
    let test = load_optional_triples(&dir.join("test.txt"))?;
    let ent_path = dir.join("entities.txt");
    let rel_path = dir.join("relations.txt");
    if !(ent_path.exists() && rel_path.exists()) {
        return Ok(KnowledgeGraph::build(&train, &valid, &test));
    }
    let entities = load_vocab(&ent_path)?;
    let relations = load_vocab(&rel_path)?;
    let encode = |raw: &[RawTriple]| -> Result<Vec<Triple>> {
        raw.iter()
            .map(|t| {
                let h = entities.encode(&t.head);
                let r = relations.encode(&t.relation);
                let tl = entities.encode(&t.tail);
                match (h, r, tl) {
                    (Some(h), Some(r), Some(tl)) => Ok(Triple::new(h, r, tl)),
                    _ => Err(Error::data(format!(
                        "triple ({}, {}, {}) uses a name missing from the vocabulary",
                        t.head, t.relation, t.tail
                    ))),
                }
            })
            .collect()
    };
    let (tr, va, te) = (encode(&train)?, encode(&valid)?, encode(&test)?);
    KnowledgeGraph::from_parts(entities, relations, tr, va, te)
}

fn load_optional_triples(path: &Path) -> Result<Vec<RawTriple>> {
    if path.exists() {
        load_triples(path)
    } else {
        Ok(Vec::new())
    }
}

/// Write every entity's feature row (zeros for masked entities).
pub fn save_features(path: &Path, entities: &Vocab, features: &Array2<f64>) -> Result<()> {
    if features.nrows() != entities.len() {
        return Err(Error::shape(format!(
            "{} feature rows for {} entities",
            features.nrows(),
            entities.len()
        )));
    }
    let mut s = String::new();
    let _ = writeln!(s, "#dim={}", features.ncols());
    for (name, row) in entities.names().iter().zip(features.rows()) {
        s.push_str(name);
        s.push('\t');
        for (k, x) in row.iter().enumerate() {
            if k > 0 {
                s.push(' ');
            }
            let _ = write!(s, "{x:?}");
        }
        s.push('\n');
    }
    write_text(path, &s)
}

/// Read a feature file into a `|E| × d` matrix ordered by `entities`.
/// Returns the matrix and which entities had a row; absent rows are zero.
pub fn load_features(path: &Path, entities: &Vocab) -> Result<(Array2<f64>, Vec<bool>)> {
    let text = read_text(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_error(path, 1, "missing #dim header"))?;
    let dim: usize = header
        .strip_prefix("#dim=")
        .and_then(|d| d.trim().parse().ok())
        .ok_or_else(|| parse_error(path, 1, format!("bad header `{header}`")))?;
    let mut features = Array2::zeros((entities.len(), dim));
    let mut seen = vec![false; entities.len()];
    for (i, line) in lines {
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.trim().is_empty() {
            continue;
        }
        let (name, values) = line
            .split_once('\t')
            .ok_or_else(|| parse_error(path, i + 1, "expected `name\\tvalues`"))?;
        let id = entities
            .encode(name)
            .ok_or_else(|| parse_error(path, i + 1, format!("unknown entity `{name}`")))?;
        let parsed: Vec<f64> = values
            .split_whitespace()
            .map(|v| v.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| parse_error(path, i + 1, e.to_string()))?;
        if parsed.len() != dim {
            return Err(parse_error(
                path,
                i + 1,
                format!("expected {dim} values, found {}", parsed.len()),
            ));
        }
        if seen[id] {
            return Err(parse_error(path, i + 1, format!("duplicate entity `{name}`")));
        }
        seen[id] = true;
        for (k, v) in parsed.into_iter().enumerate() {
            features[[id, k]] = v;
        }
    }
    Ok((features, seen))
}

/// Write the names of modality-missing entities, one per line.
pub fn save_mask(path: &Path, entities: &Vocab, mask: &[bool]) -> Result<()> {
    let mut s = String::new();
    for (name, &present) in entities.names().iter().zip(mask) {
        if !present {
            s.push_str(name);
            s.push('\n');
        }
    }
    write_text(path, &s)
}

/// Read a mask file; returns a presence vector (false for listed names).
pub fn load_mask(path: &Path, entities: &Vocab) -> Result<Vec<bool>> {
    let text = read_text(path)?;
    let mut mask = vec![true; entities.len()];
    for (i, line) in text.lines().enumerate() {
        let name = line.strip_suffix('\r').unwrap_or(line);
        if name.is_empty() {
            continue;
        }
        let id = entities
            .encode(name)
            .ok_or_else(|| parse_error(path, i + 1, format!("unknown entity `{name}`")))?;
        mask[id] = false;
    }
    Ok(mask)
}

/// Load features plus an optional mask. Entities without a feature row are
/// also treated as missing.
pub fn load_modality(features: &Path, mask: Option<&Path>, entities: &Vocab) -> Result<ModalityStore> {
    let (matrix, seen) = load_features(features, entities)?;
    let mut presence = seen;
    if let Some(mask_path) = mask {
        let listed = load_mask(mask_path, entities)?;
        for (p, l) in presence.iter_mut().zip(listed) {
            *p &= l;
        }
    }
    ModalityStore::new(matrix, presence)
}

pub fn save_modality(features: &Path, mask: &Path, entities: &Vocab, store: &ModalityStore) -> Result<()> {
    save_features(features, entities, store.features())?;
    save_mask(mask, entities, store.mask())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::graph::build_graph;

    #[test]
    fn parse_two_lines() {
        let t = parse_triples(Path::new("x"), "a\tr\tb\nb\tr\tc\n").unwrap();
        assert_eq!(t, vec![RawTriple::new("a", "r", "b"), RawTriple::new("b", "r", "c")]);
    }

    #[test]
    fn empty_file() {
        assert!(parse_triples(Path::new("x"), "").unwrap().is_empty());
    }

    #[test]
    fn arity_violation_reports_line() {
        match parse_triples(Path::new("x"), "a\tr") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("expected parse error, got {other:?}"),
        }
        match parse_triples(Path::new("x"), "a\tr\tb\n\nc\td\te\tf\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn no_deduplication() {
        let t = parse_triples(Path::new("x"), "a\tr\tb\na\tr\tb\n").unwrap();
        assert_eq!(t.len(), 2);
    }

    #[test]
    fn feature_and_mask_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let kg = build_graph(&[RawTriple::new("a", "r", "b"), RawTriple::new("b", "r", "c")], &[], &[]);
        let feats = ndarray::array![[0.1, -2.5e-7], [1.0 / 3.0, 4.0], [f64::MIN_POSITIVE, -0.0]];
        let store = ModalityStore::new(feats, vec![true, false, true]).unwrap();
        let fp = dir.path().join("f.tsv");
        let mp = dir.path().join("m.txt");
        save_modality(&fp, &mp, kg.entities(), &store).unwrap();
        let back = load_modality(&fp, Some(&mp), kg.entities()).unwrap();
        assert_eq!(back.mask(), store.mask());
        for (a, b) in back.features().iter().zip(store.features()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn bad_header_and_dims() {
        let dir = tempfile::tempdir().unwrap();
        let kg = build_graph(&[RawTriple::new("a", "r", "b")], &[], &[]);
        let p = dir.path().join("f.tsv");
        fs::write(&p, "dim=2\na\t1 2\n").unwrap();
        assert!(load_features(&p, kg.entities()).is_err());
        fs::write(&p, "#dim=2\na\t1 2 3\n").unwrap();
        assert!(matches!(load_features(&p, kg.entities()), Err(Error::Parse { line: 2, .. })));
        fs::write(&p, "#dim=2\nzzz\t1 2\n").unwrap();
        assert!(load_features(&p, kg.entities()).is_err());
    }

    #[test]
    fn graph_dir_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let kg = build_graph(
            &[RawTriple::new("a", "r", "b"), RawTriple::new("b", "s", "c")],
            &[RawTriple::new("c", "r", "a")],
            &[RawTriple::new("a", "s", "c")],
        );
        save_graph(dir.path(), &kg).unwrap();
        assert_eq!(load_graph(dir.path()).unwrap(), kg);
    }
}
