//! Knowledge graph storage: vocabularies, a deduplicated triple set and
//! adjacency indexes in both edge directions.
//!
//! Triples are read from a 3-column TSV (`head`, `relation`, `tail`). Node
//! metadata is an optional TSV with `id`, `name`, `kind` and an optional
//! fourth column of `|`-separated synonyms. Blank lines and lines starting
//! with `#` are ignored in both files.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use indexmap::IndexSet;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum KgError {
    #[error("cannot read {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("node file line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("{kind} index {index} out of range (size {size})")]
    Index {
        kind: &'static str,
        index: usize,
        size: usize,
    },
    #[error("unknown {kind} {id:?}")]
    Unknown { kind: &'static str, id: String },
    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T, E = KgError> = std::result::Result<T, E>;

/// A (head, relation, tail) fact over dense indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
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

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    Forward,
    Inverse,
}

impl Direction {
    pub fn tag(self) -> &'static str {
        match self {
            Direction::Forward => "fwd",
            Direction::Inverse => "inv",
        }
    }
}

/// Longest supported metapath.
pub const MAX_HOPS: usize = 3;

/// Ordered sequence of directed relation steps.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Metapath {
    steps: Vec<(usize, Direction)>,
}

impl Metapath {
    pub fn new(steps: Vec<(usize, Direction)>) -> Result<Self> {
        if steps.len() > MAX_HOPS {
            return Err(KgError::Config(format!(
                "metapath has {} steps, at most {MAX_HOPS} supported",
                steps.len()
            )));
        }
        Ok(Self { steps })
    }

    pub fn steps(&self) -> &[(usize, Direction)] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeMeta {
    pub name: String,
    pub kind: String,
    pub synonyms: Vec<String>,
}

/// Counts reported after ingestion.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadSummary {
    pub entities: usize,
    pub relations: usize,
    pub triples: usize,
    pub duplicates_dropped: usize,
    pub nodes_with_metadata: usize,
    pub nodes_only_in_metadata: usize,
}

impl fmt::Display for LoadSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "entities: {}", self.entities)?;
        writeln!(f, "relations: {}", self.relations)?;
        writeln!(f, "triples: {}", self.triples)?;
        writeln!(f, "duplicates_dropped: {}", self.duplicates_dropped)?;
        writeln!(f, "nodes_with_metadata: {}", self.nodes_with_metadata)?;
        write!(f, "nodes_only_in_metadata: {}", self.nodes_only_in_metadata)
    }
}

/// Incremental graph construction. Vocabulary indices are assigned in
/// first-appearance order.
#[derive(Debug, Default)]
pub struct KgBuilder {
    entities: IndexSet<String>,
    relations: IndexSet<String>,
    triples: Vec<Triple>,
    seen: HashSet<Triple>,
    meta: Vec<Option<NodeMeta>>,
    duplicates: usize,
}

impl KgBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    fn entity(&mut self, id: &str) -> usize {
        if let Some(idx) = self.entities.get_index_of(id) {
            return idx;
        }
        self.meta.push(None);
        self.entities.insert_full(id.to_owned()).0
    }

    fn relation(&mut self, id: &str) -> usize {
        self.relations.insert_full(id.to_owned()).0
    }

    /// Adds a triple, returning `false` when it was already present.
    pub fn add_triple(&mut self, head: &str, relation: &str, tail: &str) -> bool {
        let h = self.entity(head);
        let r = self.relation(relation);
        let t = self.entity(tail);
        let triple = Triple::new(h, r, t);
        if self.seen.insert(triple) {
            self.triples.push(triple);
            true
        } else {
            self.duplicates += 1;
            false
        }
    }

    /// Attaches metadata, registering the entity if it has not been seen.
    pub fn add_node(&mut self, id: &str, meta: NodeMeta) {
        let idx = self.entity(id);
        self.meta[idx] = Some(meta);
    }

    pub fn read_triples<R: BufRead>(&mut self, reader: R) -> Result<()> {
        for (lineno, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| KgError::Parse {
                line: lineno + 1,
                message: e.to_string(),
            })?;
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(KgError::Parse {
                    line: lineno + 1,
                    message: format!("expected 3 tab-separated fields, found {}", fields.len()),
                });
            }
            if fields.iter().any(|f| f.is_empty()) {
                return Err(KgError::Parse {
                    line: lineno + 1,
                    message: "empty field".into(),
                });
            }
            self.add_triple(fields[0], fields[1], fields[2]);
        }
        Ok(())
    }

    pub fn read_nodes<R: BufRead>(&mut self, reader: R) -> Result<()> {
        for (lineno, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| KgError::Format {
                line: lineno + 1,
                message: e.to_string(),
            })?;
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if !(3..=4).contains(&fields.len()) {
                return Err(KgError::Format {
                    line: lineno + 1,
                    message: format!(
                        "expected id, name, kind and optional synonyms, found {} fields",
                        fields.len()
                    ),
                });
            }
            if fields[0].is_empty() {
                return Err(KgError::Format {
                    line: lineno + 1,
                    message: "empty node id".into(),
                });
            }
            let synonyms = fields
                .get(3)
                .map(|s| {
                    s.split('|')
                        .map(str::trim)
                        .filter(|s| !s.is_empty())
                        .map(str::to_owned)
                        .collect()
                })
                .unwrap_or_default();
            self.add_node(
                fields[0],
                NodeMeta {
                    name: fields[1].trim().to_owned(),
                    kind: fields[2].trim().to_owned(),
                    synonyms,
                },
            );
        }
        Ok(())
    }

    pub fn build(self) -> KnowledgeGraph {
        let n = self.entities.len();
        let mut out_adjacency = vec![Vec::new(); n];
        let mut in_adjacency = vec![Vec::new(); n];
        for t in &self.triples {
            out_adjacency[t.head].push((t.relation, t.tail));
            in_adjacency[t.tail].push((t.relation, t.head));
        }
        let summary = LoadSummary {
            entities: n,
            relations: self.relations.len(),
            triples: self.triples.len(),
            duplicates_dropped: self.duplicates,
            nodes_with_metadata: self.meta.iter().filter(|m| m.is_some()).count(),
            nodes_only_in_metadata: (0..n)
                .filter(|&e| self.meta[e].is_some() && out_adjacency[e].is_empty() && in_adjacency[e].is_empty())
                .count(),
        };
        KnowledgeGraph {
            entities: self.entities,
            relations: self.relations,
            triples: self.triples,
            triple_set: self.seen,
            out_adjacency,
            in_adjacency,
            meta: self.meta,
            summary,
        }
    }
}

/// Immutable knowledge graph.
#[derive(Debug, Clone)]
pub struct KnowledgeGraph {
    entities: IndexSet<String>,
    relations: IndexSet<String>,
    triples: Vec<Triple>,
    triple_set: HashSet<Triple>,
    out_adjacency: Vec<Vec<(usize, usize)>>,
    in_adjacency: Vec<Vec<(usize, usize)>>,
    meta: Vec<Option<NodeMeta>>,
    summary: LoadSummary,
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|source| KgError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Loads a graph from a triples TSV and an optional node metadata TSV.
pub fn load_kg(triples_path: &Path, nodes_path: Option<&Path>) -> Result<KnowledgeGraph> {
    let mut builder = KgBuilder::new();
    builder.read_triples(open(triples_path)?)?;
    if let Some(nodes) = nodes_path {
        builder.read_nodes(open(nodes)?)?;
    }
    Ok(builder.build())
}

/// Writes every triple of the graph as a `head\trelation\ttail` line.
pub fn write_triples<W: Write>(w: W, kg: &KnowledgeGraph) -> std::io::Result<()> {
    write_triple_list(w, kg, kg.triples())
}

/// Writes `triples`, given as indices into `kg`, as TSV lines.
pub fn write_triple_list<W: Write>(mut w: W, kg: &KnowledgeGraph, triples: &[Triple]) -> std::io::Result<()> {
    for t in triples {
        writeln!(
            w,
            "{}\t{}\t{}",
            kg.entities[t.head], kg.relations[t.relation], kg.entities[t.tail]
        )?;
    }
    Ok(())
}

/// Writes one metadata line per entity that has metadata.
pub fn write_nodes<W: Write>(mut w: W, kg: &KnowledgeGraph) -> std::io::Result<()> {
    for (id, meta) in kg.entities.iter().zip(&kg.meta) {
        let Some(m) = meta else { continue };
        write!(w, "{id}\t{}\t{}", m.name, m.kind)?;
        if !m.synonyms.is_empty() {
            write!(w, "\t{}", m.synonyms.join("|"))?;
        }
        writeln!(w)?;
    }
    Ok(())
}

impl KnowledgeGraph {
    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }

    pub fn num_triples(&self) -> usize {
        self.triples.len()
    }

    /// Triples in insertion order.
    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn triple_set(&self) -> &HashSet<Triple> {
        &self.triple_set
    }

    pub fn contains(&self, triple: &Triple) -> bool {
        self.triple_set.contains(triple)
    }

    pub fn summary(&self) -> &LoadSummary {
        &self.summary
    }

    pub fn entity_ids(&self) -> impl Iterator<Item = &str> {
        self.entities.iter().map(String::as_str)
    }

    pub fn relation_ids(&self) -> impl Iterator<Item = &str> {
        self.relations.iter().map(String::as_str)
    }

    pub fn entity_index(&self, id: &str) -> Option<usize> {
        self.entities.get_index_of(id)
    }

    pub fn relation_index(&self, id: &str) -> Option<usize> {
        self.relations.get_index_of(id)
    }

    pub fn entity_id(&self, idx: usize) -> Option<&str> {
        self.entities.get_index(idx).map(String::as_str)
    }

    pub fn relation_id(&self, idx: usize) -> Option<&str> {
        self.relations.get_index(idx).map(String::as_str)
    }

    pub fn meta(&self, idx: usize) -> Option<&NodeMeta> {
        self.meta.get(idx).and_then(Option::as_ref)
    }

    /// Display name, falling back to the entity id when no metadata exists.
    pub fn display_name(&self, idx: usize) -> &str {
        match self.meta(idx) {
            Some(m) if !m.name.is_empty() => &m.name,
            _ => self.entity_id(idx).unwrap_or(""),
        }
    }

    pub fn kind(&self, idx: usize) -> &str {
        self.meta(idx).map(|m| m.kind.as_str()).unwrap_or("")
    }

    pub fn out_edges(&self, entity: usize) -> &[(usize, usize)] {
        &self.out_adjacency[entity]
    }

    pub fn in_edges(&self, entity: usize) -> &[(usize, usize)] {
        &self.in_adjacency[entity]
    }

    fn check_entity(&self, idx: usize) -> Result<()> {
        if idx >= self.num_entities() {
            return Err(KgError::Index {
                kind: "entity",
                index: idx,
                size: self.num_entities(),
            });
        }
        Ok(())
    }

    fn check_relation(&self, idx: usize) -> Result<()> {
        if idx >= self.num_relations() {
            return Err(KgError::Index {
                kind: "relation",
                index: idx,
                size: self.num_relations(),
            });
        }
        Ok(())
    }

    pub fn neighbors(
        &self,
        entity: usize,
        relation: usize,
        direction: Direction,
    ) -> Result<BTreeSet<usize>> {
        self.check_entity(entity)?;
        self.check_relation(relation)?;
        Ok(self.neighbors_unchecked(entity, relation, direction).collect())
    }

    fn neighbors_unchecked(
        &self,
        entity: usize,
        relation: usize,
        direction: Direction,
    ) -> impl Iterator<Item = usize> + '_ {
        let adj = match direction {
            Direction::Forward => &self.out_adjacency[entity],
            Direction::Inverse => &self.in_adjacency[entity],
        };
        adj.iter()
            .filter(move |(r, _)| *r == relation)
            .map(|&(_, e)| e)
    }

    /// All entities reachable from `head` by following every step of `path`.
    pub fn traverse_metapath(&self, head: usize, path: &Metapath) -> Result<BTreeSet<usize>> {
        self.check_entity(head)?;
        for &(r, _) in path.steps() {
            self.check_relation(r)?;
        }
        let mut frontier = BTreeSet::from([head]);
        for &(relation, direction) in path.steps() {
            let mut next = BTreeSet::new();
            for &e in &frontier {
                next.extend(self.neighbors_unchecked(e, relation, direction));
            }
            if next.is_empty() {
                return Ok(next);
            }
            frontier = next;
        }
        Ok(frontier)
    }

    /// Reads a triple TSV whose ids must all belong to this graph, e.g. one
    /// partition of a split.
    pub fn read_known_triples<R: BufRead>(&self, reader: R) -> Result<Vec<Triple>> {
        let mut b = KgBuilder::new();
        b.read_triples(reader)?;
        let mut out = Vec::with_capacity(b.triples.len());
        for t in &b.triples {
            let lookup = |set: &IndexSet<String>, own: &IndexSet<String>, i: usize, kind| {
                let id = &set[i];
                own.get_index_of(id.as_str()).ok_or_else(|| KgError::Unknown {
                    kind,
                    id: id.clone(),
                })
            };
            out.push(Triple::new(
                lookup(&b.entities, &self.entities, t.head, "entity")?,
                lookup(&b.relations, &self.relations, t.relation, "relation")?,
                lookup(&b.entities, &self.entities, t.tail, "entity")?,
            ));
        }
        Ok(out)
    }

    /// Content fingerprint of the entity vocabulary.
    pub fn entity_hash(&self) -> u64 {
        vocab_hash(self.entity_ids())
    }

    /// Content fingerprint of the relation vocabulary.
    pub fn relation_hash(&self) -> u64 {
        vocab_hash(self.relation_ids())
    }
}

/// First eight bytes (little-endian) of SHA-256 over the newline-terminated ids.
pub fn vocab_hash<'a>(ids: impl IntoIterator<Item = &'a str>) -> u64 {
    use sha2::{Digest, Sha256};
    let mut hasher = Sha256::new();
    for id in ids {
        hasher.update(id.as_bytes());
        hasher.update(b"\n");
    }
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

/// Train/validation/test partition of a triple set.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TripleSplit {
    pub train: Vec<Triple>,
    pub valid: Vec<Triple>,
    pub test: Vec<Triple>,
}

/// Seeded split. A triple only leaves the training set if every entity and
/// relation it mentions keeps at least one other training triple.
pub fn split_triples(
    kg: &KnowledgeGraph,
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<TripleSplit> {
    let (tr, va, te) = ratios;
    if !(tr > 0.0 && va > 0.0 && te > 0.0) || ((tr + va + te) - 1.0).abs() > 1e-9 {
        return Err(KgError::Config(format!(
            "split ratios must be positive and sum to 1, got ({tr}, {va}, {te})"
        )));
    }
    let n = kg.num_triples();
    let mut order: Vec<Triple> = kg.triples().to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);

    let n_valid = (va * n as f64).round() as usize;
    let n_test = (te * n as f64).round() as usize;

    let mut entity_count = vec![0usize; kg.num_entities()];
    let mut relation_count = vec![0usize; kg.num_relations()];
    for t in &order {
        entity_count[t.head] += 1;
        entity_count[t.tail] += 1;
        relation_count[t.relation] += 1;
    }

    let mut split = TripleSplit::default();
    for t in order {
        let removable = {
            let self_loop = t.head == t.tail;
            let needed = if self_loop { 2 } else { 1 };
            entity_count[t.head] > needed
                && entity_count[t.tail] > needed
                && relation_count[t.relation] > 1
        };
        let target = if removable && split.test.len() < n_test {
            Some(&mut split.test)
        } else if removable && split.valid.len() < n_valid {
            Some(&mut split.valid)
        } else {
            None
        };
        match target {
            Some(bucket) => {
                entity_count[t.head] -= 1;
                entity_count[t.tail] -= 1;
                relation_count[t.relation] -= 1;
                bucket.push(t);
            }
            None => split.train.push(t),
        }
    }
    Ok(split)
}
