//! Integer-coded triple store.
//!
//! Entities and relations read from TSV files are assigned dense ids in
//! first-seen order. The relation id space is laid out as
//!
//! ```text
//! 0 .. R          dataset relations
//! R .. 2R         inverses (r⁻¹ = r + R)
//! 2R              NO_OP
//! 2R + 1          NO_ANSWER
//! 2R + 2          START (first history input)
//! 2R + 3          PAD (filler for fixed-width action rows)
//! ```
//!
//! and the NO_ANSWER sink entity takes id `|E|`, one past the last dataset
//! entity. Reserved ids never collide with dataset ids because they are
//! positional.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default cap on the number of outgoing actions per entity.
pub const DEFAULT_MAX_OUT: usize = 200;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EntityId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RelationId(pub u32);

impl EntityId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl RelationId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Positions of derived and reserved relation ids for a given number of
/// dataset relations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationLayout {
    pub original: u32,
}

impl RelationLayout {
    pub fn new(original: usize) -> Self {
        Self {
            original: original as u32,
        }
    }

    pub fn is_original(&self, r: RelationId) -> bool {
        r.0 < self.original
    }

    pub fn is_inverse(&self, r: RelationId) -> bool {
        r.0 >= self.original && r.0 < 2 * self.original
    }

    /// Inverse of a dataset or inverse relation; inverse-of-inverse is the
    /// identity.
    pub fn inverse(&self, r: RelationId) -> RelationId {
        debug_assert!(r.0 < 2 * self.original);
        if self.is_original(r) {
            RelationId(r.0 + self.original)
        } else {
            RelationId(r.0 - self.original)
        }
    }

    pub fn no_op(&self) -> RelationId {
        RelationId(2 * self.original)
    }

    pub fn no_answer(&self) -> RelationId {
        RelationId(2 * self.original + 1)
    }

    pub fn start(&self) -> RelationId {
        RelationId(2 * self.original + 2)
    }

    pub fn pad(&self) -> RelationId {
        RelationId(2 * self.original + 3)
    }

    pub fn is_synthetic(&self, r: RelationId) -> bool {
        r == self.no_op() || r == self.no_answer()
    }

    /// Size of the augmented relation id space, including reserved ids.
    pub fn total(&self) -> usize {
        2 * self.original as usize + 4
    }
}

/// Bidirectional name ↔ id mapping for entities and dataset relations.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Vocab {
    entities: Vec<String>,
    entity_ids: HashMap<String, EntityId>,
    relations: Vec<String>,
    relation_ids: HashMap<String, RelationId>,
    frozen: bool,
}

impl Vocab {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_names<E, R>(entities: E, relations: R) -> Result<Self>
    where
        E: IntoIterator,
        E::Item: Into<String>,
        R: IntoIterator,
        R::Item: Into<String>,
    {
        let mut v = Vocab::new();
        for e in entities {
            let e = e.into();
            if v.entity_ids.contains_key(&e) {
                return Err(Error::Config(format!("duplicate entity name `{e}`")));
            }
            v.intern_entity(&e)?;
        }
        for r in relations {
            let r = r.into();
            if v.relation_ids.contains_key(&r) {
                return Err(Error::Config(format!("duplicate relation name `{r}`")));
            }
            v.intern_relation(&r)?;
        }
        Ok(v)
    }

    /// Disallow further growth; subsequent unknown names are lookup errors.
    pub fn freeze(mut self) -> Self {
        self.frozen = true;
        self
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }

    pub fn layout(&self) -> RelationLayout {
        RelationLayout::new(self.relations.len())
    }

    pub fn sink(&self) -> EntityId {
        EntityId(self.entities.len() as u32)
    }

    pub fn entity(&self, name: &str) -> Result<EntityId> {
        self.entity_ids
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnknownName {
                kind: "entity",
                name: name.to_string(),
            })
    }

    pub fn relation(&self, name: &str) -> Result<RelationId> {
        self.relation_ids
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnknownName {
                kind: "relation",
                name: name.to_string(),
            })
    }

    pub fn intern_entity(&mut self, name: &str) -> Result<EntityId> {
        if let Some(&id) = self.entity_ids.get(name) {
            return Ok(id);
        }
        if self.frozen {
            return Err(Error::UnknownName {
                kind: "entity",
                name: name.to_string(),
            });
        }
        let id = EntityId(self.entities.len() as u32);
        self.entities.push(name.to_string());
        self.entity_ids.insert(name.to_string(), id);
        Ok(id)
    }

    pub fn intern_relation(&mut self, name: &str) -> Result<RelationId> {
        if let Some(&id) = self.relation_ids.get(name) {
            return Ok(id);
        }
        if self.frozen {
            return Err(Error::UnknownName {
                kind: "relation",
                name: name.to_string(),
            });
        }
        let id = RelationId(self.relations.len() as u32);
        self.relations.push(name.to_string());
        self.relation_ids.insert(name.to_string(), id);
        Ok(id)
    }

    /// Display name of any entity id, including the sink.
    pub fn entity_name(&self, id: EntityId) -> &str {
        if id == self.sink() {
            "NO_ANSWER"
        } else {
            self.entities.get(id.index()).map_or("<unknown>", String::as_str)
        }
    }

    /// Display name of any relation id in the augmented space.
    pub fn relation_name(&self, id: RelationId) -> String {
        let layout = self.layout();
        if layout.is_original(id) {
            self.relations[id.index()].clone()
        } else if layout.is_inverse(id) {
            format!("{}^-1", self.relations[layout.inverse(id).index()])
        } else if id == layout.no_op() {
            "NO_OP".into()
        } else if id == layout.no_answer() {
            "NO_ANSWER".into()
        } else if id == layout.start() {
            "START".into()
        } else if id == layout.pad() {
            "PAD".into()
        } else {
            "<unknown>".into()
        }
    }

    /// Parse a relation display name back to an id; accepts the `^-1`
    /// inverse suffix and the reserved names `NO_OP` / `NO_ANSWER`.
    pub fn parse_relation(&self, name: &str) -> Result<RelationId> {
        if let Ok(r) = self.relation(name) {
            return Ok(r);
        }
        let layout = self.layout();
        match name {
            "NO_OP" => return Ok(layout.no_op()),
            "NO_ANSWER" => return Ok(layout.no_answer()),
            _ => {}
        }
        if let Some(base) = name.strip_suffix("^-1") {
            return Ok(layout.inverse(self.relation(base)?));
        }
        self.relation(name)
    }

    pub fn parse_entity(&self, name: &str) -> Result<EntityId> {
        match self.entity(name) {
            Ok(e) => Ok(e),
            Err(_) if name == "NO_ANSWER" => Ok(self.sink()),
            Err(e) => Err(e),
        }
    }

    /// Writes `entities.tsv` and `relations.tsv` (`name<TAB>id`, sorted by
    /// id) into `dir`. Only dataset-derived ids are written; reserved ids
    /// are positional.
    pub fn save(&self, dir: &Path) -> Result<()> {
        write_vocab_file(&dir.join("entities.tsv"), &self.entities)?;
        write_vocab_file(&dir.join("relations.tsv"), &self.relations)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let entities = read_vocab_file(&dir.join("entities.tsv"))?;
        let relations = read_vocab_file(&dir.join("relations.tsv"))?;
        Vocab::from_names(entities, relations)
    }
}

fn write_vocab_file(path: &Path, names: &[String]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for (id, name) in names.iter().enumerate() {
        writeln!(w, "{name}\t{id}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_vocab_file(path: &Path) -> Result<Vec<String>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut names = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split('\t');
        let (Some(name), Some(id), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(Error::Parse {
                path: path.into(),
                line: i + 1,
                message: "expected `name<TAB>id`".into(),
            });
        };
        let id: usize = id.parse().map_err(|_| Error::Parse {
            path: path.into(),
            line: i + 1,
            message: format!("bad id `{id}`"),
        })?;
        if id != names.len() {
            return Err(Error::Parse {
                path: path.into(),
                line: i + 1,
                message: format!("ids must be dense and sorted, got {id}"),
            });
        }
        names.push(name.to_string());
    }
    Ok(names)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Triple {
    pub head: EntityId,
    pub relation: RelationId,
    pub tail: EntityId,
}

impl Triple {
    pub fn new(head: EntityId, relation: RelationId, tail: EntityId) -> Self {
        Self {
            head,
            relation,
            tail,
        }
    }
}

/// An outgoing edge, i.e. one action available at its head entity.
/// Ordering is (relation, tail), which is the action order everywhere.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub relation: RelationId,
    pub tail: EntityId,
}

impl Edge {
    pub fn new(relation: RelationId, tail: EntityId) -> Self {
        Self { relation, tail }
    }
}

impl fmt::Display for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.relation.0, self.tail.0)
    }
}

/// Set of edges hidden from the action space.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EdgeMask {
    edges: HashSet<Triple>,
}

impl EdgeMask {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, t: Triple) {
        self.edges.insert(t);
    }

    pub fn contains(&self, head: EntityId, edge: &Edge) -> bool {
        self.edges.contains(&Triple::new(head, edge.relation, edge.tail))
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Triple> {
        self.edges.iter()
    }
}

impl FromIterator<Triple> for EdgeMask {
    fn from_iter<I: IntoIterator<Item = Triple>>(iter: I) -> Self {
        Self {
            edges: iter.into_iter().collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentFlags {
    pub inverse: bool,
    pub noop: bool,
    pub noanswer: bool,
}

impl AugmentFlags {
    pub const ALL: AugmentFlags = AugmentFlags {
        inverse: true,
        noop: true,
        noanswer: true,
    };
    pub const NONE: AugmentFlags = AugmentFlags {
        inverse: false,
        noop: false,
        noanswer: false,
    };

    pub fn is_empty(&self) -> bool {
        !(self.inverse || self.noop || self.noanswer)
    }
}

/// Immutable adjacency-list knowledge graph.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KnowledgeGraph {
    num_entities: usize,
    layout: RelationLayout,
    triples: Vec<Triple>,
    // One slot per dataset entity plus the sink; each list sorted by
    // (relation, tail) with no duplicates.
    adjacency: Vec<Vec<Edge>>,
    augmented: AugmentFlags,
}

impl KnowledgeGraph {
    /// Builds a graph from dataset triples, dropping duplicates while
    /// keeping first-seen order in the triple list.
    pub fn from_triples(
        num_entities: usize,
        num_relations: usize,
        triples: impl IntoIterator<Item = Triple>,
    ) -> Result<Self> {
        let mut seen = HashSet::new();
        let mut kept = Vec::new();
        let mut dropped = 0usize;
        for t in triples {
            for (what, idx, len) in [
                ("entity", t.head.index(), num_entities),
                ("entity", t.tail.index(), num_entities),
                ("relation", t.relation.index(), num_relations),
            ] {
                if idx >= len {
                    return Err(Error::OutOfRange {
                        what,
                        index: idx,
                        len,
                    });
                }
            }
            if seen.insert(t) {
                kept.push(t);
            } else {
                dropped += 1;
            }
        }
        if dropped > 0 {
            log::debug!("dropped {dropped} duplicate triples");
        }
        let mut adjacency = vec![Vec::new(); num_entities + 1];
        for t in &kept {
            adjacency[t.head.index()].push(Edge::new(t.relation, t.tail));
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        Ok(Self {
            num_entities,
            layout: RelationLayout::new(num_relations),
            triples: kept,
            adjacency,
            augmented: AugmentFlags::NONE,
        })
    }

    pub fn num_entities(&self) -> usize {
        self.num_entities
    }

    pub fn num_relations(&self) -> usize {
        self.layout.original as usize
    }

    pub fn layout(&self) -> RelationLayout {
        self.layout
    }

    pub fn sink(&self) -> EntityId {
        EntityId(self.num_entities as u32)
    }

    /// Rows needed in an entity embedding table (dataset entities + sink).
    pub fn entity_slots(&self) -> usize {
        self.num_entities + 1
    }

    /// Dataset triples after deduplication, in first-seen order.
    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn augmentation(&self) -> AugmentFlags {
        self.augmented
    }

    pub fn num_edges(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum()
    }

    /// All outgoing edges of `e`, unmasked and untruncated.
    pub fn out_edges(&self, e: EntityId) -> &[Edge] {
        &self.adjacency[e.index()]
    }

    pub fn has_edge(&self, head: EntityId, relation: RelationId, tail: EntityId) -> bool {
        self.adjacency
            .get(head.index())
            .is_some_and(|l| l.binary_search(&Edge::new(relation, tail)).is_ok())
    }

    /// Every edge currently in the adjacency lists as a triple.
    pub fn edges(&self) -> impl Iterator<Item = Triple> + '_ {
        self.adjacency.iter().enumerate().flat_map(|(h, list)| {
            list.iter()
                .map(move |e| Triple::new(EntityId(h as u32), e.relation, e.tail))
        })
    }

    /// Adds inverse, NO_OP and NO_ANSWER edges as requested. Requesting a
    /// flag that was already applied is an error.
    pub fn augment(mut self, flags: AugmentFlags) -> Result<Self> {
        for (requested, applied, name) in [
            (flags.inverse, self.augmented.inverse, "inverse relations"),
            (flags.noop, self.augmented.noop, "NO_OP edges"),
            (flags.noanswer, self.augmented.noanswer, "NO_ANSWER edges"),
        ] {
            if requested && applied {
                return Err(Error::AlreadyAugmented(name));
            }
        }
        let layout = self.layout;
        let sink = self.sink();
        if flags.inverse {
            for t in &self.triples {
                self.adjacency[t.tail.index()].push(Edge::new(layout.inverse(t.relation), t.head));
            }
        }
        if flags.noop {
            for e in 0..self.num_entities {
                self.adjacency[e].push(Edge::new(layout.no_op(), EntityId(e as u32)));
            }
        }
        if flags.noanswer {
            for e in 0..self.num_entities {
                self.adjacency[e].push(Edge::new(layout.no_answer(), sink));
            }
            self.adjacency[sink.index()].push(Edge::new(layout.no_op(), sink));
        }
        for list in &mut self.adjacency {
            list.sort_unstable();
            list.dedup();
        }
        self.augmented.inverse |= flags.inverse;
        self.augmented.noop |= flags.noop;
        self.augmented.noanswer |= flags.noanswer;
        Ok(self)
    }

    /// The action space at `e`: outgoing edges minus masked ones, in
    /// (relation, tail) order. When more than `max_out` remain, the first
    /// non-synthetic edges are kept and NO_OP / NO_ANSWER always survive.
    pub fn actions(&self, e: EntityId, mask: Option<&EdgeMask>, max_out: usize) -> Vec<Edge> {
        let edges = &self.adjacency[e.index()];
        let mut out: Vec<Edge> = match mask {
            Some(m) if !m.is_empty() => edges.iter().filter(|x| !m.contains(e, x)).copied().collect(),
            _ => edges.clone(),
        };
        if out.len() > max_out {
            let layout = self.layout;
            let synthetic = out.iter().filter(|x| layout.is_synthetic(x.relation)).count();
            let mut budget = max_out.saturating_sub(synthetic);
            out.retain(|x| {
                if layout.is_synthetic(x.relation) {
                    true
                } else if budget > 0 {
                    budget -= 1;
                    true
                } else {
                    false
                }
            });
        }
        out
    }
}

/// Reads a `head<TAB>relation<TAB>tail` file. With `vocab = None` a fresh
/// vocabulary is built; a frozen vocabulary rejects unknown names.
pub fn load_triples(path: &Path, vocab: Option<Vocab>) -> Result<(KnowledgeGraph, Vocab)> {
    let mut vocab = vocab.unwrap_or_default();
    let raw = read_tsv_triples(path)?;
    let mut triples = Vec::with_capacity(raw.len());
    for (_, h, r, t) in &raw {
        let head = vocab.intern_entity(h)?;
        let relation = vocab.intern_relation(r)?;
        let tail = vocab.intern_entity(t)?;
        triples.push(Triple::new(head, relation, tail));
    }
    let g = KnowledgeGraph::from_triples(vocab.num_entities(), vocab.num_relations(), triples)?;
    Ok((g, vocab))
}

/// Writes the dataset triples (not augmentation edges) as TSV.
pub fn save_triples(g: &KnowledgeGraph, vocab: &Vocab, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for t in g.triples() {
        writeln!(
            w,
            "{}\t{}\t{}",
            vocab.entity_name(t.head),
            vocab.relation_name(t.relation),
            vocab.entity_name(t.tail)
        )
        .map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Splits a three-column TSV file into `(line_number, a, b, c)` records.
/// Blank lines are skipped.
pub(crate) fn read_tsv_triples(path: &Path) -> Result<Vec<(usize, String, String, String)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                path: path.into(),
                line: i + 1,
                message: format!("expected 3 tab-separated fields, found {}", fields.len()),
            });
        }
        out.push((i + 1, fields[0].into(), fields[1].into(), fields[2].into()));
    }
    Ok(out)
}
