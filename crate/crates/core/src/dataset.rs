//! Query splits, train-time masking of query facts, and a seeded generator
//! of synthetic rule-based benchmarks with planted unreachable queries.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};
use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg_store::{
    read_tsv_triples, AugmentFlags, EdgeMask, EntityId, KnowledgeGraph, RelationId, RelationLayout, Triple, Vocab,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Valid, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "valid" | "dev" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!("unknown split `{other}`"))),
        }
    }
}

/// A parsed question `(e_q, r_q, ?)` with its set of correct answers.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Query {
    pub e_q: EntityId,
    pub r_q: RelationId,
    pub gold: BTreeSet<EntityId>,
    pub split: Split,
}

impl Query {
    pub fn new(e_q: EntityId, r_q: RelationId, gold: impl IntoIterator<Item = EntityId>, split: Split) -> Self {
        Self {
            e_q,
            r_q,
            gold: gold.into_iter().collect(),
            split,
        }
    }

    /// Stable identifier used to derive per-query random streams.
    pub fn key(&self) -> u64 {
        ((self.e_q.0 as u64) << 32) | self.r_q.0 as u64
    }
}

/// Reads `e_q<TAB>r_q<TAB>e_a` lines, merging answers of repeated
/// `(e_q, r_q)` pairs. Queries keep the order of their first line. Every
/// line with an unknown name is reported in a single error.
pub fn load_queries(path: &Path, vocab: &Vocab, split: Split) -> Result<Vec<Query>> {
    let rows = read_tsv_triples(path)?;
    let mut bad = Vec::new();
    let mut order: Vec<(EntityId, RelationId)> = Vec::new();
    let mut gold: HashMap<(EntityId, RelationId), BTreeSet<EntityId>> = HashMap::new();
    for (line, h, r, t) in rows {
        match (vocab.entity(&h), vocab.relation(&r), vocab.entity(&t)) {
            (Ok(h), Ok(r), Ok(t)) => {
                let set = gold.entry((h, r)).or_insert_with(|| {
                    order.push((h, r));
                    BTreeSet::new()
                });
                set.insert(t);
            }
            _ => bad.push((line, format!("{h}\t{r}\t{t}"))),
        }
    }
    if !bad.is_empty() {
        return Err(Error::UnknownNames {
            path: path.to_path_buf(),
            lines: bad,
        });
    }
    Ok(order
        .into_iter()
        .map(|k| Query {
            e_q: k.0,
            r_q: k.1,
            gold: gold.remove(&k).unwrap_or_default(),
            split,
        })
        .collect())
}

/// Writes one `e_q<TAB>r_q<TAB>e_a` line per gold answer.
pub fn save_queries(path: &Path, vocab: &Vocab, queries: &[Query]) -> Result<()> {
    let mut out = Vec::new();
    for q in queries {
        for &a in &q.gold {
            writeln!(
                out,
                "{}\t{}\t{}",
                vocab.entity_name(q.e_q),
                vocab.relation_name(q.r_q),
                vocab.entity_name(a)
            )
            .expect("writing to a Vec cannot fail");
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Edges hidden while the agent works on `q`: for training queries the
/// query facts and their inverses, for held-out queries nothing (those
/// facts are never part of the graph).
pub fn mask_for(q: &Query, layout: RelationLayout) -> EdgeMask {
    let mut mask = EdgeMask::new();
    if q.split == Split::Train {
        for &a in &q.gold {
            mask.insert(Triple::new(q.e_q, q.r_q, a));
            mask.insert(Triple::new(a, layout.inverse(q.r_q), q.e_q));
        }
    }
    mask
}

/// Hop distance from `start` to every entity using only dataset and
/// inverse edges (the sink and NO_OP loops never shorten a path), stopping
/// after `max_hops`. Unreached entities get `None`.
pub fn hop_distances(g: &KnowledgeGraph, start: EntityId, mask: Option<&EdgeMask>, max_hops: usize) -> Vec<Option<usize>> {
    let layout = g.layout();
    let mut dist = vec![None; g.entity_slots()];
    dist[start.index()] = Some(0);
    let mut frontier = VecDeque::from([start]);
    while let Some(e) = frontier.pop_front() {
        let d = dist[e.index()].expect("queued entities have a distance");
        if d == max_hops {
            continue;
        }
        for edge in g.actions(e, mask, usize::MAX) {
            if layout.is_synthetic(edge.relation) || dist[edge.tail.index()].is_some() {
                continue;
            }
            dist[edge.tail.index()] = Some(d + 1);
            frontier.push_back(edge.tail);
        }
    }
    dist
}

/// Whether some gold answer of `q` lies within `max_hops` of `e_q` in the
/// masked graph.
pub fn is_reachable(g: &KnowledgeGraph, q: &Query, max_hops: usize) -> bool {
    let mask = mask_for(q, g.layout());
    let dist = hop_distances(g, q.e_q, Some(&mask), max_hops);
    q.gold.iter().any(|a| dist[a.index()].is_some_and(|d| d >= 1))
}

/// Knobs of the synthetic benchmark.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub num_entities: usize,
    pub num_relations: usize,
    /// Query relations, each defined by one planted rule `q ⇐ r1 ∘ r2`.
    /// Rule bodies never share a base relation.
    pub num_rules: usize,
    /// Random background edges per entity over the base relations.
    pub edge_density: f64,
    pub num_queries: usize,
    pub valid_fraction: f64,
    pub test_fraction: f64,
    pub unreachable_fraction: f64,
    /// Wrong `r2` children planted next to every answer, per rule (the
    /// list is cycled over the rules). More distractors make a rule harder
    /// to answer with confidence.
    pub distractors: Vec<usize>,
    /// Path length used when verifying (un)reachability.
    pub path_length: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            num_entities: 1000,
            num_relations: 20,
            num_rules: 4,
            edge_density: 1.0,
            num_queries: 1000,
            valid_fraction: 0.15,
            test_fraction: 0.2,
            unreachable_fraction: 0.156,
            distractors: vec![0, 0, 0, 15],
            path_length: 3,
            seed: 7,
        }
    }
}

/// A planted composition rule `head ⇐ first ∘ second`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rule {
    pub head: RelationId,
    pub first: RelationId,
    pub second: RelationId,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticDataset {
    /// Background, rule and training-fact edges, unaugmented.
    pub graph: KnowledgeGraph,
    pub vocab: Vocab,
    pub rules: Vec<Rule>,
    pub queries: Vec<Query>,
    /// Parallel to `queries`: whether the query was planted unreachable.
    pub unreachable: Vec<bool>,
}

impl SyntheticDataset {
    pub fn split(&self, split: Split) -> Vec<Query> {
        self.queries.iter().filter(|q| q.split == split).cloned().collect()
    }
}

const MAX_ATTEMPTS: usize = 50;

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Infeasible(m));
        if self.num_rules == 0 || self.num_relations < 3 * self.num_rules {
            return fail(format!(
                "{} relations cannot hold {} query relations and their rule bodies",
                self.num_relations, self.num_rules
            ));
        }
        if 2 * self.num_rules > self.num_relations - self.num_rules {
            return fail("too few base relations for disjoint rule bodies".into());
        }
        if self.num_entities < 10 {
            return fail("need at least 10 entities".into());
        }
        if !(0.0..=1.0).contains(&self.unreachable_fraction) {
            return fail(format!("unreachable fraction {} outside [0, 1]", self.unreachable_fraction));
        }
        if self.distractors.is_empty() {
            return fail("distractor list must not be empty (use [0] for none)".into());
        }
        if self.distractors.iter().any(|&d| d + 3 > self.num_entities) {
            return fail("more distractors than entities".into());
        }
        let held_out = self.valid_fraction + self.test_fraction;
        if self.valid_fraction < 0.0 || self.test_fraction < 0.0 || held_out >= 1.0 {
            return fail("valid and test fractions must be non-negative and sum below 1".into());
        }
        if self.edge_density < 0.0 || !self.edge_density.is_finite() {
            return fail("edge density must be a non-negative number".into());
        }
        if self.num_queries > self.num_rules * self.num_entities / 2 {
            return fail(format!(
                "{} queries do not fit on {} entities",
                self.num_queries, self.num_entities
            ));
        }
        if self.path_length < 2 {
            return fail("path length must be at least 2 to plant two-hop rules".into());
        }
        Ok(())
    }

    /// Number of queries that are planted unreachable.
    pub fn unreachable_count(&self) -> usize {
        ((self.unreachable_fraction * self.num_queries as f64) - 1e-9).ceil().max(0.0) as usize
    }

    fn split_sizes(&self) -> [usize; 3] {
        let n = self.num_queries as f64;
        let valid = (self.valid_fraction * n).round() as usize;
        let test = (self.test_fraction * n).round() as usize;
        [self.num_queries - valid - test, valid, test]
    }
}

/// Generates a benchmark: random background edges, one composition rule
/// per query relation, answerable queries whose answer sits at the end of
/// a planted rule path (optionally among wrong siblings), and unreachable
/// queries whose answer is verified to be more than `path_length` hops
/// away. Held-out query facts are not in the graph; training facts are.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticDataset> {
    spec.validate()?;
    let mut last = String::new();
    for attempt in 0..MAX_ATTEMPTS {
        let seed = spec.seed ^ (attempt as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        match try_generate(spec, seed) {
            Ok(ds) => return Ok(ds),
            Err(Error::Infeasible(m)) => {
                log::debug!("synthetic attempt {attempt} rejected: {m}");
                last = m;
            }
            Err(e) => return Err(e),
        }
    }
    Err(Error::Infeasible(format!(
        "no consistent benchmark after {MAX_ATTEMPTS} attempts: {last}"
    )))
}

struct Planned {
    e_q: EntityId,
    rule: usize,
    answer: Option<EntityId>,
    split: Split,
}

fn try_generate(spec: &SyntheticSpec, seed: u64) -> Result<SyntheticDataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_ent = spec.num_entities;
    let n_rel = spec.num_relations;
    let nq = spec.num_rules;
    let ent = |i: usize| EntityId(i as u32);

    let entity_names: Vec<String> = (0..n_ent).map(|i| format!("e{i:04}")).collect();
    let relation_names: Vec<String> = (0..n_rel)
        .map(|i| if i < nq { format!("q{i}") } else { format!("r{}", i - nq) })
        .collect();
    let vocab = Vocab::from_names(entity_names, relation_names)?.freeze();

    // Rule bodies: disjoint pairs of base relations.
    let mut base: Vec<u32> = (nq as u32..n_rel as u32).collect();
    base.shuffle(&mut rng);
    let rules: Vec<Rule> = (0..nq)
        .map(|k| Rule {
            head: RelationId(k as u32),
            first: RelationId(base[2 * k]),
            second: RelationId(base[2 * k + 1]),
        })
        .collect();

    let mut triples: BTreeSet<Triple> = BTreeSet::new();
    let n_background = (spec.edge_density * n_ent as f64).round() as usize;
    while triples.len() < n_background {
        let h = rng.gen_range(0..n_ent);
        let t = rng.gen_range(0..n_ent);
        if h == t {
            continue;
        }
        triples.insert(Triple::new(ent(h), RelationId(rng.gen_range(nq..n_rel) as u32), ent(t)));
    }

    // Assign splits and reachability kinds, stratified so every split sees
    // the same unreachable share.
    let sizes = spec.split_sizes();
    let n_unreach = spec.unreachable_count();
    let mut unreach_per_split = [0usize; 3];
    for s in 1..3 {
        unreach_per_split[s] = (n_unreach as f64 * sizes[s] as f64 / spec.num_queries.max(1) as f64).round() as usize;
    }
    unreach_per_split[0] = n_unreach - unreach_per_split[1] - unreach_per_split[2];
    if unreach_per_split[0] > sizes[0] {
        return Err(Error::Infeasible("too many unreachable queries for the training split".into()));
    }

    let mut used_pairs: HashSet<(usize, usize)> = HashSet::new();
    let mut plans: Vec<Planned> = Vec::with_capacity(spec.num_queries);
    let mut kinds: Vec<bool> = Vec::with_capacity(spec.num_queries);
    for (s, split) in Split::ALL.into_iter().enumerate() {
        for i in 0..sizes[s] {
            kinds.push(i < unreach_per_split[s]);
            plans.push(Planned {
                e_q: ent(0),
                rule: 0,
                answer: None,
                split,
            });
        }
    }

    // Pick question entities first so that planting never attaches a rule
    // path to another query's dead end by accident.
    for plan in plans.iter_mut() {
        let mut tries = 0;
        loop {
            tries += 1;
            if tries > 10 * n_ent {
                return Err(Error::Infeasible("could not place distinct question entities".into()));
            }
            let (e, r) = (rng.gen_range(0..n_ent), rng.gen_range(0..nq));
            if used_pairs.insert((e, r)) {
                plan.e_q = ent(e);
                plan.rule = r;
                break;
            }
        }
    }

    // Answerable queries: plant e_q -r1-> m -r2-> a, plus the rule's
    // distractors. Midpoints are fresh within a rule while possible, so a
    // rule path never picks up another query's answers by accident.
    let mut planted: HashSet<Triple> = HashSet::new();
    let mut midpoints: Vec<HashSet<usize>> = vec![HashSet::new(); nq];
    for (plan, &unreachable) in plans.iter_mut().zip(&kinds) {
        if unreachable {
            continue;
        }
        let rule = rules[plan.rule];
        let e_q = plan.e_q.index();
        let used = &mut midpoints[plan.rule];
        let mut m = pick_other(&mut rng, n_ent, &[e_q]);
        for _ in 0..4 * n_ent {
            if !used.contains(&m) {
                break;
            }
            m = pick_other(&mut rng, n_ent, &[e_q]);
        }
        used.insert(m);
        let mut taken = vec![e_q, m];
        let a = pick_other(&mut rng, n_ent, &taken);
        taken.push(a);
        for t in [Triple::new(ent(e_q), rule.first, ent(m)), Triple::new(ent(m), rule.second, ent(a))] {
            triples.insert(t);
            planted.insert(t);
        }
        for _ in 0..spec.distractors[plan.rule % spec.distractors.len()] {
            let d = pick_other(&mut rng, n_ent, &taken);
            taken.push(d);
            let t = Triple::new(ent(m), rule.second, ent(d));
            triples.insert(t);
            planted.insert(t);
        }
        plan.answer = Some(ent(a));
    }

    // Unreachable queries: either a first hop into a dead end (an entity
    // without any continuation of the rule) or no first hop at all. Only
    // background edges are ever cut, so planted rule paths stay intact.
    for (plan, &unreachable) in plans.iter().zip(&kinds) {
        if !unreachable {
            continue;
        }
        let rule = rules[plan.rule];
        let e_q = plan.e_q;
        let stray: Vec<Triple> = triples
            .iter()
            .filter(|t| t.head == e_q && t.relation == rule.first && !planted.contains(t))
            .copied()
            .collect();
        for t in stray {
            triples.remove(&t);
        }
        if rng.gen_bool(0.5) {
            let mut tries = 0;
            let m = loop {
                tries += 1;
                if tries > 10 * n_ent {
                    return Err(Error::Infeasible("no dead-end entity available".into()));
                }
                let m = pick_other(&mut rng, n_ent, &[e_q.index()]);
                let continues = triples.range(Triple::new(ent(m), RelationId(0), ent(0))..).take_while(|t| t.head == ent(m)).any(|t| t.relation == rule.second);
                if !continues {
                    break m;
                }
            };
            let t = Triple::new(e_q, rule.first, ent(m));
            triples.insert(t);
            planted.insert(t);
        }
    }

    for (plan, &unreachable) in plans.iter().zip(&kinds) {
        if !unreachable && plan.split == Split::Train {
            triples.insert(Triple::new(plan.e_q, rules[plan.rule].head, plan.answer.unwrap()));
        }
    }

    // Unreachable answers are drawn from entities more than `path_length`
    // hops away. Training facts of unreachable queries enter the graph too
    // and may bring another query's answer closer, so repeat until stable.
    let mut pending: Vec<usize> = (0..plans.len()).filter(|&i| kinds[i]).collect();
    for _round in 0..20 {
        if pending.is_empty() {
            break;
        }
        let current = KnowledgeGraph::from_triples(n_ent, n_rel, triples.iter().copied())?.augment(AugmentFlags {
            inverse: true,
            noop: false,
            noanswer: false,
        })?;
        for &i in &pending {
            let plan = &mut plans[i];
            let head = rules[plan.rule].head;
            if let Some(old) = plan.answer.take() {
                triples.remove(&Triple::new(plan.e_q, head, old));
            }
            let dist = hop_distances(&current, plan.e_q, None, spec.path_length);
            let far: Vec<usize> = (0..n_ent).filter(|&a| dist[a].is_none()).collect();
            let Some(&a) = far.choose(&mut rng) else {
                return Err(Error::Infeasible("graph too dense to place an unreachable answer".into()));
            };
            plan.answer = Some(ent(a));
            if plan.split == Split::Train {
                triples.insert(Triple::new(plan.e_q, head, ent(a)));
            }
        }
        let current = KnowledgeGraph::from_triples(n_ent, n_rel, triples.iter().copied())?.augment(AugmentFlags {
            inverse: true,
            noop: false,
            noanswer: false,
        })?;
        pending.retain(|&i| {
            let p = &plans[i];
            let q = Query::new(p.e_q, RelationId(p.rule as u32), p.answer, p.split);
            is_reachable(&current, &q, spec.path_length)
        });
    }

    let graph = KnowledgeGraph::from_triples(n_ent, n_rel, triples.iter().copied())?;
    let queries: Vec<Query> = plans
        .iter()
        .map(|p| Query::new(p.e_q, RelationId(p.rule as u32), p.answer, p.split))
        .collect();

    // Exhaustive verification on the final graph under each query's mask.
    let check = graph.clone().augment(AugmentFlags {
        inverse: true,
        noop: false,
        noanswer: false,
    })?;
    for (q, &unreachable) in queries.iter().zip(&kinds) {
        if is_reachable(&check, q, spec.path_length) == unreachable {
            return Err(Error::Infeasible(format!(
                "query ({}, {}) failed its {} check",
                q.e_q.0,
                q.r_q.0,
                if unreachable { "unreachability" } else { "reachability" }
            )));
        }
    }

    Ok(SyntheticDataset {
        graph,
        vocab,
        rules,
        queries,
        unreachable: kinds,
    })
}

fn pick_other(rng: &mut ChaCha8Rng, n: usize, avoid: &[usize]) -> usize {
    loop {
        let x = rng.gen_range(0..n);
        if !avoid.contains(&x) {
            return x;
        }
    }
}

/// Counts queries per split, keyed by split name.
pub fn split_counts(queries: &[Query]) -> BTreeMap<Split, usize> {
    let mut out = BTreeMap::new();
    for q in queries {
        *out.entry(q.split).or_insert(0) += 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg_store::Edge;

    fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        let mut f = fs::File::create(&p).unwrap();
        f.write_all(body.as_bytes()).unwrap();
        p
    }

    fn vocab() -> Vocab {
        Vocab::from_names(["a", "b", "c"], ["q", "r"]).unwrap().freeze()
    }

    #[test]
    fn repeated_pairs_merge_gold() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "q.tsv", "a\tq\tb\na\tq\tc\nb\tr\ta\n");
        let qs = load_queries(&p, &vocab(), Split::Test).unwrap();
        assert_eq!(qs.len(), 2);
        assert_eq!(qs[0].gold, BTreeSet::from([EntityId(1), EntityId(2)]));
        assert_eq!(qs[1].e_q, EntityId(1));
    }

    #[test]
    fn empty_query_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "q.tsv", "");
        assert!(load_queries(&p, &vocab(), Split::Train).unwrap().is_empty());
    }

    #[test]
    fn unknown_names_are_all_listed() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "q.tsv", "a\tq\tb\nzz\tq\tb\na\tnope\tc\n");
        match load_queries(&p, &vocab(), Split::Train) {
            Err(Error::UnknownNames { lines, .. }) => {
                assert_eq!(lines.iter().map(|l| l.0).collect::<Vec<_>>(), vec![2, 3]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn queries_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let qs = vec![
            Query::new(EntityId(0), RelationId(0), [EntityId(1), EntityId(2)], Split::Valid),
            Query::new(EntityId(2), RelationId(1), [EntityId(0)], Split::Valid),
        ];
        let p = dir.path().join("q.tsv");
        save_queries(&p, &vocab(), &qs).unwrap();
        assert_eq!(load_queries(&p, &vocab(), Split::Valid).unwrap(), qs);
    }

    #[test]
    fn train_mask_covers_fact_and_inverse() {
        let layout = RelationLayout::new(2);
        let q = Query::new(EntityId(0), RelationId(0), [EntityId(1)], Split::Train);
        let m = mask_for(&q, layout);
        assert_eq!(m.len(), 2);
        assert!(m.contains(EntityId(0), &Edge::new(RelationId(0), EntityId(1))));
        assert!(m.contains(EntityId(1), &Edge::new(RelationId(2), EntityId(0))));
        let two = Query::new(EntityId(0), RelationId(0), [EntityId(1), EntityId(2)], Split::Train);
        assert_eq!(mask_for(&two, layout).len(), 4);
        let test = Query { split: Split::Test, ..q };
        assert!(mask_for(&test, layout).is_empty());
    }

    #[test]
    fn mask_never_hides_synthetic_edges() {
        let g = KnowledgeGraph::from_triples(2, 1, [Triple::new(EntityId(0), RelationId(0), EntityId(1))])
            .unwrap()
            .augment(AugmentFlags::ALL)
            .unwrap();
        let q = Query::new(EntityId(0), RelationId(0), [EntityId(1)], Split::Train);
        let m = mask_for(&q, g.layout());
        let acts = g.actions(EntityId(0), Some(&m), usize::MAX);
        assert_eq!(acts.len(), 2);
        assert!(acts.iter().all(|a| g.layout().is_synthetic(a.relation)));
    }

    fn small_spec(unreachable_fraction: f64, seed: u64) -> SyntheticSpec {
        SyntheticSpec {
            num_entities: 200,
            num_relations: 10,
            num_rules: 2,
            edge_density: 1.0,
            num_queries: 100,
            unreachable_fraction,
            seed,
            ..SyntheticSpec::default()
        }
    }

    #[test]
    fn unreachable_count_is_exact() {
        let spec = SyntheticSpec {
            num_queries: 1000,
            ..SyntheticSpec::default()
        };
        assert_eq!(spec.unreachable_count(), 156);
        let ds = generate_synthetic(&small_spec(0.156, 3)).unwrap();
        assert_eq!(ds.unreachable.iter().filter(|&&u| u).count(), 16);
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_synthetic(&small_spec(0.2, 9)).unwrap();
        let b = generate_synthetic(&small_spec(0.2, 9)).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic(&small_spec(0.2, 10)).unwrap();
        assert_ne!(a.queries, c.queries);
    }

    #[test]
    fn infeasible_specs_rejected() {
        let spec = SyntheticSpec {
            num_relations: 3,
            num_rules: 2,
            ..small_spec(0.1, 0)
        };
        assert!(matches!(generate_synthetic(&spec), Err(Error::Infeasible(_))));
        let dense = SyntheticSpec {
            num_entities: 30,
            edge_density: 20.0,
            num_queries: 20,
            ..small_spec(0.5, 0)
        };
        assert!(matches!(generate_synthetic(&dense), Err(Error::Infeasible(_))));
    }

    #[test]
    fn held_out_facts_not_in_graph() {
        let ds = generate_synthetic(&small_spec(0.2, 1)).unwrap();
        for q in &ds.queries {
            for &a in &q.gold {
                assert_eq!(ds.graph.has_edge(q.e_q, q.r_q, a), q.split == Split::Train);
            }
        }
        let pairs: HashSet<_> = ds.queries.iter().map(|q| (q.e_q, q.r_q)).collect();
        assert_eq!(pairs.len(), ds.queries.len());
    }
}
