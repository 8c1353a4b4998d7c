//! Independent reference implementations of path mining and decoding.

use std::collections::{BTreeMap, BTreeSet};

use kgqa::dataset::{mask_for, Query, Split};
use kgqa::episode::{mine_dfs, EnvConfig};
use kgqa::inference::beam_decode;
use kgqa::kg_store::{AugmentFlags, Edge, EntityId, KnowledgeGraph, RelationId, Triple};
use kgqa::policy::{action_logits, step_history, PolicyParams, PolicyState};
use rand::Rng;

/// Adjacency rebuilt from the raw triples: forward edges, inverse edges at
/// `r + R`, minus the query's own facts when it is a training query.
pub fn oracle_adjacency(n_ent: usize, n_rel: usize, triples: &[Triple], q: &Query) -> Vec<Vec<Edge>> {
    let mut adj = vec![Vec::new(); n_ent];
    for t in triples {
        let hidden = q.split == Split::Train && t.head == q.e_q && t.relation == q.r_q && q.gold.contains(&t.tail);
        if hidden {
            continue;
        }
        adj[t.head.index()].push(Edge::new(t.relation, t.tail));
        adj[t.tail.index()].push(Edge::new(RelationId(t.relation.0 + n_rel as u32), t.head));
    }
    adj
}

/// Every simple path of 1..=T edges from `e_q` that ends on a gold entity,
/// padded with NO_OP at its end entity.
pub fn brute_force_paths(adj: &[Vec<Edge>], q: &Query, t_max: usize, no_op: RelationId) -> BTreeSet<Vec<Edge>> {
    let mut out = BTreeSet::new();
    let mut stack: Vec<(Vec<Edge>, EntityId)> = vec![(Vec::new(), q.e_q)];
    while let Some((path, at)) = stack.pop() {
        if path.len() == t_max {
            continue;
        }
        for &e in &adj[at.index()] {
            let visited = e.tail == q.e_q || path.iter().any(|p| p.tail == e.tail);
            if visited {
                continue;
            }
            let mut next = path.clone();
            next.push(e);
            if q.gold.contains(&e.tail) {
                let mut padded = next.clone();
                padded.resize(t_max, Edge::new(no_op, e.tail));
                out.insert(padded);
            }
            stack.push((next, e.tail));
        }
    }
    out
}

pub struct DfsCase {
    pub n_ent: usize,
    pub n_rel: usize,
    pub triples: Vec<Triple>,
    pub query: Query,
}

impl DfsCase {
    pub fn graph(&self) -> KnowledgeGraph {
        KnowledgeGraph::from_triples(self.n_ent, self.n_rel, self.triples.iter().copied())
            .unwrap()
            .augment(AugmentFlags::ALL)
            .unwrap()
    }
}

/// Twenty random graphs with at most ten entities, half with training
/// queries (some stating a real fact, so masking matters).
pub fn dfs_cases() -> Vec<DfsCase> {
    let mut r = super::rng(2024);
    (0..20)
        .map(|i| {
            let n_ent = r.gen_range(3..=10);
            let n_rel = r.gen_range(1..=3);
            let n_triples = r.gen_range(2..=2 * n_ent);
            let triples = super::random_triples(&mut r, n_ent, n_rel, n_triples);
            let split = if i % 2 == 0 { Split::Train } else { Split::Test };
            let mut query = super::random_query(&mut r, n_ent, n_rel, split);
            if split == Split::Train && i % 4 == 0 {
                let t = triples[r.gen_range(0..triples.len())];
                query = Query::new(t.head, t.relation, [t.tail], Split::Train);
            }
            DfsCase {
                n_ent,
                n_rel,
                triples,
                query,
            }
        })
        .collect()
}

/// Compares `mine_dfs` with the brute force on one case and path length.
/// Returns whether the query was unreachable, or a description of the
/// first mismatch.
pub fn check_dfs_case(case: &DfsCase, t_max: usize, seed: u64) -> Result<bool, String> {
    let g = case.graph();
    let env = EnvConfig {
        path_length: t_max,
        max_out: 1000,
    };
    let adj = oracle_adjacency(case.n_ent, case.n_rel, &case.triples, &case.query);
    let expected = brute_force_paths(&adj, &case.query, t_max, g.layout().no_op());
    let mined = mine_dfs(&g, &case.query, &env, None, &mut super::rng(seed));
    if expected.is_empty() {
        let mut target = vec![Edge::new(g.layout().no_answer(), g.sink())];
        target.resize(t_max, Edge::new(g.layout().no_op(), g.sink()));
        if mined.len() != 1 || mined[0].actions != target {
            return Err(format!("T={t_max}: expected the single no-answer target, got {} paths", mined.len()));
        }
        return Ok(true);
    }
    let got: BTreeSet<Vec<Edge>> = mined.iter().map(|ex| ex.actions.clone()).collect();
    if got.len() != mined.len() {
        return Err(format!("T={t_max}: duplicate paths"));
    }
    if got != expected {
        return Err(format!("T={t_max}: mined {} paths, brute force {}", got.len(), expected.len()));
    }
    Ok(false)
}

/// Every length-T action sequence with its log-probability and final
/// entity, scored one step at a time through the single-episode policy.
pub fn enumerate_paths(g: &KnowledgeGraph, params: &PolicyParams, q: &Query, env: &EnvConfig) -> Vec<(Vec<Edge>, f64, EntityId)> {
    let mask = mask_for(q, g.layout());
    let hidden = params.config().hidden;
    let mut out = Vec::new();
    let mut stack = vec![(Vec::<Edge>::new(), 0.0, q.e_q, PolicyState::zeros(hidden))];
    while let Some((path, lp, at, state)) = stack.pop() {
        if path.len() == env.path_length {
            out.push((path, lp, at));
            continue;
        }
        let prev = path.last().map_or((g.layout().start(), q.e_q), |e| (e.relation, e.tail));
        let next = step_history(params, &state, prev).unwrap();
        let acts = g.actions(at, Some(&mask), env.max_out);
        let lps = action_logits(params, &next, at, q.r_q, &acts, acts.len()).unwrap();
        for (a, l) in acts.iter().zip(lps) {
            let mut p = path.clone();
            p.push(*a);
            stack.push((p, lp + l, a.tail, next.clone()));
        }
    }
    out
}

pub const BEAM: usize = 64;

/// A random graph, query and policy (parameters uniform in ±2) whose total
/// number of length-T paths fits in [`BEAM`].
pub fn small_beam_case(seed: u64) -> (KnowledgeGraph, Query, PolicyParams) {
    let mut r = super::rng(seed);
    loop {
        let n_ent = r.gen_range(3..=5);
        let n_triples = r.gen_range(1..=4);
        let g = super::random_graph(&mut r, n_ent, 2, n_triples, AugmentFlags::ALL);
        let split = if r.gen_bool(0.5) { Split::Train } else { Split::Test };
        let q = super::random_query(&mut r, n_ent, 2, split);
        let params = super::random_policy(super::config_for(&g, 3, 4), seed, 2.0);
        if enumerate_paths(&g, &params, &q, &EnvConfig::default()).len() <= BEAM {
            return (g, q, params);
        }
    }
}

/// Decodes one small case with beam width [`BEAM`] and compares it with
/// exhaustive enumeration. Returns whether the query was answered, or a
/// description of the first mismatch.
pub fn check_beam_case(seed: u64) -> Result<bool, String> {
    let env = EnvConfig::default();
    let (g, q, params) = small_beam_case(seed);
    let paths = enumerate_paths(&g, &params, &q, &env);
    let total: f64 = paths.iter().map(|p| p.1.exp()).sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(format!("path probabilities sum to {total}"));
    }
    let mut best: BTreeMap<EntityId, f64> = BTreeMap::new();
    for (_, lp, e) in &paths {
        let slot = best.entry(*e).or_insert(f64::NEG_INFINITY);
        *slot = slot.max(*lp);
    }
    let (&winner, &winner_lp) = best
        .iter()
        .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(a.0)))
        .unwrap();
    let v = beam_decode(&g, &params, &q, &env, BEAM).unwrap();
    if v.answered != (winner != g.sink()) {
        return Err(format!("answered {} but the argmax is {winner:?}", v.answered));
    }
    if v.answered {
        if v.top1 != Some(winner) || (v.ranked[0].1 - winner_lp).abs() > 1e-9 {
            return Err(format!("top-1 {:?}, argmax {winner:?}", v.top1));
        }
    } else if (v.no_answer_log_prob.unwrap() - winner_lp).abs() > 1e-9 {
        return Err("abstention probability differs from the sink's best path".into());
    }
    for (e, lp) in &v.ranked {
        if (best[e] - lp).abs() > 1e-9 {
            return Err(format!("{e:?} decoded with {lp}, exact best {}", best[e]));
        }
    }
    if v.ranked.len() != best.keys().filter(|&&e| e != g.sink()).count() {
        return Err("decoded entity set differs from the reachable set".into());
    }
    Ok(v.answered)
}
