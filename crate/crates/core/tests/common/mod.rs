//! Shared builders for the integration tests.
#![allow(dead_code)]

pub mod grad;
pub mod oracles;

use std::collections::BTreeSet;

use kgqa::dataset::{Query, Split};
use kgqa::diffcore::{ParamSet, Tensor};
use kgqa::kg_store::{AugmentFlags, EntityId, KnowledgeGraph, RelationId, Triple};
use kgqa::policy::{PolicyConfig, PolicyParams};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Distinct random triples without self-loops.
pub fn random_triples(rng: &mut ChaCha8Rng, n_ent: usize, n_rel: usize, n_triples: usize) -> Vec<Triple> {
    let mut set = BTreeSet::new();
    let max = n_ent * (n_ent - 1) * n_rel;
    while set.len() < n_triples.min(max) {
        let h = rng.gen_range(0..n_ent);
        let t = rng.gen_range(0..n_ent);
        if h != t {
            set.insert(Triple::new(
                EntityId(h as u32),
                RelationId(rng.gen_range(0..n_rel) as u32),
                EntityId(t as u32),
            ));
        }
    }
    set.into_iter().collect()
}

pub fn random_graph(rng: &mut ChaCha8Rng, n_ent: usize, n_rel: usize, n_triples: usize, flags: AugmentFlags) -> KnowledgeGraph {
    let triples = random_triples(rng, n_ent, n_rel, n_triples);
    KnowledgeGraph::from_triples(n_ent, n_rel, triples).unwrap().augment(flags).unwrap()
}

pub fn config_for(g: &KnowledgeGraph, dim: usize, hidden: usize) -> PolicyConfig {
    PolicyConfig {
        entity_slots: g.entity_slots(),
        relation_slots: g.layout().total(),
        dim,
        hidden,
        ffnn_layers: 1,
    }
}

/// A policy whose every parameter is uniform in `[-scale, scale]`, so that
/// action distributions are far from uniform.
pub fn random_policy(config: PolicyConfig, seed: u64, scale: f64) -> PolicyParams {
    let base = PolicyParams::init(config, seed).unwrap();
    let mut r = rng(seed ^ 0x5eed);
    let mut out = ParamSet::new();
    for (_, name, t) in base.params().iter() {
        let data = (0..t.len()).map(|_| r.gen_range(-scale..scale)).collect();
        out.insert(name, Tensor::new(t.shape().to_vec(), data).unwrap()).unwrap();
    }
    PolicyParams::from_params(config, out).unwrap()
}

/// A query on a random head with one or two random gold tails.
pub fn random_query(rng: &mut ChaCha8Rng, n_ent: usize, n_rel: usize, split: Split) -> Query {
    let e_q = rng.gen_range(0..n_ent);
    let mut others: Vec<usize> = (0..n_ent).filter(|&e| e != e_q).collect();
    others.shuffle(rng);
    let k = rng.gen_range(1..=2).min(others.len());
    Query::new(
        EntityId(e_q as u32),
        RelationId(rng.gen_range(0..n_rel) as u32),
        others[..k].iter().map(|&e| EntityId(e as u32)),
        split,
    )
}
