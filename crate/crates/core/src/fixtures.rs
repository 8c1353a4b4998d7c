//! Small hand-built graphs and policies with known behavior, shared by
//! tests, examples and the CLI smoke tests.

use crate::dataset::{Query, Split};
use crate::kg_store::{AugmentFlags, EntityId, KnowledgeGraph, RelationId, Triple, Vocab};
use crate::policy::{init_params, PolicyConfig, PolicyParams};

/// The capital-of-France micro-graph:
/// `Macron -President-of-> France`, `Macron -Lives-in-> Paris`, and the
/// held-out question `(France, Capital-of, ?)` with answer Paris.
#[derive(Clone, Debug)]
pub struct CapitalExample {
    /// Fully augmented (inverse, NO_OP, NO_ANSWER).
    pub graph: KnowledgeGraph,
    pub vocab: Vocab,
    pub query: Query,
    pub france: EntityId,
    pub paris: EntityId,
    pub macron: EntityId,
    pub president_of: RelationId,
    pub lives_in: RelationId,
    pub capital_of: RelationId,
}

pub fn capital_example() -> CapitalExample {
    let vocab = Vocab::from_names(["France", "Paris", "Macron"], ["President-of", "Lives-in", "Capital-of"])
        .expect("distinct names")
        .freeze();
    let (france, paris, macron) = (EntityId(0), EntityId(1), EntityId(2));
    let (president_of, lives_in, capital_of) = (RelationId(0), RelationId(1), RelationId(2));
    let graph = KnowledgeGraph::from_triples(
        3,
        3,
        [
            Triple::new(macron, president_of, france),
            Triple::new(macron, lives_in, paris),
        ],
    )
    .and_then(|g| g.augment(AugmentFlags::ALL))
    .expect("valid fixture");
    CapitalExample {
        graph,
        vocab,
        query: Query::new(france, capital_of, [paris], Split::Test),
        france,
        paris,
        macron,
        president_of,
        lives_in,
        capital_of,
    }
}

fn constant_query_policy(config: PolicyConfig, seed: u64) -> PolicyParams {
    // Zero scorer weights and a saturated bias make the query vector
    // (almost exactly) [1, 0, …, 0 | 1, 0, …, 0], so an action scores the
    // first coordinate of its relation plus that of its entity.
    let mut p = init_params(config, seed).expect("valid config");
    let d = config.dim;
    let set = |p: &mut PolicyParams, name: &str, f: &dyn Fn(usize) -> f64| {
        let id = p.params().id(name).expect("known parameter");
        for (i, x) in p.params_mut().get_mut(id).data_mut().iter_mut().enumerate() {
            *x = f(i);
        }
    };
    set(&mut p, "ffnn.w0", &|_| 0.0);
    set(&mut p, "ffnn.b0", &|i| if i % d == 0 { 20.0 } else { 0.0 });
    set(&mut p, "relation_emb", &|_| 0.0);
    set(&mut p, "entity_emb", &|_| 0.0);
    p
}

fn set_first_coordinate(p: &mut PolicyParams, table: &str, row: usize, value: f64) {
    let d = p.config().dim;
    let id = p.params().id(table).expect("known parameter");
    p.params_mut().get_mut(id).data_mut()[row * d] = value;
}

/// A hand-set policy that deterministically walks
/// `France -President-of⁻¹-> Macron -Lives-in-> Paris -NO_OP-> Paris`.
pub fn capital_oracle_policy(fx: &CapitalExample) -> PolicyParams {
    let g = &fx.graph;
    let layout = g.layout();
    let config = PolicyConfig {
        entity_slots: g.entity_slots(),
        relation_slots: layout.total(),
        dim: 2,
        hidden: 2,
        ffnn_layers: 1,
    };
    let mut p = constant_query_policy(config, 0);
    for r in 0..layout.total() {
        set_first_coordinate(&mut p, "relation_emb", r, -200.0);
    }
    for r in [layout.inverse(fx.president_of), fx.lives_in, layout.no_op()] {
        set_first_coordinate(&mut p, "relation_emb", r.index(), 0.0);
    }
    set_first_coordinate(&mut p, "entity_emb", fx.paris.index(), 100.0);
    set_first_coordinate(&mut p, "entity_emb", fx.macron.index(), 50.0);
    p
}

/// A policy that takes NO_ANSWER at the first step with probability
/// indistinguishable from one, on any graph with the given table sizes.
pub fn abstaining_policy(config: PolicyConfig, no_answer: RelationId) -> PolicyParams {
    let mut p = constant_query_policy(config, 0);
    set_first_coordinate(&mut p, "relation_emb", no_answer.index(), 100.0);
    p
}
