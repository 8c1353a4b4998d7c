//! Beam-search decoding, per-query verdicts and the aggregate metrics:
//! hits@k, MRR, precision, answer rate and their harmonic mean, the QA
//! score.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{mask_for, Query};
use crate::episode::EnvConfig;
use crate::error::{Error, Result};
use crate::kg_store::{Edge, EntityId, KnowledgeGraph, RelationId, Vocab};
use crate::policy::{BatchState, PolicyParams};

/// One partial path kept in the beam.
#[derive(Clone, Debug, PartialEq)]
pub struct BeamEntry {
    pub actions: Vec<Edge>,
    pub log_prob: f64,
    pub entity: EntityId,
}

/// Beam order: higher log-probability first, then lower entity id, then
/// the lexicographically smaller action sequence.
fn beam_order(a: &BeamEntry, b: &BeamEntry) -> Ordering {
    b.log_prob
        .total_cmp(&a.log_prob)
        .then(a.entity.cmp(&b.entity))
        .then_with(|| a.actions.cmp(&b.actions))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub e_q: EntityId,
    pub r_q: RelationId,
    pub gold: BTreeSet<EntityId>,
    pub answered: bool,
    /// Best final entity unless the agent abstained.
    pub top1: Option<EntityId>,
    /// Distinct final entities other than the sink, best first, with the
    /// log-probability of their best path.
    pub ranked: Vec<(EntityId, f64)>,
    /// Best log-probability of ending in the sink, if any beam path did.
    pub no_answer_log_prob: Option<f64>,
    /// The single best path over all final entities, sink included.
    pub best_path: Vec<Edge>,
}

impl Verdict {
    pub fn is_correct(&self) -> bool {
        self.top1.is_some_and(|e| self.gold.contains(&e))
    }

    /// 1-based rank of the best-ranked gold answer; `None` when the query
    /// was not answered or no gold entity was decoded.
    pub fn gold_rank(&self) -> Option<usize> {
        if !self.answered {
            return None;
        }
        self.ranked.iter().position(|(e, _)| self.gold.contains(e)).map(|i| i + 1)
    }

    /// Like [`Verdict::gold_rank`], but entities known to be correct from
    /// `known` do not count against the gold answer.
    pub fn filtered_gold_rank(&self, known: &BTreeSet<EntityId>) -> Option<usize> {
        if !self.answered {
            return None;
        }
        let mut rank = 1;
        for (e, _) in &self.ranked {
            if self.gold.contains(e) {
                return Some(rank);
            }
            if !known.contains(e) {
                rank += 1;
            }
        }
        None
    }
}

/// Beam search over `path_length` steps with beam width `beam_width`.
/// Final entities are deduplicated keeping their best path; the query is
/// answered when the single best final entity is not the sink.
pub fn beam_decode(
    g: &KnowledgeGraph,
    params: &PolicyParams,
    q: &Query,
    env: &EnvConfig,
    beam_width: usize,
) -> Result<Verdict> {
    let beam = beam_search(g, params, q, env, beam_width)?;
    Ok(verdict_from_beam(g, q, &beam))
}

/// The final beam, sorted best first.
pub fn beam_search(
    g: &KnowledgeGraph,
    params: &PolicyParams,
    q: &Query,
    env: &EnvConfig,
    beam_width: usize,
) -> Result<Vec<BeamEntry>> {
    if beam_width == 0 {
        return Err(Error::Config("beam width must be at least 1".into()));
    }
    let layout = g.layout();
    let mask = mask_for(q, layout);
    let hidden = params.config().hidden;
    let mut beam = vec![BeamEntry {
        actions: Vec::new(),
        log_prob: 0.0,
        entity: q.e_q,
    }];
    let mut state = BatchState::zeros(1, hidden);
    let mut cache: HashMap<EntityId, Vec<Edge>> = HashMap::new();
    for _ in 0..env.path_length {
        let prev: Vec<Edge> = beam
            .iter()
            .map(|b| *b.actions.last().unwrap_or(&Edge::new(layout.start(), q.e_q)))
            .collect();
        let mut actions = Vec::with_capacity(beam.len());
        for b in &beam {
            let acts = cache
                .entry(b.entity)
                .or_insert_with(|| g.actions(b.entity, Some(&mask), env.max_out));
            if acts.is_empty() {
                return Err(Error::EmptyActionSet);
            }
            actions.push(acts.clone());
        }
        let rq = vec![q.r_q.index(); beam.len()];
        let (next_state, log_probs) = params.forward_step(&state, &prev, &rq, &actions)?;
        let mut expanded: Vec<(BeamEntry, usize)> = Vec::new();
        for (row, (b, (acts, lps))) in beam.iter().zip(actions.iter().zip(&log_probs)).enumerate() {
            for (a, lp) in acts.iter().zip(lps) {
                let mut path = b.actions.clone();
                path.push(*a);
                expanded.push((
                    BeamEntry {
                        actions: path,
                        log_prob: b.log_prob + lp,
                        entity: a.tail,
                    },
                    row,
                ));
            }
        }
        expanded.sort_by(|x, y| beam_order(&x.0, &y.0));
        expanded.truncate(beam_width);
        let rows: Vec<usize> = expanded.iter().map(|e| e.1).collect();
        state = next_state.gather(&rows);
        beam = expanded.into_iter().map(|e| e.0).collect();
    }
    Ok(beam)
}

fn verdict_from_beam(g: &KnowledgeGraph, q: &Query, beam: &[BeamEntry]) -> Verdict {
    let sink = g.sink();
    // Beam entries are sorted, so the first occurrence of an entity is its
    // best path.
    let mut best: BTreeMap<EntityId, f64> = BTreeMap::new();
    let mut order: Vec<(EntityId, f64)> = Vec::new();
    for b in beam {
        if let std::collections::btree_map::Entry::Vacant(v) = best.entry(b.entity) {
            v.insert(b.log_prob);
            order.push((b.entity, b.log_prob));
        }
    }
    order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let winner = order.first().map(|x| x.0);
    let best_path = winner
        .and_then(|w| beam.iter().find(|b| b.entity == w))
        .map(|b| b.actions.clone())
        .unwrap_or_default();
    let answered = winner.is_some_and(|w| w != sink);
    let ranked: Vec<(EntityId, f64)> = order.iter().copied().filter(|(e, _)| *e != sink).collect();
    Verdict {
        e_q: q.e_q,
        r_q: q.r_q,
        gold: q.gold.clone(),
        answered,
        top1: if answered { winner } else { None },
        ranked,
        no_answer_log_prob: best.get(&sink).copied(),
        best_path,
    }
}

/// Beam-decodes every query (in parallel), returning verdicts in order.
pub fn evaluate(
    g: &KnowledgeGraph,
    params: &PolicyParams,
    queries: &[Query],
    env: &EnvConfig,
    beam_width: usize,
) -> Result<Vec<Verdict>> {
    queries
        .par_iter()
        .map(|q| beam_decode(g, params, q, env, beam_width))
        .collect()
}

/// Harmonic mean of precision and answer rate; zero when both are zero.
pub fn qa_score(precision: f64, answer_rate: f64) -> f64 {
    let s = precision + answer_rate;
    if s > 0.0 {
        2.0 * precision * answer_rate / s
    } else {
        0.0
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub hits_at_1: f64,
    pub hits_at_10: f64,
    pub mrr: f64,
    pub precision: f64,
    pub answer_rate: f64,
    pub qa_score: f64,
    pub n_queries: usize,
    pub n_answered: usize,
    pub n_correct: usize,
}

/// Known correct answers per `(e_q, r_q)`, used for filtered ranking.
pub type KnownAnswers = HashMap<(EntityId, RelationId), BTreeSet<EntityId>>;

pub fn known_answers<'a>(queries: impl IntoIterator<Item = &'a Query>) -> KnownAnswers {
    let mut out: KnownAnswers = HashMap::new();
    for q in queries {
        out.entry((q.e_q, q.r_q)).or_default().extend(q.gold.iter().copied());
    }
    out
}

pub fn aggregate(verdicts: &[Verdict]) -> EvalReport {
    aggregate_with(verdicts, None)
}

/// Folds verdicts into a report. With `filter`, ranks skip other known
/// answers of the same question.
pub fn aggregate_with(verdicts: &[Verdict], filter: Option<&KnownAnswers>) -> EvalReport {
    let n = verdicts.len();
    if n == 0 {
        return EvalReport::default();
    }
    let empty = BTreeSet::new();
    let (mut answered, mut correct) = (0usize, 0usize);
    let (mut h1, mut h10, mut rr) = (0usize, 0usize, 0.0);
    for v in verdicts {
        answered += v.answered as usize;
        correct += v.is_correct() as usize;
        let rank = match filter {
            Some(known) => v.filtered_gold_rank(known.get(&(v.e_q, v.r_q)).unwrap_or(&empty)),
            None => v.gold_rank(),
        };
        if let Some(r) = rank {
            h1 += (r <= 1) as usize;
            h10 += (r <= 10) as usize;
            rr += 1.0 / r as f64;
        }
    }
    let nf = n as f64;
    let precision = if answered > 0 { correct as f64 / answered as f64 } else { 0.0 };
    let answer_rate = answered as f64 / nf;
    EvalReport {
        hits_at_1: h1 as f64 / nf,
        hits_at_10: h10 as f64 / nf,
        mrr: rr / nf,
        precision,
        answer_rate,
        qa_score: qa_score(precision, answer_rate),
        n_queries: n,
        n_answered: answered,
        n_correct: correct,
    }
}

/// `e_q<TAB>r_q<TAB>top1_or_NO_ANSWER<TAB>correct<TAB>gold_rank_or_-1`.
pub fn verdicts_tsv(vocab: &Vocab, verdicts: &[Verdict]) -> String {
    let mut out = String::new();
    for v in verdicts {
        let top = v.top1.map_or("NO_ANSWER", |e| vocab.entity_name(e));
        let rank = v.gold_rank().map_or(-1, |r| r as i64);
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            vocab.entity_name(v.e_q),
            vocab.relation_name(v.r_q),
            top,
            v.is_correct() as u8,
            rank
        )
        .expect("writing to a String cannot fail");
    }
    out
}

pub fn save_verdicts(path: &Path, vocab: &Vocab, verdicts: &[Verdict]) -> Result<()> {
    fs::write(path, verdicts_tsv(vocab, verdicts)).map_err(|e| Error::io(path, e))
}

/// Human-readable best path, e.g. `France -President-of^-1-> Macron …`.
pub fn format_path(vocab: &Vocab, start: EntityId, path: &[Edge]) -> String {
    let mut out = vocab.entity_name(start).to_string();
    for e in path {
        write!(out, " -{}-> {}", vocab.relation_name(e.relation), vocab.entity_name(e.tail)).expect("String write");
    }
    out
}
