//! The walking environment, rewards, sampled rollouts, REINFORCE updates,
//! DFS path mining and supervised (teacher-forced) updates.
//!
//! Rollouts only run the policy forward and remember every step's
//! candidate list. Updates replay those steps on a fresh tape in fixed-size
//! chunks, so the gradient is a deterministic sum no matter how many worker
//! threads computed the chunks.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{mask_for, Query};
use crate::diffcore::{AdamState, Gradients, Tape, Var};
use crate::error::{Error, Result};
use crate::kg_store::{Edge, EdgeMask, EntityId, KnowledgeGraph, RelationId, Vocab};
use crate::policy::{BatchState, PolicyParams, TapeState};

/// Rows replayed per tape during an update.
pub const UPDATE_CHUNK_ROWS: usize = 128;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub path_length: usize,
    pub max_out: usize,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            path_length: 3,
            max_out: crate::kg_store::DEFAULT_MAX_OUT,
        }
    }
}

/// `s_t = (e_t, e_q, r_q)` at step `t`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct State {
    pub t: usize,
    pub e_t: EntityId,
    pub e_q: EntityId,
    pub r_q: RelationId,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RewardMode {
    Binary,
    Ternary,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig {
    pub mode: RewardMode,
    pub r_pos: f64,
    pub r_neg: f64,
}

impl RewardConfig {
    /// Abstention is always rewarded with zero.
    pub const R_NEUTRAL: f64 = 0.0;

    pub fn binary() -> Self {
        Self {
            mode: RewardMode::Binary,
            r_pos: 1.0,
            r_neg: 0.0,
        }
    }

    pub fn ternary(r_pos: f64, r_neg: f64) -> Self {
        Self {
            mode: RewardMode::Ternary,
            r_pos,
            r_neg,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.mode == RewardMode::Ternary && !(self.r_pos > 0.0 && self.r_neg < 0.0) {
            return Err(Error::Config(format!(
                "ternary rewards need r_pos > 0 > r_neg, got r_pos={} r_neg={}",
                self.r_pos, self.r_neg
            )));
        }
        Ok(())
    }
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self::ternary(10.0, -0.1)
    }
}

/// Terminal reward of an episode ending at `e_t`.
pub fn reward(e_t: EntityId, gold: &BTreeSet<EntityId>, sink: EntityId, cfg: &RewardConfig) -> f64 {
    let hit = gold.contains(&e_t);
    match cfg.mode {
        RewardMode::Binary => {
            if hit {
                1.0
            } else {
                0.0
            }
        }
        RewardMode::Ternary if hit => cfg.r_pos,
        RewardMode::Ternary if e_t == sink => RewardConfig::R_NEUTRAL,
        RewardMode::Ternary => cfg.r_neg,
    }
}

/// One decision: the candidates offered and the index taken.
#[derive(Clone, Debug, PartialEq)]
pub struct Step {
    pub candidates: Vec<Edge>,
    pub chosen: usize,
    pub log_prob: f64,
}

impl Step {
    pub fn action(&self) -> Edge {
        self.candidates[self.chosen]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub query: Query,
    pub steps: Vec<Step>,
    pub terminal: EntityId,
    pub reward: f64,
}

impl Trajectory {
    pub fn actions(&self) -> Vec<Edge> {
        self.steps.iter().map(Step::action).collect()
    }

    pub fn log_prob(&self) -> f64 {
        self.steps.iter().map(|s| s.log_prob).sum()
    }

    /// The state before each step, followed by the final state.
    pub fn states(&self) -> Vec<State> {
        let mut e_t = self.query.e_q;
        let mut out = Vec::with_capacity(self.steps.len() + 1);
        for t in 0..=self.steps.len() {
            out.push(State {
                t,
                e_t,
                e_q: self.query.e_q,
                r_q: self.query.r_q,
            });
            if t < self.steps.len() {
                e_t = self.steps[t].action().tail;
            }
        }
        out
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Random stream of one query in one epoch. Streams depend only on the
/// global seed, the epoch and the query, never on scheduling.
pub fn query_rng(seed: u64, epoch: u64, query_key: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(splitmix64(splitmix64(seed) ^ epoch) ^ query_key))
}

fn sample(log_probs: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, lp) in log_probs.iter().enumerate() {
        acc += lp.exp();
        if u < acc {
            return i;
        }
    }
    // Rounding left a sliver above the total; take the last likely action.
    log_probs
        .iter()
        .rposition(|lp| lp.exp() > 0.0)
        .unwrap_or(log_probs.len() - 1)
}

/// Runs `k` sampled episodes of exactly `path_length` steps for `q`, with
/// the query's own facts masked.
pub fn rollout(
    g: &KnowledgeGraph,
    params: &PolicyParams,
    q: &Query,
    env: &EnvConfig,
    rewards: &RewardConfig,
    k: usize,
    rng: &mut impl Rng,
) -> Result<Vec<Trajectory>> {
    let layout = g.layout();
    let mask = mask_for(q, layout);
    let hidden = params.config().hidden;
    let mut state = BatchState::zeros(k, hidden);
    let mut prev = vec![Edge::new(layout.start(), q.e_q); k];
    let rq = vec![q.r_q.index(); k];
    let mut steps: Vec<Vec<Step>> = vec![Vec::with_capacity(env.path_length); k];
    let mut cache: HashMap<EntityId, Vec<Edge>> = HashMap::new();
    for _ in 0..env.path_length {
        let mut actions = Vec::with_capacity(k);
        for p in &prev {
            let acts = cache
                .entry(p.tail)
                .or_insert_with(|| g.actions(p.tail, Some(&mask), env.max_out));
            if acts.is_empty() {
                return Err(Error::EmptyActionSet);
            }
            actions.push(acts.clone());
        }
        let (next, log_probs) = params.forward_step(&state, &prev, &rq, &actions)?;
        state = next;
        for (row, (acts, lp)) in actions.into_iter().zip(log_probs).enumerate() {
            let chosen = sample(&lp, rng);
            prev[row] = acts[chosen];
            steps[row].push(Step {
                candidates: acts,
                chosen,
                log_prob: lp[chosen],
            });
        }
    }
    let sink = g.sink();
    Ok(steps
        .into_iter()
        .zip(prev)
        .map(|(steps, last)| Trajectory {
            query: q.clone(),
            steps,
            terminal: last.tail,
            reward: reward(last.tail, &q.gold, sink, rewards),
        })
        .collect())
}

/// Rollouts for a batch of queries, each on its own random stream, in
/// query order.
#[allow(clippy::too_many_arguments)]
pub fn rollout_batch(
    g: &KnowledgeGraph,
    params: &PolicyParams,
    queries: &[Query],
    env: &EnvConfig,
    rewards: &RewardConfig,
    k: usize,
    seed: u64,
    epoch: u64,
) -> Result<Vec<Trajectory>> {
    let per_query: Vec<Vec<Trajectory>> = queries
        .par_iter()
        .map(|q| {
            let mut rng = query_rng(seed, epoch, q.key());
            rollout(g, params, q, env, rewards, k, &mut rng)
        })
        .collect::<Result<_>>()?;
    Ok(per_query.into_iter().flatten().collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    None,
    /// Exponential moving average of batch mean rewards.
    Ema,
    /// Mean reward of the current batch.
    BatchMean,
    /// Mean reward of the rollouts of the same query in the batch.
    QueryMean,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    pub kind: BaselineKind,
    pub decay: f64,
    value: Option<f64>,
}

impl Baseline {
    pub fn new(kind: BaselineKind, decay: f64) -> Self {
        Self {
            kind,
            decay,
            value: None,
        }
    }

    pub fn ema(decay: f64) -> Self {
        Self::new(BaselineKind::Ema, decay)
    }

    /// Current moving average (zero before the first batch).
    pub fn value(&self) -> f64 {
        self.value.unwrap_or(0.0)
    }

    /// Per-trajectory baselines for `batch`; advances the moving average.
    pub fn assign(&mut self, batch: &[Trajectory]) -> Vec<f64> {
        let n = batch.len() as f64;
        let mean = batch.iter().map(|t| t.reward).sum::<f64>() / n;
        match self.kind {
            BaselineKind::None => vec![0.0; batch.len()],
            BaselineKind::BatchMean => vec![mean; batch.len()],
            BaselineKind::Ema => {
                let b = self.value.unwrap_or(mean);
                self.value = Some(self.decay * b + (1.0 - self.decay) * mean);
                vec![b; batch.len()]
            }
            BaselineKind::QueryMean => {
                let mut sums: HashMap<u64, (f64, usize)> = HashMap::new();
                for t in batch {
                    let e = sums.entry(t.query.key()).or_insert((0.0, 0));
                    e.0 += t.reward;
                    e.1 += 1;
                }
                batch
                    .iter()
                    .map(|t| {
                        let (s, c) = sums[&t.query.key()];
                        s / c as f64
                    })
                    .collect()
            }
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    /// Value of the minimized loss.
    pub loss: f64,
    pub mean_reward: f64,
    pub mean_baseline: f64,
    /// Mean over rows of the summed per-step policy entropy.
    pub entropy: f64,
    pub grad_norm: f64,
    pub rows: usize,
}

/// A row replayed under teacher forcing: start entity, query relation and
/// the candidate list / chosen index at each step.
struct Replay<'a> {
    e_q: EntityId,
    r_q: RelationId,
    steps: Vec<(&'a [Edge], usize)>,
}

/// Per-step log-probability rows (`1 × n`) for every replayed row.
fn replay(params: &PolicyParams, tape: &mut Tape<'_>, rows: &[Replay<'_>], start: RelationId) -> Result<Vec<Vec<Var>>> {
    let n = rows.len();
    let path_length = rows.first().map_or(0, |r| r.steps.len());
    let mut st = TapeState::zeros(tape, n, params.config().hidden);
    let mut prev_rel: Vec<usize> = vec![start.index(); n];
    let mut prev_ent: Vec<usize> = rows.iter().map(|r| r.e_q.index()).collect();
    let rq: Vec<usize> = rows.iter().map(|r| r.r_q.index()).collect();
    let mut out = vec![Vec::with_capacity(path_length); n];
    for t in 0..path_length {
        st = params.lstm_step(tape, st, &prev_rel, &prev_ent)?;
        let qv = params.query_vectors(tape, st.h, &prev_ent, &rq)?;
        for (i, row) in rows.iter().enumerate() {
            let (cands, chosen) = row.steps[t];
            let lp = params.score_actions(tape, qv, i, cands, cands.len())?;
            out[i].push(lp);
            prev_rel[i] = cands[chosen].relation.index();
            prev_ent[i] = cands[chosen].tail.index();
        }
    }
    Ok(out)
}

fn entropy_of(tape: &mut Tape<'_>, lp: Var) -> Var {
    // −Σ p·log p
    let p = tape.exp(lp);
    let plogp = tape.mul(p, lp).expect("same shape");
    let s = tape.sum(plogp);
    tape.scale(s, -1.0)
}

fn sum_vars(tape: &mut Tape<'_>, vars: &[Var]) -> Result<Option<Var>> {
    let mut acc: Option<Var> = None;
    for &v in vars {
        acc = Some(match acc {
            None => v,
            Some(a) => tape.add(a, v)?,
        });
    }
    Ok(acc)
}

/// Chunked, order-stable gradient of a per-row loss. `row_loss` adds the
/// loss terms of one row and returns them (or `None` for no contribution)
/// together with a statistic that is summed over rows.
fn chunked_gradient<F>(params: &PolicyParams, rows: &[Replay<'_>], start: RelationId, row_loss: F) -> Result<(Gradients, f64, f64)>
where
    F: Fn(&mut Tape<'_>, usize, &[Var]) -> Result<(Option<Var>, f64)> + Sync,
{
    let chunks: Vec<(usize, &[Replay<'_>])> = rows
        .chunks(UPDATE_CHUNK_ROWS)
        .enumerate()
        .map(|(i, c)| (i * UPDATE_CHUNK_ROWS, c))
        .collect();
    let parts: Vec<(Gradients, f64, f64)> = chunks
        .par_iter()
        .map(|&(offset, chunk)| {
            let mut tape = Tape::new(params.params());
            let lps = replay(params, &mut tape, chunk, start)?;
            let mut terms = Vec::with_capacity(chunk.len());
            let mut stat = 0.0;
            for (i, row_lps) in lps.iter().enumerate() {
                let (term, s) = row_loss(&mut tape, offset + i, row_lps)?;
                stat += s;
                terms.extend(term);
            }
            let mut grads = Gradients::for_params(params.params());
            let mut loss = 0.0;
            if let Some(total) = sum_vars(&mut tape, &terms)? {
                loss = tape.scalar(total);
                tape.backward_into(total, &mut grads)?;
            }
            Ok((grads, loss, stat))
        })
        .collect::<Result<_>>()?;
    let mut grads = Gradients::for_params(params.params());
    let (mut loss, mut stat) = (0.0, 0.0);
    for (g, l, s) in &parts {
        grads.add_assign(g);
        loss += l;
        stat += s;
    }
    Ok((grads, loss, stat))
}

/// Loss and gradient of the REINFORCE surrogate without taking a step:
/// `L = −(1/N) Σ_i [(R_i − b_i) Σ_t log π(a_t) + β Σ_t H(π_t)]`.
pub fn reinforce_gradient(
    params: &PolicyParams,
    batch: &[Trajectory],
    baselines: &[f64],
    entropy_weight: f64,
    start: RelationId,
) -> Result<(Gradients, UpdateStats)> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let n = batch.len() as f64;
    let rows: Vec<Replay<'_>> = batch
        .iter()
        .map(|t| Replay {
            e_q: t.query.e_q,
            r_q: t.query.r_q,
            steps: t.steps.iter().map(|s| (s.candidates.as_slice(), s.chosen)).collect(),
        })
        .collect();
    let (grads, loss, entropy) = chunked_gradient(params, &rows, start, |tape, i, lps| {
        let traj = &batch[i];
        let adv = traj.reward - baselines[i];
        let mut terms = Vec::with_capacity(2 * lps.len());
        let mut ent = 0.0;
        for (step, &lp) in traj.steps.iter().zip(lps) {
            let picked = tape.select(lp, &[step.chosen])?;
            terms.push(tape.scale(picked, -adv / n));
            let h = entropy_of(tape, lp);
            ent += tape.scalar(h);
            if entropy_weight != 0.0 {
                terms.push(tape.scale(h, -entropy_weight / n));
            }
        }
        Ok((sum_vars(tape, &terms)?, ent))
    })?;
    let stats = UpdateStats {
        loss,
        mean_reward: batch.iter().map(|t| t.reward).sum::<f64>() / n,
        mean_baseline: baselines.iter().sum::<f64>() / n,
        entropy: entropy / n,
        grad_norm: grads.l2_norm(),
        rows: batch.len(),
    };
    Ok((grads, stats))
}

/// One REINFORCE step: gradient ascent on the baseline-corrected return
/// plus an entropy bonus, applied with a single Adam update.
pub fn reinforce_update(
    params: &mut PolicyParams,
    adam: &mut AdamState,
    batch: &[Trajectory],
    baseline: &mut Baseline,
    entropy_weight: f64,
    start: RelationId,
) -> Result<UpdateStats> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let b = baseline.assign(batch);
    let (grads, stats) = reinforce_gradient(params, batch, &b, entropy_weight, start)?;
    adam.step(params.params_mut(), &grads)?;
    Ok(stats)
}

/// A supervised target: a query and an executable action sequence of
/// exactly `path_length` steps.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct DfsExample {
    pub query: Query,
    pub actions: Vec<Edge>,
}

impl DfsExample {
    pub fn is_no_answer(&self, g: &KnowledgeGraph) -> bool {
        self.actions.first().is_some_and(|a| a.relation == g.layout().no_answer())
    }
}

/// Depth-first enumeration of simple paths (no entity visited twice,
/// counting `e_q`) of at most `path_length` hops from `e_q` to a gold
/// answer, over dataset and inverse edges of the masked action space.
/// Children are visited in an order shuffled by `rng`; the search stops
/// once `max_paths` paths are found (`None` for no limit). Paths are padded
/// with NO_OP. With no path and a NO_ANSWER-augmented graph the result is
/// the single no-answer target; without the augmentation it is empty.
pub fn mine_dfs(
    g: &KnowledgeGraph,
    q: &Query,
    env: &EnvConfig,
    max_paths: Option<usize>,
    rng: &mut impl Rng,
) -> Vec<DfsExample> {
    let layout = g.layout();
    let mask = mask_for(q, layout);
    let mut found: Vec<Vec<Edge>> = Vec::new();
    let mut path: Vec<Edge> = Vec::with_capacity(env.path_length);
    let mut on_path: HashSet<EntityId> = HashSet::from([q.e_q]);
    let limit = max_paths.unwrap_or(usize::MAX);

    #[allow(clippy::too_many_arguments)]
    fn visit(
        g: &KnowledgeGraph,
        q: &Query,
        env: &EnvConfig,
        mask: &EdgeMask,
        at: EntityId,
        path: &mut Vec<Edge>,
        on_path: &mut HashSet<EntityId>,
        found: &mut Vec<Vec<Edge>>,
        limit: usize,
        rng: &mut dyn rand::RngCore,
    ) {
        if path.len() == env.path_length {
            return;
        }
        let layout = g.layout();
        let mut children: Vec<Edge> = g
            .actions(at, Some(mask), env.max_out)
            .into_iter()
            .filter(|e| !layout.is_synthetic(e.relation))
            .collect();
        children.shuffle(rng);
        for edge in children {
            if found.len() >= limit {
                return;
            }
            if on_path.contains(&edge.tail) {
                continue;
            }
            path.push(edge);
            on_path.insert(edge.tail);
            if q.gold.contains(&edge.tail) {
                found.push(path.clone());
            }
            visit(g, q, env, mask, edge.tail, path, on_path, found, limit, rng);
            on_path.remove(&edge.tail);
            path.pop();
        }
    }

    if limit > 0 {
        visit(g, q, env, &mask, q.e_q, &mut path, &mut on_path, &mut found, limit, rng);
    }
    if found.is_empty() {
        if !g.augmentation().noanswer {
            return Vec::new();
        }
        let sink = g.sink();
        let mut target = vec![Edge::new(layout.no_answer(), sink)];
        target.resize(env.path_length.max(1), Edge::new(layout.no_op(), sink));
        return vec![DfsExample {
            query: q.clone(),
            actions: target,
        }];
    }
    found
        .into_iter()
        .map(|mut p| {
            let end = p.last().expect("paths are non-empty").tail;
            p.resize(env.path_length, Edge::new(layout.no_op(), end));
            DfsExample {
                query: q.clone(),
                actions: p,
            }
        })
        .collect()
}

/// Loss and gradient of the mean per-example negative log-likelihood of
/// the target actions under teacher forcing.
pub fn supervised_gradient(
    g: &KnowledgeGraph,
    params: &PolicyParams,
    examples: &[DfsExample],
    env: &EnvConfig,
) -> Result<(Gradients, UpdateStats)> {
    if examples.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let layout = g.layout();
    let mut candidate_lists: Vec<Vec<Vec<Edge>>> = Vec::with_capacity(examples.len());
    let mut chosen: Vec<Vec<usize>> = Vec::with_capacity(examples.len());
    for ex in examples {
        let mask = mask_for(&ex.query, layout);
        let mut at = ex.query.e_q;
        let mut lists = Vec::with_capacity(ex.actions.len());
        let mut picks = Vec::with_capacity(ex.actions.len());
        for target in &ex.actions {
            let acts = g.actions(at, Some(&mask), env.max_out);
            let idx = acts.iter().position(|a| a == target).ok_or_else(|| {
                Error::InvalidTarget(format!("action {target} unavailable at entity {}", at.0))
            })?;
            lists.push(acts);
            picks.push(idx);
            at = target.tail;
        }
        candidate_lists.push(lists);
        chosen.push(picks);
    }
    let rows: Vec<Replay<'_>> = examples
        .iter()
        .zip(&candidate_lists)
        .zip(&chosen)
        .map(|((ex, lists), picks)| Replay {
            e_q: ex.query.e_q,
            r_q: ex.query.r_q,
            steps: lists.iter().map(Vec::as_slice).zip(picks.iter().copied()).collect(),
        })
        .collect();
    let n = examples.len() as f64;
    let (grads, loss, entropy) = chunked_gradient(params, &rows, layout.start(), |tape, i, lps| {
        let mut terms = Vec::with_capacity(lps.len());
        let mut ent = 0.0;
        for (&lp, &c) in lps.iter().zip(&chosen[i]) {
            let picked = tape.select(lp, &[c])?;
            terms.push(tape.scale(picked, -1.0 / n));
            let h = entropy_of(tape, lp);
            ent += tape.scalar(h);
        }
        Ok((sum_vars(tape, &terms)?, ent))
    })?;
    let stats = UpdateStats {
        loss,
        mean_reward: 0.0,
        mean_baseline: 0.0,
        entropy: entropy / n,
        grad_norm: grads.l2_norm(),
        rows: examples.len(),
    };
    Ok((grads, stats))
}

/// One supervised step on the mean negative log-likelihood of the targets.
pub fn supervised_update(
    g: &KnowledgeGraph,
    params: &mut PolicyParams,
    adam: &mut AdamState,
    examples: &[DfsExample],
    env: &EnvConfig,
) -> Result<UpdateStats> {
    let (grads, stats) = supervised_gradient(g, params, examples, env)?;
    adam.step(params.params_mut(), &grads)?;
    Ok(stats)
}

/// Writes `e_q<TAB>r_q<TAB>rel1,ent1|rel2,ent2|…` lines.
pub fn save_dfs_examples(path: &Path, vocab: &Vocab, examples: &[DfsExample]) -> Result<()> {
    let mut out = String::new();
    for ex in examples {
        let steps: Vec<String> = ex
            .actions
            .iter()
            .map(|a| format!("{},{}", vocab.relation_name(a.relation), vocab.entity_name(a.tail)))
            .collect();
        writeln!(
            out,
            "{}\t{}\t{}",
            vocab.entity_name(ex.query.e_q),
            vocab.relation_name(ex.query.r_q),
            steps.join("|")
        )
        .expect("writing to a String cannot fail");
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads examples written by [`save_dfs_examples`], attaching each line to
/// the query with the same `(e_q, r_q)` in `queries`.
pub fn load_dfs_examples(path: &Path, vocab: &Vocab, queries: &[Query]) -> Result<Vec<DfsExample>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let by_pair: HashMap<(EntityId, RelationId), &Query> = queries.iter().map(|q| ((q.e_q, q.r_q), q)).collect();
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 3 {
            return Err(parse_err(format!("expected 3 columns, found {}", cols.len())));
        }
        let e_q = vocab.entity(cols[0]).map_err(|e| parse_err(e.to_string()))?;
        let r_q = vocab.relation(cols[1]).map_err(|e| parse_err(e.to_string()))?;
        let query = by_pair
            .get(&(e_q, r_q))
            .ok_or_else(|| parse_err(format!("no query ({}, {})", cols[0], cols[1])))?;
        let mut actions = Vec::new();
        for step in cols[2].split('|') {
            let (r, e) = step
                .split_once(',')
                .ok_or_else(|| parse_err(format!("malformed step `{step}`")))?;
            let r = vocab.parse_relation(r).map_err(|e| parse_err(e.to_string()))?;
            let e = vocab.parse_entity(e).map_err(|e| parse_err(e.to_string()))?;
            actions.push(Edge::new(r, e));
        }
        out.push(DfsExample {
            query: (*query).clone(),
            actions,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Split;
    use crate::diffcore::AdamConfig;
    use crate::fixtures;
    use crate::kg_store::{AugmentFlags, Triple};
    use crate::policy::{init_params, PolicyConfig};

    fn tiny_policy(g: &KnowledgeGraph, seed: u64) -> PolicyParams {
        init_params(
            PolicyConfig {
                entity_slots: g.entity_slots(),
                relation_slots: g.layout().total(),
                dim: 4,
                hidden: 8,
                ffnn_layers: 1,
            },
            seed,
        )
        .unwrap()
    }

    #[test]
    fn ternary_reward_values() {
        let gold = BTreeSet::from([EntityId(1)]);
        let sink = EntityId(9);
        let cfg = RewardConfig::default();
        assert_eq!(reward(EntityId(1), &gold, sink, &cfg), 10.0);
        assert_eq!(reward(sink, &gold, sink, &cfg), 0.0);
        assert_eq!(reward(EntityId(2), &gold, sink, &cfg), -0.1);
        let b = RewardConfig::binary();
        assert_eq!(reward(EntityId(1), &gold, sink, &b), 1.0);
        assert_eq!(reward(sink, &gold, sink, &b), 0.0);
        assert!(RewardConfig::ternary(1.0, 0.5).validate().is_err());
    }

    #[test]
    fn oracle_policy_walks_the_two_hop_path() {
        let fx = fixtures::capital_example();
        let params = fixtures::capital_oracle_policy(&fx);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let trajs = rollout(&fx.graph, &params, &fx.query, &EnvConfig::default(), &RewardConfig::default(), 5, &mut rng).unwrap();
        let l = fx.graph.layout();
        let want = vec![
            Edge::new(l.inverse(fx.president_of), fx.macron),
            Edge::new(fx.lives_in, fx.paris),
            Edge::new(l.no_op(), fx.paris),
        ];
        for t in &trajs {
            assert_eq!(t.actions(), want);
            assert_eq!(t.reward, 10.0);
        }
    }

    #[test]
    fn episodes_keep_length_after_abstaining() {
        let fx = fixtures::capital_example();
        let mut params = tiny_policy(&fx.graph, 1);
        // Make NO_ANSWER overwhelmingly attractive.
        let id = params.params().id("relation_emb").unwrap();
        let na = fx.graph.layout().no_answer().index();
        let noop = fx.graph.layout().no_op().index();
        let ffnn_b = params.params().id("ffnn.b0").unwrap();
        params.params_mut().get_mut(ffnn_b).data_mut().iter_mut().for_each(|x| *x = 20.0);
        let w = params.params().id("ffnn.w0").unwrap();
        params.params_mut().get_mut(w).data_mut().iter_mut().for_each(|x| *x = 0.0);
        let emb = params.params_mut().get_mut(id);
        for j in 0..4 {
            emb.data_mut()[na * 4 + j] = 50.0;
            emb.data_mut()[noop * 4 + j] = 10.0;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let trajs = rollout(&fx.graph, &params, &fx.query, &EnvConfig::default(), &RewardConfig::default(), 3, &mut rng).unwrap();
        for t in trajs {
            assert_eq!(t.steps.len(), 3);
            assert_eq!(t.terminal, fx.graph.sink());
            assert_eq!(t.reward, 0.0);
        }
    }

    #[test]
    fn replayed_log_probs_match_rollout() {
        let fx = fixtures::capital_example();
        let params = tiny_policy(&fx.graph, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let trajs = rollout(&fx.graph, &params, &fx.query, &EnvConfig::default(), &RewardConfig::default(), 6, &mut rng).unwrap();
        let rows: Vec<Replay<'_>> = trajs
            .iter()
            .map(|t| Replay {
                e_q: t.query.e_q,
                r_q: t.query.r_q,
                steps: t.steps.iter().map(|s| (s.candidates.as_slice(), s.chosen)).collect(),
            })
            .collect();
        let mut tape = Tape::new(params.params());
        let lps = replay(&params, &mut tape, &rows, fx.graph.layout().start()).unwrap();
        for (t, row) in trajs.iter().zip(&lps) {
            for (s, &lp) in t.steps.iter().zip(row) {
                assert_eq!(tape.value(lp)[s.chosen], s.log_prob);
            }
        }
    }

    #[test]
    fn empty_supervised_batch_is_an_error() {
        let fx = fixtures::capital_example();
        let mut params = tiny_policy(&fx.graph, 0);
        let mut adam = AdamState::new(params.params(), AdamConfig::default());
        assert!(matches!(
            supervised_update(&fx.graph, &mut params, &mut adam, &[], &EnvConfig::default()),
            Err(Error::EmptyBatch)
        ));
    }

    #[test]
    fn mined_capital_paths_include_the_two_hop_route() {
        let fx = fixtures::capital_example();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let ex = mine_dfs(&fx.graph, &fx.query, &EnvConfig::default(), Some(100), &mut rng);
        let l = fx.graph.layout();
        let want = vec![
            Edge::new(l.inverse(fx.president_of), fx.macron),
            Edge::new(fx.lives_in, fx.paris),
            Edge::new(l.no_op(), fx.paris),
        ];
        assert!(ex.iter().any(|e| e.actions == want));
    }

    #[test]
    fn unreachable_gold_gives_no_answer_target() {
        let g = KnowledgeGraph::from_triples(
            4,
            1,
            [
                Triple::new(EntityId(0), RelationId(0), EntityId(1)),
                Triple::new(EntityId(2), RelationId(0), EntityId(3)),
            ],
        )
        .unwrap();
        let q = Query::new(EntityId(0), RelationId(0), [EntityId(3)], Split::Test);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let plain = g.clone().augment(AugmentFlags { noanswer: false, ..AugmentFlags::ALL }).unwrap();
        assert!(mine_dfs(&plain, &q, &EnvConfig::default(), None, &mut rng).is_empty());
        let full = g.augment(AugmentFlags::ALL).unwrap();
        let ex = mine_dfs(&full, &q, &EnvConfig::default(), None, &mut rng);
        assert_eq!(ex.len(), 1);
        assert!(ex[0].is_no_answer(&full));
        assert_eq!(ex[0].actions.len(), 3);
    }

    #[test]
    fn dfs_examples_round_trip() {
        let fx = fixtures::capital_example();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let ex = mine_dfs(&fx.graph, &fx.query, &EnvConfig::default(), None, &mut rng);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("dfs.tsv");
        save_dfs_examples(&p, &fx.vocab, &ex).unwrap();
        let back = load_dfs_examples(&p, &fx.vocab, std::slice::from_ref(&fx.query)).unwrap();
        assert_eq!(back, ex);
    }

    #[test]
    fn query_streams_are_stable_and_distinct() {
        let a: u64 = query_rng(1, 2, 3).gen();
        let b: u64 = query_rng(1, 2, 3).gen();
        let c: u64 = query_rng(1, 2, 4).gen();
        let d: u64 = query_rng(1, 3, 3).gen();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }
}
