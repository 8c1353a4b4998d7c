//! Policy network: shared entity/relation embeddings, a single-layer
//! history LSTM over `[r_prev; e_prev]`, and a feed-forward map of
//! `[h_t; e_t; r_q]` to a `2d` query vector that is scored by dot product
//! against every candidate action `[r; e]`, followed by a masked softmax.
//!
//! All functions are batched over rows so that many episodes share one
//! tape; [`step_history`] and [`action_logits`] are the single-episode
//! forms.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diffcore::{ParamId, ParamSet, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::kg_store::{Edge, EntityId, RelationId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyConfig {
    /// Rows of the entity table (dataset entities plus the sink).
    pub entity_slots: usize,
    /// Rows of the relation table (the full augmented id space).
    pub relation_slots: usize,
    pub dim: usize,
    pub hidden: usize,
    /// Number of affine+tanh layers in the scorer; at least 1.
    pub ffnn_layers: usize,
}

impl PolicyConfig {
    fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.hidden == 0 || self.ffnn_layers == 0 {
            return Err(Error::Config(format!(
                "policy dimensions must be positive: {self:?}"
            )));
        }
        Ok(())
    }
}

const GATES: [&str; 4] = ["i", "f", "o", "g"];

#[derive(Clone, Debug, PartialEq)]
struct PolicyIds {
    entity_emb: ParamId,
    relation_emb: ParamId,
    lstm_w: [ParamId; 4],
    lstm_b: [ParamId; 4],
    ffnn_w: Vec<ParamId>,
    ffnn_b: Vec<ParamId>,
}

/// Trainable policy parameters with their layout.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyParams {
    config: PolicyConfig,
    params: ParamSet,
    ids: PolicyIds,
}

fn expected_shapes(cfg: &PolicyConfig) -> Vec<(String, [usize; 2])> {
    let (d, h) = (cfg.dim, cfg.hidden);
    let mut out = vec![
        ("entity_emb".to_string(), [cfg.entity_slots, d]),
        ("relation_emb".to_string(), [cfg.relation_slots, d]),
    ];
    for g in GATES {
        out.push((format!("lstm.w_{g}"), [2 * d + h, h]));
        out.push((format!("lstm.b_{g}"), [1, h]));
    }
    for layer in 0..cfg.ffnn_layers {
        let fan_in = if layer == 0 { h + 2 * d } else { 2 * d };
        out.push((format!("ffnn.w{layer}"), [fan_in, 2 * d]));
        out.push((format!("ffnn.b{layer}"), [1, 2 * d]));
    }
    out
}

impl PolicyParams {
    /// Glorot-uniform weights and embeddings, zero biases except the LSTM
    /// forget gate, which starts at 1.
    pub fn init(config: PolicyConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        for (name, [rows, cols]) in expected_shapes(&config) {
            let data = if name.contains(".b") {
                let fill = if name == "lstm.b_f" { 1.0 } else { 0.0 };
                vec![fill; rows * cols]
            } else {
                let s = (6.0 / (rows + cols) as f64).sqrt();
                (0..rows * cols).map(|_| rng.gen_range(-s..s)).collect()
            };
            params.insert(name, Tensor::matrix(rows, cols, data)?)?;
        }
        Self::from_params(config, params)
    }

    /// Wraps an existing parameter set, checking names and shapes.
    pub fn from_params(config: PolicyConfig, params: ParamSet) -> Result<Self> {
        config.validate()?;
        for (name, shape) in expected_shapes(&config) {
            let t = params
                .by_name(&name)
                .ok_or_else(|| Error::Checkpoint(format!("missing parameter `{name}`")))?;
            if t.shape() != shape {
                return Err(Error::Shape {
                    op: "policy parameter",
                    left: t.shape().to_vec(),
                    right: shape.to_vec(),
                });
            }
        }
        let id = |n: &str| params.id(n).expect("checked above");
        let ids = PolicyIds {
            entity_emb: id("entity_emb"),
            relation_emb: id("relation_emb"),
            lstm_w: GATES.map(|g| id(&format!("lstm.w_{g}"))),
            lstm_b: GATES.map(|g| id(&format!("lstm.b_{g}"))),
            ffnn_w: (0..config.ffnn_layers).map(|l| id(&format!("ffnn.w{l}"))).collect(),
            ffnn_b: (0..config.ffnn_layers).map(|l| id(&format!("ffnn.b{l}"))).collect(),
        };
        Ok(Self { config, params, ids })
    }

    pub fn config(&self) -> &PolicyConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn into_params(self) -> ParamSet {
        self.params
    }

    pub fn all_finite(&self) -> bool {
        self.params.iter().all(|(_, _, t)| t.all_finite())
    }

    /// One LSTM update for every row, on input `[r_prev; e_prev]`.
    pub fn lstm_step(
        &self,
        tape: &mut Tape<'_>,
        state: TapeState,
        prev_relations: &[usize],
        prev_entities: &[usize],
    ) -> Result<TapeState> {
        let n = prev_relations.len();
        let rel_table = tape.param(self.ids.relation_emb)?;
        let ent_table = tape.param(self.ids.entity_emb)?;
        let r = tape.embedding_lookup(rel_table, prev_relations)?;
        let e = tape.embedding_lookup(ent_table, prev_entities)?;
        let input = tape.concat(&[r, e, state.h])?;
        let mut gates = [input; 4];
        for (k, gate) in gates.iter_mut().enumerate() {
            let w = tape.param(self.ids.lstm_w[k])?;
            let b = tape.param(self.ids.lstm_b[k])?;
            let b = tape.repeat_rows(b, n)?;
            let pre = tape.matmul(input, w)?;
            let pre = tape.add(pre, b)?;
            *gate = if k == 3 { tape.tanh(pre) } else { tape.sigmoid(pre) };
        }
        let [i, f, o, g] = gates;
        let keep = tape.mul(f, state.c)?;
        let write = tape.mul(i, g)?;
        let c = tape.add(keep, write)?;
        let squashed = tape.tanh(c);
        let h = tape.mul(o, squashed)?;
        Ok(TapeState { h, c })
    }

    /// `f(h_t, e_t, r_q)` for every row: an `N × 2d` matrix.
    pub fn query_vectors(
        &self,
        tape: &mut Tape<'_>,
        h: Var,
        current: &[usize],
        query_relations: &[usize],
    ) -> Result<Var> {
        let n = current.len();
        let rel_table = tape.param(self.ids.relation_emb)?;
        let ent_table = tape.param(self.ids.entity_emb)?;
        let e = tape.embedding_lookup(ent_table, current)?;
        let rq = tape.embedding_lookup(rel_table, query_relations)?;
        let mut x = tape.concat(&[h, e, rq])?;
        for (&w, &b) in self.ids.ffnn_w.iter().zip(&self.ids.ffnn_b) {
            let w = tape.param(w)?;
            let b = tape.param(b)?;
            let b = tape.repeat_rows(b, n)?;
            let pre = tape.matmul(x, w)?;
            let pre = tape.add(pre, b)?;
            x = tape.tanh(pre);
        }
        Ok(x)
    }

    /// Log-probabilities (`1 × actions.len()`) of row `row` of `queries`
    /// over its candidate actions; entries at or past `valid` are masked.
    pub fn score_actions(
        &self,
        tape: &mut Tape<'_>,
        queries: Var,
        row: usize,
        actions: &[Edge],
        valid: usize,
    ) -> Result<Var> {
        if valid == 0 || actions.is_empty() {
            return Err(Error::EmptyActionSet);
        }
        let rel_table = tape.param(self.ids.relation_emb)?;
        let ent_table = tape.param(self.ids.entity_emb)?;
        let rels: Vec<usize> = actions.iter().map(|a| a.relation.index()).collect();
        let ents: Vec<usize> = actions.iter().map(|a| a.tail.index()).collect();
        let r = tape.embedding_lookup(rel_table, &rels)?;
        let e = tape.embedding_lookup(ent_table, &ents)?;
        let a = tape.concat(&[r, e])?;
        let q = tape.embedding_lookup(queries, &[row])?;
        let scores = tape.matmul_nt(q, a)?;
        tape.log_softmax(scores, valid)
    }

    /// Forward-only batched step used by sampling and beam search: update
    /// each row's history with its previous action, then return the new
    /// state and per-row log-probabilities over `actions[row]`.
    pub fn forward_step(
        &self,
        state: &BatchState,
        prev: &[Edge],
        query_relations: &[usize],
        actions: &[Vec<Edge>],
    ) -> Result<(BatchState, Vec<Vec<f64>>)> {
        let n = prev.len();
        let hsz = self.config.hidden;
        if state.rows() != n || actions.len() != n || query_relations.len() != n {
            return Err(Error::Shape {
                op: "forward_step",
                left: vec![state.rows(), hsz],
                right: vec![n, actions.len(), query_relations.len()],
            });
        }
        let mut tape = Tape::new(&self.params);
        let h = tape.constant_matrix(n, hsz, state.h.clone())?;
        let c = tape.constant_matrix(n, hsz, state.c.clone())?;
        let rels: Vec<usize> = prev.iter().map(|a| a.relation.index()).collect();
        let ents: Vec<usize> = prev.iter().map(|a| a.tail.index()).collect();
        let next = self.lstm_step(&mut tape, TapeState { h, c }, &rels, &ents)?;
        let q = self.query_vectors(&mut tape, next.h, &ents, query_relations)?;
        let mut out = Vec::with_capacity(n);
        for (row, acts) in actions.iter().enumerate() {
            let lp = self.score_actions(&mut tape, q, row, acts, acts.len())?;
            out.push(tape.value(lp).to_vec());
        }
        let new_state = BatchState {
            hidden: hsz,
            h: tape.value(next.h).to_vec(),
            c: tape.value(next.c).to_vec(),
        };
        Ok((new_state, out))
    }
}

/// History state of a batch of rows living on a tape.
#[derive(Clone, Copy, Debug)]
pub struct TapeState {
    pub h: Var,
    pub c: Var,
}

impl TapeState {
    pub fn zeros(tape: &mut Tape<'_>, rows: usize, hidden: usize) -> Self {
        Self {
            h: tape.zeros(rows, hidden),
            c: tape.zeros(rows, hidden),
        }
    }
}

/// Plain-value history state of one episode (LSTM `h` and `c`).
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl PolicyState {
    pub fn zeros(hidden: usize) -> Self {
        Self {
            h: vec![0.0; hidden],
            c: vec![0.0; hidden],
        }
    }
}

/// Plain-value history states of several rows, row-major `N × H`.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchState {
    hidden: usize,
    h: Vec<f64>,
    c: Vec<f64>,
}

impl BatchState {
    pub fn zeros(rows: usize, hidden: usize) -> Self {
        Self {
            hidden,
            h: vec![0.0; rows * hidden],
            c: vec![0.0; rows * hidden],
        }
    }

    pub fn rows(&self) -> usize {
        if self.hidden == 0 {
            0
        } else {
            self.h.len() / self.hidden
        }
    }

    pub fn row(&self, i: usize) -> PolicyState {
        let s = i * self.hidden..(i + 1) * self.hidden;
        PolicyState {
            h: self.h[s.clone()].to_vec(),
            c: self.c[s].to_vec(),
        }
    }

    /// New batch made of the given rows, in order (repeats allowed).
    pub fn gather(&self, rows: &[usize]) -> Self {
        let mut h = Vec::with_capacity(rows.len() * self.hidden);
        let mut c = Vec::with_capacity(rows.len() * self.hidden);
        for &r in rows {
            h.extend_from_slice(&self.h[r * self.hidden..(r + 1) * self.hidden]);
            c.extend_from_slice(&self.c[r * self.hidden..(r + 1) * self.hidden]);
        }
        Self {
            hidden: self.hidden,
            h,
            c,
        }
    }

    pub fn from_rows(hidden: usize, rows: &[PolicyState]) -> Self {
        Self {
            hidden,
            h: rows.iter().flat_map(|s| s.h.iter().copied()).collect(),
            c: rows.iter().flat_map(|s| s.c.iter().copied()).collect(),
        }
    }
}

pub fn init_params(config: PolicyConfig, seed: u64) -> Result<PolicyParams> {
    PolicyParams::init(config, seed)
}

/// Single-episode LSTM update with the previous action `(r, e)`. At the
/// first step the previous action is `(START, e_q)`.
pub fn step_history(
    params: &PolicyParams,
    state: &PolicyState,
    prev_action: (RelationId, EntityId),
) -> Result<PolicyState> {
    let hsz = params.config.hidden;
    let mut tape = Tape::new(&params.params);
    let h = tape.constant_matrix(1, hsz, state.h.clone())?;
    let c = tape.constant_matrix(1, hsz, state.c.clone())?;
    let next = params.lstm_step(
        &mut tape,
        TapeState { h, c },
        &[prev_action.0.index()],
        &[prev_action.1.index()],
    )?;
    Ok(PolicyState {
        h: tape.value(next.h).to_vec(),
        c: tape.value(next.c).to_vec(),
    })
}

/// Log-probabilities of a padded action list at entity `current` for query
/// relation `query_relation`; slots at or after `valid_count` are masked.
pub fn action_logits(
    params: &PolicyParams,
    state: &PolicyState,
    current: EntityId,
    query_relation: RelationId,
    actions: &[Edge],
    valid_count: usize,
) -> Result<Vec<f64>> {
    if valid_count == 0 {
        return Err(Error::EmptyActionSet);
    }
    if valid_count > actions.len() {
        return Err(Error::Shape {
            op: "action_logits",
            left: vec![actions.len()],
            right: vec![valid_count],
        });
    }
    let hsz = params.config.hidden;
    let mut tape = Tape::new(&params.params);
    let h = tape.constant_matrix(1, hsz, state.h.clone())?;
    let q = params.query_vectors(&mut tape, h, &[current.index()], &[query_relation.index()])?;
    let lp = params.score_actions(&mut tape, q, 0, actions, valid_count)?;
    Ok(tape.value(lp).to_vec())
}
