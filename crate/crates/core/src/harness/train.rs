//! The training loop: optional supervised pretraining on mined DFS paths,
//! then REINFORCE, with periodic validation and best-QA-score selection.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::dataset::{Query, Split};
use crate::diffcore::AdamState;
use crate::episode::{
    mine_dfs, query_rng, reinforce_update, rollout_batch, supervised_update, Baseline, DfsExample, EnvConfig,
    UpdateStats,
};
use crate::error::Result;
use crate::inference::{aggregate_with, evaluate, known_answers, EvalReport, KnownAnswers, Verdict};
use crate::kg_store::KnowledgeGraph;
use crate::policy::PolicyParams;

use super::config::ExperimentConfig;
use super::data::Prepared;

/// Offsets separating the random streams of the two phases and of mining.
const RL_STREAM: u64 = 1 << 40;
const MINE_STREAM: u64 = 1 << 41;
const SHUFFLE_KEY: u64 = u64::MAX;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Supervised,
    Rl,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalRecord {
    pub phase: Phase,
    /// 1-based epoch within the phase.
    pub epoch: usize,
    /// Epochs completed across both phases.
    pub total_epochs: usize,
    pub valid: EvalReport,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters with the best validation QA score.
    pub params: PolicyParams,
    pub best: EvalRecord,
    pub history: Vec<EvalRecord>,
}

pub fn evaluate_split(
    cfg: &ExperimentConfig,
    data: &Prepared,
    params: &PolicyParams,
    split: Split,
) -> Result<(EvalReport, Vec<Verdict>)> {
    let verdicts = evaluate(&data.graph, params, data.split(split), &cfg.env, cfg.eval.beam_width)?;
    let known: Option<KnownAnswers> = cfg
        .eval
        .filtered
        .then(|| known_answers(data.train.iter().chain(&data.valid).chain(&data.test)));
    Ok((aggregate_with(&verdicts, known.as_ref()), verdicts))
}

/// Mines DFS targets for every query, each with its own random stream.
pub fn mine_all(
    g: &KnowledgeGraph,
    queries: &[Query],
    env: &EnvConfig,
    max_paths: Option<usize>,
    seed: u64,
) -> Vec<Vec<DfsExample>> {
    queries
        .par_iter()
        .map(|q| {
            let mut rng = query_rng(seed, MINE_STREAM, q.key());
            mine_dfs(g, q, env, max_paths, &mut rng)
        })
        .collect()
}

fn shuffled(n: usize, seed: u64, stream: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut query_rng(seed, stream, SHUFFLE_KEY));
    order
}

fn stats_event(phase: Phase, epoch: usize, batch: usize, s: &UpdateStats) -> Value {
    json!({
        "event": "batch",
        "phase": phase,
        "epoch": epoch,
        "batch": batch,
        "rows": s.rows,
        "loss": s.loss,
        "mean_reward": s.mean_reward,
        "baseline": s.mean_baseline,
        "entropy": s.entropy,
        "grad_norm": s.grad_norm,
    })
}

struct Selector {
    best: Option<(PolicyParams, EvalRecord)>,
    history: Vec<EvalRecord>,
}

impl Selector {
    fn offer(&mut self, params: &PolicyParams, record: EvalRecord) -> bool {
        let better = self
            .best
            .as_ref()
            .map_or(true, |(_, b)| record.valid.qa_score > b.valid.qa_score);
        self.history.push(record.clone());
        if better {
            self.best = Some((params.clone(), record));
        }
        better
    }
}

#[allow(clippy::too_many_arguments)]
fn validate(
    cfg: &ExperimentConfig,
    data: &Prepared,
    selector: &mut Selector,
    phase: Phase,
    epoch: usize,
    total: usize,
    params: &PolicyParams,
    on_event: &mut dyn FnMut(Value),
) -> Result<()> {
    let (report, _) = evaluate_split(cfg, data, params, Split::Valid)?;
    let record = EvalRecord {
        phase,
        epoch,
        total_epochs: total,
        valid: report,
    };
    let improved = selector.offer(params, record);
    log::info!(
        "{phase:?} epoch {epoch}: valid qa={:.4} precision={:.4} answer_rate={:.4} hits@1={:.4}{}",
        report.qa_score,
        report.precision,
        report.answer_rate,
        report.hits_at_1,
        if improved { " (best)" } else { "" }
    );
    on_event(json!({
        "event": "eval",
        "phase": phase,
        "epoch": epoch,
        "total_epochs": total,
        "split": "valid",
        "metrics": report,
        "best": improved,
    }));
    Ok(())
}

/// Runs the configured mode. `on_event` receives every log event (batch
/// statistics and validation results) in order.
pub fn train(
    cfg: &ExperimentConfig,
    data: &Prepared,
    init: Option<PolicyParams>,
    on_event: &mut dyn FnMut(Value),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let g = &data.graph;
    let env = cfg.env;
    let tc = cfg.train;
    let mut params = match init {
        Some(p) => p,
        None => PolicyParams::init(data.policy_config(cfg), cfg.seed)?,
    };
    let mut selector = Selector {
        best: None,
        history: Vec::new(),
    };
    let mut total_epochs = 0;
    if cfg.mode.has_supervised() {
        let mined = mine_all(g, &data.train, &env, tc.max_paths, cfg.seed);
        let usable: Vec<(&Query, &[DfsExample])> = data
            .train
            .iter()
            .zip(&mined)
            .filter(|(_, m)| !m.is_empty())
            .map(|(q, m)| (q, m.as_slice()))
            .collect();
        on_event(json!({
            "event": "mined",
            "queries": data.train.len(),
            "with_targets": usable.len(),
            "paths": mined.iter().map(Vec::len).sum::<usize>(),
        }));
        let mut adam = AdamState::new(params.params(), tc.adam());
        for epoch in 1..=tc.supervised_epochs {
            let stream = epoch as u64;
            for (b, idx) in shuffled(usable.len(), cfg.seed, stream).chunks(tc.batch_size).enumerate() {
                // One target path per query and epoch, drawn uniformly.
                let batch: Vec<DfsExample> = idx
                    .iter()
                    .map(|&i| {
                        let (q, paths) = usable[i];
                        let pick = query_rng(cfg.seed, stream, q.key()).gen_range(0..paths.len());
                        paths[pick].clone()
                    })
                    .collect();
                let stats = supervised_update(g, &mut params, &mut adam, &batch, &env)?;
                on_event(stats_event(Phase::Supervised, epoch, b, &stats));
            }
            total_epochs += 1;
            if epoch % tc.eval_every == 0 || epoch == tc.supervised_epochs {
                validate(cfg, data, &mut selector, Phase::Supervised, epoch, total_epochs, &params, on_event)?;
            }
        }
        // Reinforcement learning continues from the best pretrained model.
        params = selector.best.as_ref().expect("validated at least once").0.clone();
    }

    if cfg.mode.has_rl() {
        let rewards = cfg.reward_config();
        let start = g.layout().start();
        let mut adam = AdamState::new(params.params(), tc.adam());
        let mut baseline = Baseline::new(tc.baseline, tc.baseline_decay);
        for epoch in 1..=tc.rl_epochs {
            let stream = RL_STREAM + epoch as u64;
            let beta = tc.entropy_weight * tc.entropy_decay.powi(epoch as i32 - 1);
            let order = shuffled(data.train.len(), cfg.seed, stream);
            for (b, idx) in order.chunks(tc.batch_size).enumerate() {
                let queries: Vec<Query> = idx.iter().map(|&i| data.train[i].clone()).collect();
                let trajs = rollout_batch(g, &params, &queries, &env, &rewards, tc.rollouts, cfg.seed, stream)?;
                let stats = reinforce_update(&mut params, &mut adam, &trajs, &mut baseline, beta, start)?;
                on_event(stats_event(Phase::Rl, epoch, b, &stats));
            }
            total_epochs += 1;
            if epoch % tc.eval_every == 0 || epoch == tc.rl_epochs {
                validate(cfg, data, &mut selector, Phase::Rl, epoch, total_epochs, &params, on_event)?;
            }
        }
    }

    let (params, best) = selector.best.take().expect("validated at least once");
    Ok(TrainOutcome {
        params,
        best,
        history: selector.history,
    })
}
