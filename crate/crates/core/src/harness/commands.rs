//! The command-line operations. Each writes its artifacts into an output
//! directory and returns the JSON report it wrote, if any.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use crate::dataset::{generate_synthetic, split_counts, Split};
use crate::diffcore::{load_checkpoint, save_checkpoint, Metadata};
use crate::episode::{save_dfs_examples, DfsExample, RewardMode};
use crate::error::{Error, Result};
use crate::inference::{save_verdicts, EvalReport};
use crate::policy::PolicyParams;

use super::config::{ExperimentConfig, SweepAxis};
use super::data::{prepare, write_synthetic, Prepared};
use super::train::{evaluate_split, mine_all, train, TrainOutcome};

pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const REPORT_FILE: &str = "report.json";
pub const VERDICTS_FILE: &str = "verdicts.tsv";
pub const TRAIN_LOG_FILE: &str = "train_log.jsonl";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const DFS_FILE: &str = "dfs_train.tsv";

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_json(path: &Path, value: &Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn report_json(cfg: &ExperimentConfig, split: Split, metrics: &EvalReport, extra: Value) -> Result<Value> {
    let mut report = json!({
        "mode": cfg.mode.as_str(),
        "seed": cfg.seed,
        "config_digest": cfg.digest(),
        "config": serde_json::to_value(cfg)?,
        "split": split.as_str(),
        "metrics": metrics,
    });
    if let (Value::Object(r), Value::Object(e)) = (&mut report, extra) {
        r.extend(e);
    }
    Ok(report)
}

/// Result of [`cmd_train`].
#[derive(Clone, Debug)]
pub struct TrainRun {
    pub outcome: TrainOutcome,
    pub test: EvalReport,
    pub report: Value,
}

/// Trains the configured mode and writes `checkpoint.json` (best
/// validation model), `train_log.jsonl`, `report.json` (test metrics) and
/// `verdicts.tsv`.
pub fn cmd_train(cfg: &ExperimentConfig, out_dir: &Path) -> Result<TrainRun> {
    cfg.validate()?;
    let data = prepare(cfg)?;
    create_dir(out_dir)?;
    let log_path = out_dir.join(TRAIN_LOG_FILE);
    let mut log = BufWriter::new(File::create(&log_path).map_err(|e| Error::io(&log_path, e))?);
    let mut log_error = None;
    let outcome = train(cfg, &data, None, &mut |event| {
        if log_error.is_none() {
            if let Err(e) = writeln!(log, "{event}") {
                log_error = Some(e);
            }
        }
    })?;
    if let Some(e) = log_error {
        return Err(Error::io(&log_path, e));
    }
    log.flush().map_err(|e| Error::io(&log_path, e))?;

    let mut meta = Metadata::new();
    meta.insert("config".into(), serde_json::to_value(cfg)?);
    meta.insert("config_digest".into(), json!(cfg.digest()));
    meta.insert("mode".into(), json!(cfg.mode.as_str()));
    meta.insert("best".into(), serde_json::to_value(&outcome.best)?);
    save_checkpoint(&out_dir.join(CHECKPOINT_FILE), outcome.params.params(), &meta)?;

    let (test, verdicts) = evaluate_split(cfg, &data, &outcome.params, Split::Test)?;
    save_verdicts(&out_dir.join(VERDICTS_FILE), &data.vocab, &verdicts)?;
    let report = report_json(
        cfg,
        Split::Test,
        &test,
        json!({ "best_valid": outcome.best, "history": outcome.history }),
    )?;
    write_json(&out_dir.join(REPORT_FILE), &report)?;
    log::info!(
        "test: precision={:.4} answer_rate={:.4} qa={:.4} hits@1={:.4} mrr={:.4}",
        test.precision,
        test.answer_rate,
        test.qa_score,
        test.hits_at_1,
        test.mrr
    );
    Ok(TrainRun { outcome, test, report })
}

/// Loads a checkpoint written by [`cmd_train`] together with the config it
/// was trained under, and rebuilds the experiment data.
pub fn load_trained(checkpoint: &Path) -> Result<(ExperimentConfig, Prepared, PolicyParams)> {
    let (params, meta) = load_checkpoint(checkpoint)?;
    let cfg_value = meta
        .get("config")
        .ok_or_else(|| Error::Checkpoint("checkpoint metadata lacks the training config".into()))?;
    let cfg: ExperimentConfig = serde_json::from_value(cfg_value.clone())?;
    let data = prepare(&cfg)?;
    let params = PolicyParams::from_params(data.policy_config(&cfg), params)?;
    Ok((cfg, data, params))
}

/// Evaluates a checkpoint on one split; writes `report.json` and
/// `verdicts.tsv` into `out_dir`.
pub fn cmd_eval(checkpoint: &Path, split: Split, out_dir: &Path) -> Result<Value> {
    let (cfg, data, params) = load_trained(checkpoint)?;
    let (metrics, verdicts) = evaluate_split(&cfg, &data, &params, split)?;
    create_dir(out_dir)?;
    save_verdicts(&out_dir.join(VERDICTS_FILE), &data.vocab, &verdicts)?;
    let report = report_json(&cfg, split, &metrics, json!({}))?;
    write_json(&out_dir.join(REPORT_FILE), &report)?;
    Ok(report)
}

/// One row of a reward sweep.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepPoint {
    pub value: f64,
    pub test: EvalReport,
}

/// Applies one sweep value to a config.
pub fn with_sweep_value(cfg: &ExperimentConfig, axis: SweepAxis, value: f64) -> ExperimentConfig {
    let mut c = cfg.clone();
    match axis {
        SweepAxis::RPos => c.reward.r_pos = value,
        SweepAxis::RNeg => c.reward.r_neg = value,
    }
    c
}

fn sweep_dir_name(axis: SweepAxis, value: f64) -> String {
    format!("{axis}={value}")
}

/// Trains one model per sweep value (same seed), each in its own
/// subdirectory, and writes `sweep.csv` ordered by value.
pub fn cmd_sweep(cfg: &ExperimentConfig, out_dir: &Path) -> Result<Vec<SweepPoint>> {
    cfg.sweep.validate()?;
    if cfg.mode.reward_mode() != RewardMode::Ternary {
        return Err(Error::Config(format!(
            "reward sweeps need a ternary-reward mode, not `{}`",
            cfg.mode.as_str()
        )));
    }
    let mut values = cfg.sweep.values.clone();
    values.sort_by(f64::total_cmp);
    values.dedup();
    let axis = cfg.sweep.axis;
    // Validate every point up front so that a bad value fails before any
    // training starts.
    for &v in &values {
        with_sweep_value(cfg, axis, v).validate()?;
    }
    create_dir(out_dir)?;
    let mut points = Vec::with_capacity(values.len());
    for &v in &values {
        let point_cfg = with_sweep_value(cfg, axis, v);
        log::info!("sweep {axis} = {v}");
        let run = cmd_train(&point_cfg, &out_dir.join(sweep_dir_name(axis, v)))?;
        points.push(SweepPoint { value: v, test: run.test });
    }
    let path = out_dir.join(SWEEP_FILE);
    fs::write(&path, sweep_csv(&points)).map_err(|e| Error::io(&path, e))?;
    Ok(points)
}

pub fn sweep_csv(points: &[SweepPoint]) -> String {
    let mut out = String::from("value,precision,answer_rate,qa_score\n");
    for p in points {
        out.push_str(&format!(
            "{},{},{},{}\n",
            p.value, p.test.precision, p.test.answer_rate, p.test.qa_score
        ));
    }
    out
}

/// Mines DFS paths for the training split and writes `dfs_train.tsv`.
/// The graph always carries the NO_ANSWER sink here, so unreachable
/// queries get a no-answer line.
pub fn cmd_mine(cfg: &ExperimentConfig, out_dir: &Path) -> Result<Vec<DfsExample>> {
    let mut cfg = cfg.clone();
    cfg.reward.noanswer = Some(true);
    let data = prepare(&cfg)?;
    let mined = mine_all(&data.graph, &data.train, &cfg.env, cfg.train.max_paths, cfg.seed);
    let examples: Vec<DfsExample> = mined.into_iter().flatten().collect();
    create_dir(out_dir)?;
    save_dfs_examples(&out_dir.join(DFS_FILE), &data.vocab, &examples)?;
    Ok(examples)
}

/// Generates the configured synthetic benchmark into `out_dir` as a dataset
/// directory (usable through `data.dir`).
pub fn cmd_gen_synthetic(cfg: &ExperimentConfig, out_dir: &Path) -> Result<Value> {
    let ds = generate_synthetic(&cfg.data.synthetic)?;
    write_synthetic(&ds, out_dir)?;
    let counts: serde_json::Map<String, Value> = split_counts(&ds.queries)
        .into_iter()
        .map(|(s, n)| (s.as_str().to_string(), json!(n)))
        .collect();
    let summary = json!({
        "entities": ds.graph.num_entities(),
        "relations": ds.graph.num_relations(),
        "triples": ds.graph.triples().len(),
        "queries": counts,
        "unreachable": ds.unreachable.iter().filter(|&&u| u).count(),
        "spec": serde_json::to_value(&cfg.data.synthetic)?,
    });
    write_json(&out_dir.join("summary.json"), &summary)?;
    Ok(summary)
}

/// Default output directory for a command when none is given.
pub fn default_out_dir(command: &str, cfg: &ExperimentConfig) -> PathBuf {
    PathBuf::from("runs").join(format!("{command}-{}-seed{}", cfg.mode.as_str(), cfg.seed))
}
