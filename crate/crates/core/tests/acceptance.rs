//! Acceptance suite: prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails. Criteria 5 to 7 train full agents on
//! the thousand-entity synthetic benchmark and take tens of minutes.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

use common::grad::{op_error, primitives, reinforce_error, supervised_error, SEEDS, TOLERANCE};
use common::oracles::{check_beam_case, check_dfs_case, dfs_cases};
use kgqa::dataset::Split;
use kgqa::harness::commands::{CHECKPOINT_FILE, REPORT_FILE};
use kgqa::harness::train::Phase;
use kgqa::harness::{cmd_sweep, cmd_train, evaluate_split, prepare, train, ExperimentConfig, Mode, Prepared, TrainOutcome};
use kgqa::inference::{qa_score, EvalReport};
use tempfile::tempdir;

/// Training seeds of the multi-seed criteria.
const TRAIN_SEEDS: [u64; 5] = [1, 2, 3, 4, 5];
/// Positive reward of the ternary agent: the smallest value of the sweep
/// grid at which training from scratch escapes the all-abstain state on
/// most seeds. Smaller rewards make the agent more conservative.
const TERNARY_R_POS: f64 = 2.5;
/// Seed of the reward sweep.
const SWEEP_SEED: u64 = 1;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

/// (precision, answer rate, QA Score) rows of both results tables.
const TABLE_ROWS: [(f64, f64, f64); 14] = [
    (0.217, 1.0, 0.357),
    (0.329, 1.0, 0.495),
    (0.2475, 1.0, 0.3968),
    (0.2474, 1.0, 0.3967),
    (0.2736, 1.0, 0.4296),
    (0.4011, 0.5847, 0.4758),
    (0.4835, 0.5663, 0.5216),
    (0.1790, 1.0, 0.3036),
    (0.1915, 1.0, 0.3214),
    (0.1677, 1.0, 0.2872),
    (0.1471, 1.0, 0.2565),
    (0.1937, 1.0, 0.3245),
    (0.3892, 0.4019, 0.3955),
    (0.3454, 0.5401, 0.4213),
];

fn metric_arithmetic() -> Verdict {
    let worst = TABLE_ROWS
        .iter()
        .map(|&(p, a, qa)| (qa_score(p, a) - qa).abs())
        .fold(0.0f64, f64::max);
    verdict(worst <= 5e-4, format!("{} rows, max |error| {worst:.2e}", TABLE_ROWS.len()))
}

fn gradient_correctness() -> Verdict {
    let mut worst = (0.0f64, String::new());
    let mut note = |err: f64, what: String| {
        if err > worst.0 {
            worst = (err, what);
        }
    };
    let ops = primitives();
    for (name, shapes, build) in &ops {
        for seed in SEEDS {
            note(op_error(shapes, *build, seed), format!("{name}, seed {seed}"));
        }
    }
    let mut vanishing = false;
    for seed in SEEDS {
        let (err, largest) = reinforce_error(seed);
        vanishing |= largest < 1e-3;
        note(err, format!("REINFORCE loss, seed {seed}"));
        note(supervised_error(seed), format!("supervised loss, seed {seed}"));
    }
    verdict(
        worst.0 < TOLERANCE && !vanishing,
        format!("{} primitives and 2 losses x 5 seeds, max relative error {:.2e} ({})", ops.len(), worst.0, worst.1),
    )
}

fn dfs_oracle() -> Verdict {
    let mut unreachable = 0;
    for (i, case) in dfs_cases().iter().enumerate() {
        for t_max in 1..=3 {
            match check_dfs_case(case, t_max, i as u64) {
                Ok(u) => unreachable += u as usize,
                Err(e) => return verdict(false, format!("graph {i}: {e}")),
            }
        }
    }
    verdict(unreachable > 0, format!("20 graphs x T=1..3 identical, {unreachable} unreachable checks"))
}

fn beam_exactness() -> Verdict {
    let mut answered = 0;
    for seed in 0..100 {
        match check_beam_case(seed) {
            Ok(a) => answered += a as usize,
            Err(e) => return verdict(false, format!("policy {seed}: {e}")),
        }
    }
    verdict(true, format!("100 policies match enumeration ({answered} answered, {} abstained)", 100 - answered))
}

fn benchmark(mode: Mode, seed: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.mode = mode;
    cfg.seed = seed;
    cfg
}

fn run(cfg: &ExperimentConfig, data: &Prepared) -> (TrainOutcome, EvalReport) {
    let outcome = train(cfg, data, None, &mut |_| {}).unwrap();
    let (test, _) = evaluate_split(cfg, data, &outcome.params, Split::Test).unwrap();
    (outcome, test)
}

fn ternary_reward() -> Verdict {
    let mut passed = 0;
    let mut rows = Vec::new();
    for seed in TRAIN_SEEDS {
        let binary_cfg = benchmark(Mode::Rl, seed);
        let mut ternary_cfg = benchmark(Mode::NoAnswerRl, seed);
        ternary_cfg.reward.r_pos = TERNARY_R_POS;
        let (_, b) = run(&binary_cfg, &prepare(&binary_cfg).unwrap());
        let (_, t) = run(&ternary_cfg, &prepare(&ternary_cfg).unwrap());
        let ok = t.precision >= b.precision + 0.10 && t.qa_score > b.qa_score && t.answer_rate < 1.0;
        passed += ok as usize;
        rows.push(format!(
            "seed {seed}: P {:.3}/{:.3} QA {:.3}/{:.3} AR {:.3}{}",
            t.precision,
            b.precision,
            t.qa_score,
            b.qa_score,
            t.answer_rate,
            if ok { "" } else { " (miss)" }
        ));
    }
    verdict(passed >= 4, format!("{passed}/5 seeds, ternary/binary: {}", rows.join("; ")))
}

/// First validation record at or above `threshold`, as (reinforcement
/// learning epochs, total epochs). A model that qualifies during
/// pretraining needed no RL epochs.
fn epochs_to(outcome: &TrainOutcome, threshold: f64) -> Option<(usize, usize)> {
    outcome.history.iter().find(|h| h.valid.qa_score >= threshold).map(|h| {
        let rl = if h.phase == Phase::Rl { h.epoch } else { 0 };
        (rl, h.total_epochs)
    })
}

fn pretraining_benefit() -> Verdict {
    let mut passed = 0;
    let mut rows = Vec::new();
    for seed in TRAIN_SEEDS {
        let mut rl_cfg = benchmark(Mode::Rl, seed);
        rl_cfg.train.eval_every = 5;
        let mut sup_cfg = benchmark(Mode::SupervisedRl, seed);
        sup_cfg.train.eval_every = 5;
        let (rl, rl_test) = run(&rl_cfg, &prepare(&rl_cfg).unwrap());
        let (sup, sup_test) = run(&sup_cfg, &prepare(&sup_cfg).unwrap());
        // The threshold is 95% of the best validation QA Score RL alone
        // reaches. Both agents are compared on RL epochs; the far cheaper
        // pretraining epochs are reported alongside.
        let threshold = 0.95 * rl.best.valid.qa_score;
        let (rl_epochs, _) = epochs_to(&rl, threshold).expect("RL reaches its own best");
        let sup_epochs = epochs_to(&sup, threshold);
        let faster = sup_epochs.is_some_and(|(e, _)| 2 * e <= rl_epochs);
        let better = sup_test.qa_score > rl_test.qa_score;
        let ok = faster || better;
        passed += ok as usize;
        rows.push(format!(
            "seed {seed}: RL epochs to valid QA {threshold:.3} {}/{rl_epochs}, test QA {:.3}/{:.3}{}",
            sup_epochs.map_or("never".to_string(), |(e, total)| format!("{e} (+{} pretraining)", total - e)),
            sup_test.qa_score,
            rl_test.qa_score,
            if ok { "" } else { " (miss)" }
        ));
    }
    verdict(passed >= 4, format!("{passed}/5 seeds, supervised+RL/RL: {}", rows.join("; ")))
}

fn sweep_shape() -> Verdict {
    let cfg = benchmark(Mode::NoAnswerRl, SWEEP_SEED);
    let dir = tempdir().unwrap();
    let points = cmd_sweep(&cfg, dir.path()).unwrap();
    let rates: Vec<f64> = points.iter().map(|p| p.test.answer_rate).collect();
    let drops: Vec<f64> = rates.windows(2).map(|w| w[0] - w[1]).filter(|&d| d > 0.0).collect();
    let monotone = drops.is_empty() || (drops.len() == 1 && drops[0] <= 0.03);
    let peak = points
        .iter()
        .fold(&points[0], |best, p| if p.test.precision > best.test.precision { p } else { best });
    let table: Vec<String> = points
        .iter()
        .map(|p| format!("{}: P {:.3} AR {:.3} QA {:.3}", p.value, p.test.precision, p.test.answer_rate, p.test.qa_score))
        .collect();
    verdict(
        monotone && peak.value <= 2.5,
        format!(
            "answer rate {}, precision peaks at r_pos {} | {}",
            if monotone { "non-decreasing" } else { "not monotone" },
            peak.value,
            table.join("; ")
        ),
    )
}

fn determinism() -> Verdict {
    let mut cfg = ExperimentConfig::default();
    cfg.mode = Mode::All;
    cfg.train.supervised_epochs = 3;
    cfg.train.rl_epochs = 3;
    cfg.train.eval_every = 1;
    let (a, b) = (tempdir().unwrap(), tempdir().unwrap());
    cmd_train(&cfg, a.path()).unwrap();
    cmd_train(&cfg, b.path()).unwrap();
    let same = |f: &str| std::fs::read(a.path().join(f)).unwrap() == std::fs::read(b.path().join(f)).unwrap();
    let (ckpt, report) = (same(CHECKPOINT_FILE), same(REPORT_FILE));
    verdict(ckpt && report, format!("checkpoint identical: {ckpt}, report identical: {report}"))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Verdict); 8] = [
        ("1 metric arithmetic", metric_arithmetic),
        ("2 gradient correctness", gradient_correctness),
        ("3 DFS oracle equivalence", dfs_oracle),
        ("4 beam exactness", beam_exactness),
        ("5 ternary reward behavior", ternary_reward),
        ("6 pretraining benefit", pretraining_benefit),
        ("7 reward sweep shape", sweep_shape),
        ("8 determinism", determinism),
    ];
    let only: Option<Vec<String>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').map(|x| x.trim().to_string()).collect());
    let mut failed = 0;
    for (name, check) in criteria {
        let number = name.split(' ').next().unwrap();
        if only.as_ref().is_some_and(|o| !o.iter().any(|x| x == number)) {
            continue;
        }
        let start = Instant::now();
        let v = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            verdict(false, format!("panicked: {msg}"))
        });
        failed += !v.pass as usize;
        println!(
            "{} criterion {name} ({:.1}s): {}",
            if v.pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64(),
            v.detail
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
