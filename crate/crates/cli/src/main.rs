//! `kgqa`: train, evaluate and sweep path-walking question-answering
//! agents, mine supervised paths, and generate synthetic benchmarks.

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use kgqa::dataset::Split;
use kgqa::harness::commands::{self, default_out_dir};
use kgqa::harness::ExperimentConfig;

#[derive(Parser)]
#[command(name = "kgqa", version, about = "Question answering over knowledge graphs with agents that may decline to answer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML experiment config layered over the defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for all outputs of the command.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Start from the full-size preset instead of the desk-scale one.
    #[arg(long)]
    paper_scale: bool,
    /// Config override as `section.key=value` (repeatable, applied last).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl Common {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::resolve(self.config.as_deref(), self.paper_scale)?;
        for o in &self.overrides {
            cfg = cfg.set(o).with_context(|| format!("applying --set {o}"))?;
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        Ok(cfg)
    }

    fn out_dir(&self, command: &str, cfg: &ExperimentConfig) -> PathBuf {
        self.out_dir.clone().unwrap_or_else(|| default_out_dir(command, cfg))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train the configured mode, keep the best validation model and
    /// report test metrics.
    Train(Common),
    /// Evaluate a trained checkpoint on a split.
    Eval {
        /// Checkpoint written by `train`.
        #[arg(long)]
        checkpoint: PathBuf,
        /// train, valid (or dev) or test.
        #[arg(long, default_value = "test")]
        split: Split,
        /// Directory for report.json and verdicts.tsv.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Train one model per reward value and write sweep.csv.
    Sweep(Common),
    /// Mine DFS paths for the training split.
    Mine(Common),
    /// Write the configured synthetic benchmark as a dataset directory.
    GenSynthetic(Common),
    /// Print the fully resolved config as TOML.
    ShowConfig(Common),
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Train(c) => {
            let cfg = c.config()?;
            let dir = c.out_dir("train", &cfg);
            let run = commands::cmd_train(&cfg, &dir)?;
            println!("{}", serde_json::to_string_pretty(&run.test)?);
            log::info!("outputs in {}", dir.display());
        }
        Command::Eval {
            checkpoint,
            split,
            out_dir,
        } => {
            let dir = out_dir.unwrap_or_else(|| {
                checkpoint
                    .parent()
                    .map(|p| p.join(format!("eval-{split}")))
                    .unwrap_or_else(|| PathBuf::from(format!("eval-{split}")))
            });
            let report = commands::cmd_eval(&checkpoint, split, &dir)?;
            println!("{}", serde_json::to_string_pretty(&report["metrics"])?);
            log::info!("outputs in {}", dir.display());
        }
        Command::Sweep(c) => {
            let cfg = c.config()?;
            let dir = c.out_dir("sweep", &cfg);
            let points = commands::cmd_sweep(&cfg, &dir)?;
            print!("{}", commands::sweep_csv(&points));
            log::info!("outputs in {}", dir.display());
        }
        Command::Mine(c) => {
            let cfg = c.config()?;
            let dir = c.out_dir("mine", &cfg);
            let examples = commands::cmd_mine(&cfg, &dir)?;
            log::info!("{} paths written to {}", examples.len(), dir.join(commands::DFS_FILE).display());
        }
        Command::GenSynthetic(c) => {
            let cfg = c.config()?;
            let dir = c.out_dir("synthetic", &cfg);
            let summary = commands::cmd_gen_synthetic(&cfg, &dir)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
        Command::ShowConfig(c) => {
            print!("{}", c.config()?.to_toml()?);
        }
    }
    Ok(())
}
