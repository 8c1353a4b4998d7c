//! Experiment configuration: a TOML file layered over built-in presets,
//! with command-line overrides applied last.
//!
//! ```toml
//! seed = 7
//! mode = "noanswer-rl"          # rl | supervised | supervised+rl | noanswer-rl | all
//!
//! [data]                        # either a dataset directory …
//! dir = "data/fb15k-237"
//! [data.synthetic]              # … or a generated benchmark
//! num_entities = 1000
//!
//! [model]
//! dim = 16
//! hidden = 32
//!
//! [env]
//! path_length = 3
//! max_out = 200
//!
//! [train]
//! batch_size = 64
//! rollouts = 10
//! lr = 0.001
//! rl_epochs = 80
//!
//! [reward]
//! r_pos = 10.0
//! r_neg = -0.1
//!
//! [eval]
//! beam_width = 20
//! ```

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::SyntheticSpec;
use crate::diffcore::AdamConfig;
use crate::episode::{BaselineKind, EnvConfig, RewardConfig, RewardMode};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    /// Binary-reward REINFORCE.
    #[serde(rename = "rl")]
    Rl,
    /// Supervised training on mined DFS paths only.
    #[serde(rename = "supervised")]
    Supervised,
    /// Supervised pretraining, then binary-reward REINFORCE.
    #[serde(rename = "supervised+rl")]
    SupervisedRl,
    /// Ternary-reward REINFORCE with the NO_ANSWER sink.
    #[serde(rename = "noanswer-rl")]
    NoAnswerRl,
    /// Supervised pretraining with no-answer labels, then ternary RL.
    #[serde(rename = "all")]
    All,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Rl => "rl",
            Mode::Supervised => "supervised",
            Mode::SupervisedRl => "supervised+rl",
            Mode::NoAnswerRl => "noanswer-rl",
            Mode::All => "all",
        }
    }

    pub fn reward_mode(self) -> RewardMode {
        match self {
            Mode::NoAnswerRl | Mode::All => RewardMode::Ternary,
            _ => RewardMode::Binary,
        }
    }

    pub fn has_supervised(self) -> bool {
        matches!(self, Mode::Supervised | Mode::SupervisedRl | Mode::All)
    }

    pub fn has_rl(self) -> bool {
        !matches!(self, Mode::Supervised)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rl" => Ok(Mode::Rl),
            "supervised" => Ok(Mode::Supervised),
            "supervised+rl" => Ok(Mode::SupervisedRl),
            "noanswer-rl" => Ok(Mode::NoAnswerRl),
            "all" => Ok(Mode::All),
            other => Err(Error::Config(format!("unknown mode `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Directory with `graph.tsv`, `train.tsv`, `valid.tsv`, `test.tsv` and
    /// optionally `entities.tsv` / `relations.tsv`. Takes precedence over
    /// `synthetic`.
    pub dir: Option<PathBuf>,
    pub synthetic: SyntheticSpec,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub dim: usize,
    pub hidden: usize,
    pub ffnn_layers: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            dim: 16,
            hidden: 32,
            ffnn_layers: 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    /// Sampled rollouts per query and batch.
    pub rollouts: usize,
    pub lr: f64,
    pub rl_epochs: usize,
    pub supervised_epochs: usize,
    /// Evaluate on the validation split every this many epochs (and after
    /// the last epoch of each phase).
    pub eval_every: usize,
    pub entropy_weight: f64,
    /// Multiplicative decay of the entropy weight per RL epoch.
    pub entropy_decay: f64,
    pub baseline: BaselineKind,
    pub baseline_decay: f64,
    /// DFS paths mined per training query (`None` for no limit).
    pub max_paths: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 64,
            rollouts: 10,
            lr: 1e-3,
            rl_epochs: 80,
            supervised_epochs: 20,
            eval_every: 10,
            entropy_weight: 0.05,
            entropy_decay: 0.98,
            baseline: BaselineKind::Ema,
            baseline_decay: 0.95,
            max_paths: Some(100),
        }
    }
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            ..AdamConfig::default()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardSection {
    pub r_pos: f64,
    pub r_neg: f64,
    /// Whether the graph gets the NO_ANSWER sink. Defaults to on for the
    /// ternary modes and off for the binary ones; binary modes only get it
    /// when this is set explicitly.
    pub noanswer: Option<bool>,
}

impl Default for RewardSection {
    fn default() -> Self {
        Self {
            r_pos: 10.0,
            r_neg: -0.1,
            noanswer: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub beam_width: usize,
    /// Rank gold answers with other known answers filtered out.
    pub filtered: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            beam_width: 20,
            filtered: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    RPos,
    RNeg,
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "r_pos" => Ok(SweepAxis::RPos),
            "r_neg" => Ok(SweepAxis::RNeg),
            other => Err(Error::Config(format!("unknown sweep axis `{other}`"))),
        }
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepAxis::RPos => "r_pos",
            SweepAxis::RNeg => "r_neg",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            axis: SweepAxis::RPos,
            values: vec![0.625, 1.25, 2.5, 5.0, 10.0, 15.0],
        }
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::Config("sweep needs at least one value".into()));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("sweep values must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub mode: Mode,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub env: EnvConfig,
    pub train: TrainConfig,
    pub reward: RewardSection,
    pub eval: EvalConfig,
    pub sweep: SweepSpec,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            mode: Mode::NoAnswerRl,
            data: DataConfig::default(),
            model: ModelConfig::default(),
            env: EnvConfig::default(),
            train: TrainConfig::default(),
            reward: RewardSection::default(),
            eval: EvalConfig::default(),
            sweep: SweepSpec::default(),
        }
    }
}

impl ExperimentConfig {
    /// Full-size settings: d = 100, H = 200, batches of 256 queries with 20
    /// rollouts each, beam width 100.
    pub fn paper_scale() -> Self {
        let mut c = Self::default();
        c.model.dim = 100;
        c.model.hidden = 200;
        c.train.batch_size = 256;
        c.train.rollouts = 20;
        c.eval.beam_width = 100;
        c
    }

    /// Layers TOML text over `base`; keys absent from the text keep the
    /// base values.
    pub fn from_toml_over(base: &Self, text: &str) -> Result<Self> {
        let overlay: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let mut merged = toml::Table::try_from(base).map_err(|e| Error::Config(e.to_string()))?;
        merge_tables(&mut merged, overlay);
        let cfg: Self = merged.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    /// Resolves presets and an optional config file (flags are applied by
    /// the caller afterwards).
    pub fn resolve(file: Option<&Path>, paper_scale: bool) -> Result<Self> {
        let base = if paper_scale { Self::paper_scale() } else { Self::default() };
        match file {
            None => Ok(base),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                Self::from_toml_over(&base, &text)
            }
        }
    }

    /// Applies a `section.key=value` override; the value is read as a TOML
    /// literal and falls back to a plain string.
    pub fn set(&self, assignment: &str) -> Result<Self> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{assignment}` is not key=value")))?;
        let value: toml::Value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(raw.to_string()));
        let mut overlay = toml::Table::new();
        let parts: Vec<&str> = key.trim().split('.').collect();
        let mut cursor = &mut overlay;
        for part in &parts[..parts.len() - 1] {
            cursor = cursor
                .entry(part.to_string())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()))
                .as_table_mut()
                .expect("freshly inserted table");
        }
        cursor.insert(parts[parts.len() - 1].to_string(), value);
        let mut merged = toml::Table::try_from(self).map_err(|e| Error::Config(e.to_string()))?;
        merge_tables(&mut merged, overlay);
        merged.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Whether the graph is augmented with the NO_ANSWER sink.
    pub fn uses_noanswer(&self) -> bool {
        self.reward
            .noanswer
            .unwrap_or(self.mode.reward_mode() == RewardMode::Ternary)
    }

    pub fn reward_config(&self) -> RewardConfig {
        match self.mode.reward_mode() {
            RewardMode::Binary => RewardConfig::binary(),
            RewardMode::Ternary => RewardConfig::ternary(self.reward.r_pos, self.reward.r_neg),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.env.path_length == 0 {
            return bad("env.path_length must be at least 1");
        }
        if self.env.max_out == 0 {
            return bad("env.max_out must be at least 1");
        }
        if self.eval.beam_width == 0 {
            return bad("eval.beam_width must be at least 1");
        }
        if self.model.dim == 0 || self.model.hidden == 0 || self.model.ffnn_layers == 0 {
            return bad("model sizes must be positive");
        }
        if self.train.batch_size == 0 || self.train.rollouts == 0 {
            return bad("train.batch_size and train.rollouts must be positive");
        }
        if !(self.train.lr > 0.0) {
            return bad("train.lr must be positive");
        }
        if self.train.eval_every == 0 {
            return bad("train.eval_every must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.train.baseline_decay) {
            return bad("train.baseline_decay must lie in [0, 1]");
        }
        if self.train.entropy_weight < 0.0 || self.train.entropy_decay < 0.0 {
            return bad("entropy settings must be non-negative");
        }
        if self.train.max_paths == Some(0) {
            return bad("train.max_paths must be at least 1 when set");
        }
        if self.mode.has_supervised() && self.train.supervised_epochs == 0 {
            return bad("this mode needs train.supervised_epochs > 0");
        }
        if self.mode.has_rl() && self.train.rl_epochs == 0 {
            return bad("this mode needs train.rl_epochs > 0");
        }
        if self.mode.reward_mode() == RewardMode::Ternary && self.reward.noanswer == Some(false) {
            return bad("ternary modes need the NO_ANSWER sink");
        }
        self.reward_config().validate()?;
        if self.data.dir.is_none() {
            self.data.synthetic.validate()?;
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form of the resolved config.
    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

fn merge_tables(base: &mut toml::Table, overlay: toml::Table) {
    for (k, v) in overlay {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge_tables(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}
