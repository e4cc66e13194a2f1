//! Experiment configuration, config-file parsing, and stable fingerprints.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::env::LayoutName;
use crate::{Error, Result};

/// What the receiver is paired with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    /// Learned senders emit the messages.
    #[default]
    Communication,
    /// Single non-communicating Q-learner that sees the goal directly.
    QBaseline,
    /// Messages drawn uniformly at random; the receiver trains normally.
    RandomMessages,
}

impl RunMode {
    pub fn as_str(self) -> &'static str {
        match self {
            RunMode::Communication => "communication",
            RunMode::QBaseline => "q_baseline",
            RunMode::RandomMessages => "random_messages",
        }
    }
}

impl FromStr for RunMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "communication" => Ok(RunMode::Communication),
            "q_baseline" => Ok(RunMode::QBaseline),
            "random_messages" => Ok(RunMode::RandomMessages),
            other => Err(Error::Config(format!("unknown run mode {other:?}"))),
        }
    }
}

/// Full specification of one training run. `(config, seed)` determines
/// every recorded number.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub layout: String,
    /// Sender count M, 1..=5.
    pub senders: usize,
    /// Vocabulary size N per sender.
    pub vocab: usize,
    pub gamma: f64,
    pub epsilon_sender: f64,
    pub epsilon_receiver: f64,
    pub lr_sender: f64,
    pub lr_receiver: f64,
    pub hidden_width: usize,
    pub init_scale: f64,
    /// Receiver environment steps to train for.
    pub total_steps: u64,
    /// Metrics cadence in environment steps.
    pub metrics_every: u64,
    /// Sliding window (episodes) for the training-return series.
    pub window_episodes: usize,
    /// Greedy evaluation episodes at the end of training.
    pub eval_episodes: usize,
    pub seed: u64,
    pub mode: RunMode,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            layout: "empty_room".into(),
            senders: 1,
            vocab: 25,
            gamma: 0.8,
            epsilon_sender: 0.1,
            epsilon_receiver: 0.1,
            lr_sender: 1e-2,
            lr_receiver: 1e-2,
            hidden_width: 64,
            init_scale: 0.05,
            total_steps: 2_000_000,
            metrics_every: 10_000,
            window_episodes: 1_000,
            eval_episodes: 1_000,
            seed: 0,
            mode: RunMode::Communication,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.layout_name()?;
        if !(1..=5).contains(&self.senders) {
            return Err(Error::Config(format!(
                "senders must be 1..=5, got {}",
                self.senders
            )));
        }
        if self.vocab < 2 {
            return Err(Error::Config(format!(
                "vocab must be at least 2, got {}",
                self.vocab
            )));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Config(format!(
                "gamma must lie strictly in (0,1) so p_term = 1-gamma is a probability, got {}",
                self.gamma
            )));
        }
        for (name, v) in [
            ("epsilon_sender", self.epsilon_sender),
            ("epsilon_receiver", self.epsilon_receiver),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must lie in [0,1], got {v}")));
            }
        }
        for (name, v) in [("lr_sender", self.lr_sender), ("lr_receiver", self.lr_receiver)]
        {
            if v <= 0.0 {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.metrics_every == 0 {
            return Err(Error::Config("metrics_every must be positive".into()));
        }
        if self.window_episodes == 0 {
            return Err(Error::Config("window_episodes must be positive".into()));
        }
        Ok(())
    }

    pub fn layout_name(&self) -> Result<LayoutName> {
        self.layout.parse()
    }

    /// Per-step random termination probability.
    pub fn p_term(&self) -> f64 {
        1.0 - self.gamma
    }

    /// Channel capacity C = N^M.
    pub fn capacity(&self) -> u64 {
        (self.vocab as u64).pow(self.senders as u32)
    }

    /// Stable hex fingerprint of every field, used for run directories and
    /// seed derivation.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        format!("{:016x}", fnv1a64(json.as_bytes()))
    }

    /// Derives a run seed from a master seed, the config (with its own seed
    /// field zeroed), and a replicate index; order-independent across a
    /// sweep.
    pub fn derive_seed(&self, master_seed: u64, replicate: u64) -> u64 {
        let mut base = self.clone();
        base.seed = 0;
        let json = serde_json::to_string(&base).expect("config serializes");
        let mut h = fnv1a64(json.as_bytes());
        for v in [master_seed, replicate] {
            for b in v.to_le_bytes() {
                h = fnv1a64_step(h, b);
            }
        }
        h
    }
}

impl fmt::Display for ExperimentConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} M={} N={} C={} gamma={} mode={} seed={}",
            self.layout,
            self.senders,
            self.vocab,
            self.capacity(),
            self.gamma,
            self.mode.as_str(),
            self.seed
        )
    }
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf29ce484222325, |h, &b| fnv1a64_step(h, b))
}

fn fnv1a64_step(h: u64, b: u8) -> u64 {
    (h ^ b as u64).wrapping_mul(0x100000001b3)
}

/// Parses the flat `key = value` config-file format. `#` starts a comment;
/// unknown keys are rejected.
pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!("line {}: expected 'key = value'", lineno + 1))
        })?;
        let key = key.trim().to_string();
        if map
            .insert(key.clone(), value.trim().to_string())
            .is_some()
        {
            return Err(Error::Config(format!(
                "line {}: duplicate key {key:?}",
                lineno + 1
            )));
        }
    }
    Ok(map)
}

/// Applies flat key/value pairs onto a config, rejecting unknown keys.
pub fn apply_key_values(
    config: &mut ExperimentConfig,
    map: &BTreeMap<String, String>,
) -> Result<()> {
    fn parse<T: FromStr>(key: &str, v: &str) -> Result<T>
    where
        T::Err: fmt::Display,
    {
        v.parse().map_err(|e| {
            Error::Config(format!("field {key}: cannot parse {v:?}: {e}"))
        })
    }
    for (key, value) in map {
        match key.as_str() {
            "layout" => config.layout = value.clone(),
            "senders" => config.senders = parse(key, value)?,
            "vocab" => config.vocab = parse(key, value)?,
            "gamma" => config.gamma = parse(key, value)?,
            "epsilon_sender" => config.epsilon_sender = parse(key, value)?,
            "epsilon_receiver" => config.epsilon_receiver = parse(key, value)?,
            "lr_sender" => config.lr_sender = parse(key, value)?,
            "lr_receiver" => config.lr_receiver = parse(key, value)?,
            "hidden_width" => config.hidden_width = parse(key, value)?,
            "init_scale" => config.init_scale = parse(key, value)?,
            "total_steps" => config.total_steps = parse(key, value)?,
            "metrics_every" => config.metrics_every = parse(key, value)?,
            "window_episodes" => config.window_episodes = parse(key, value)?,
            "eval_episodes" => config.eval_episodes = parse(key, value)?,
            "seed" => config.seed = parse(key, value)?,
            "mode" => config.mode = value.parse()?,
            other => {
                return Err(Error::Config(format!("unknown config key {other:?}")));
            }
        }
    }
    Ok(())
}
