//! Resolved run configuration.
//!
//! Every results directory receives `config.json`, the exact configuration
//! that produced it. Feeding that file back through `--config` reproduces the
//! run. The hash stored in policy files covers everything except the output
//! location, so the same run written to two directories yields identical
//! bytes.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::bench::Algo;
use crate::percept::{ObservationConfig, ObservationMode};
use crate::ppo::PpoConfig;
use crate::qlearn::DqnConfig;
use crate::shaping::{EliteConfig, ShapingConfig};
use crate::train::{TrainOptions, DEFAULT_SAFETY_CAP};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("bad override `{0}`: expected key=value")]
    BadOverride(String),
    #[error("config: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Train,
    Eval,
    Compare,
    Ablate,
    Plot,
    MapValidate,
}

impl Command {
    pub fn as_str(self) -> &'static str {
        match self {
            Command::Train => "train",
            Command::Eval => "eval",
            Command::Compare => "compare",
            Command::Ablate => "ablate",
            Command::Plot => "plot",
            Command::MapValidate => "map-validate",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    pub algo: Algo,
    pub map: Option<String>,
    pub episodes: usize,
    pub seeds: Vec<u64>,
    pub disable_dnut: bool,
    pub disable_rs: bool,
    pub disable_es: bool,
    pub observation: ObservationMode,
    /// Step limit for evaluation episodes.
    pub step_cap: usize,
    /// Step limit for the Random baseline in comparisons.
    pub random_cap: usize,
    /// Trailing window for final-performance summaries.
    pub window: usize,
    pub policy: Option<String>,
    pub out: Option<String>,
    pub shaping: ShapingConfig,
    pub elite: EliteConfig,
    pub safety_cap: usize,
    pub ppo: PpoConfig,
    pub dqn: DqnConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            command: Command::Train,
            algo: Algo::Ppo,
            map: None,
            episodes: 10_000,
            seeds: vec![0],
            disable_dnut: false,
            disable_rs: false,
            disable_es: false,
            observation: ObservationMode::Local,
            step_cap: 3_000,
            random_cap: 40_000,
            window: 500,
            policy: None,
            out: None,
            shaping: ShapingConfig::default(),
            elite: EliteConfig::default(),
            safety_cap: DEFAULT_SAFETY_CAP,
            ppo: PpoConfig::default(),
            dqn: DqnConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    /// Pretty JSON with a trailing newline; field order is fixed by the struct.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    /// SHA-256 over the JSON of everything but `out`.
    pub fn hash(&self) -> String {
        let canonical = Self {
            out: None,
            ..self.clone()
        };
        let digest = Sha256::digest(canonical.to_json().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn write(&self, dir: &Path) -> Result<(), ConfigError> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("config.json"), self.to_json())?;
        Ok(())
    }

    /// Applies `key=value` overrides addressed by dotted paths, e.g.
    /// `ppo.lr=1e-3`. Values parse as JSON, falling back to a string.
    /// Unknown keys are rejected.
    pub fn with_overrides(&self, overrides: &[String]) -> Result<Self, ConfigError> {
        if overrides.is_empty() {
            return Ok(self.clone());
        }
        let mut root = serde_json::to_value(self)?;
        for item in overrides {
            let (key, raw) = item
                .split_once('=')
                .ok_or_else(|| ConfigError::BadOverride(item.clone()))?;
            let value = Value::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
            let mut slot = &mut root;
            for part in key.split('.') {
                slot = slot
                    .as_object_mut()
                    .and_then(|o| o.get_mut(part))
                    .ok_or_else(|| ConfigError::Invalid(format!("unknown key `{key}`")))?;
            }
            *slot = value;
        }
        Ok(serde_json::from_value(root)?)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.seeds.is_empty() {
            return Err(ConfigError::Invalid("seeds must not be empty".into()));
        }
        if self.episodes == 0 {
            return Err(ConfigError::Invalid("episodes must be positive".into()));
        }
        if self.step_cap == 0 || self.random_cap == 0 || self.safety_cap == 0 || self.window == 0 {
            return Err(ConfigError::Invalid("caps and window must be positive".into()));
        }
        self.ppo
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn observation_config(&self) -> ObservationConfig {
        ObservationConfig {
            mode: self.observation,
            dnut: !self.disable_dnut,
            ..ObservationConfig::default()
        }
    }

    pub fn train_options(&self, seed: u64) -> TrainOptions {
        TrainOptions {
            episodes: self.episodes,
            seed,
            obs: self.observation_config(),
            shaping: (!self.disable_rs).then_some(self.shaping),
            elite: (!self.disable_es).then_some(self.elite),
            safety_cap: self.safety_cap,
        }
    }
}
