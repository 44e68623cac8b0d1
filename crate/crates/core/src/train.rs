//! Training options shared by the PPO and DQN trainers.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::percept::ObservationConfig;
use crate::shaping::{EliteConfig, ShapingConfig};

/// Hard episode limit used when the elite cap is disabled.
pub const DEFAULT_SAFETY_CAP: usize = 2000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainOptions {
    pub episodes: usize,
    pub seed: u64,
    pub obs: ObservationConfig,
    /// `None` trains on the unshaped base reward.
    pub shaping: Option<ShapingConfig>,
    /// `None` disables the 500-step cap and keeps every episode.
    pub elite: Option<EliteConfig>,
    pub safety_cap: usize,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Variant::All.options(10_000, 0)
    }
}

impl TrainOptions {
    /// Step limit for one training episode.
    pub fn episode_cap(&self) -> usize {
        self.elite
            .map(|e| e.episode_cap)
            .unwrap_or(self.safety_cap)
    }
}

/// The five agents of the ablation study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    All,
    NoDnut,
    NoRs,
    NoEs,
    Plain,
}

impl Variant {
    pub const ABLATION: [Variant; 5] = [
        Variant::All,
        Variant::NoDnut,
        Variant::NoRs,
        Variant::NoEs,
        Variant::Plain,
    ];

    pub fn dnut(self) -> bool {
        matches!(self, Variant::All | Variant::NoRs | Variant::NoEs)
    }

    pub fn reward_shaping(self) -> bool {
        matches!(self, Variant::All | Variant::NoDnut | Variant::NoEs)
    }

    pub fn elite_set(self) -> bool {
        matches!(self, Variant::All | Variant::NoDnut | Variant::NoRs)
    }

    pub fn options(self, episodes: usize, seed: u64) -> TrainOptions {
        TrainOptions {
            episodes,
            seed,
            obs: ObservationConfig {
                dnut: self.dnut(),
                ..ObservationConfig::default()
            },
            shaping: self.reward_shaping().then(ShapingConfig::default),
            elite: self.elite_set().then(EliteConfig::default),
            safety_cap: DEFAULT_SAFETY_CAP,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Variant::All => "all",
            Variant::NoDnut => "no-dnut",
            Variant::NoRs => "no-rs",
            Variant::NoEs => "no-es",
            Variant::Plain => "plain",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Variant::ABLATION
            .into_iter()
            .find(|v| v.label() == s)
            .ok_or_else(|| format!("unknown variant `{s}`"))
    }
}
