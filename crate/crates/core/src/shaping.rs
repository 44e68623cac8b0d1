//! Stacked-value reward shaping and elite-set episode filtering.
//!
//! The stack counts consecutive steps whose keyed reward is non-negative.
//! Every step earns an extra `R^stack` (taken after the update), so a run of
//! new tiles is rewarded geometrically while any negative step resets the
//! bonus to `R^0 = 1`.

use serde::{Deserialize, Serialize};

pub const DEFAULT_BASE: f64 = 1.5;
pub const DEFAULT_EPISODE_CAP: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShapingConfig {
    pub base: f64,
    /// Key the stack on tile + rotation instead of the tile reward alone.
    pub include_rotation: bool,
}

impl Default for ShapingConfig {
    fn default() -> Self {
        Self {
            base: DEFAULT_BASE,
            include_rotation: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StackState {
    pub stack: u32,
    pub base: f64,
}

impl StackState {
    pub fn new(base: f64) -> Self {
        Self { stack: 0, base }
    }
}

impl Default for StackState {
    fn default() -> Self {
        Self::new(DEFAULT_BASE)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapedStep {
    pub shaped: f64,
    pub stack: StackState,
    pub bonus: f64,
}

/// Applies one step of stacked-value shaping.
pub fn shaped_step(
    stack: StackState,
    tile_reward: f64,
    rotation_reward: f64,
    include_rotation: bool,
) -> ShapedStep {
    let keyed = if include_rotation {
        tile_reward + rotation_reward
    } else {
        tile_reward
    };
    let next = if keyed >= 0.0 { stack.stack + 1 } else { 0 };
    let bonus = stack.base.powi(next as i32);
    ShapedStep {
        shaped: tile_reward + rotation_reward + bonus,
        stack: StackState {
            stack: next,
            base: stack.base,
        },
        bonus,
    }
}

/// Per-episode shaping tracker.
#[derive(Debug, Clone, Copy)]
pub struct RewardShaper {
    cfg: ShapingConfig,
    state: StackState,
}

impl RewardShaper {
    pub fn new(cfg: ShapingConfig) -> Self {
        Self {
            cfg,
            state: StackState::new(cfg.base),
        }
    }

    pub fn reset(&mut self) {
        self.state = StackState::new(self.cfg.base);
    }

    pub fn stack(&self) -> StackState {
        self.state
    }

    pub fn shape(&mut self, tile_reward: f64, rotation_reward: f64) -> ShapedStep {
        let out = shaped_step(
            self.state,
            tile_reward,
            rotation_reward,
            self.cfg.include_rotation,
        );
        self.state = out.stack;
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VerdictReason {
    Completed,
    Truncated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EpisodeVerdict {
    pub kept: bool,
    pub reason: VerdictReason,
}

/// Episode is discarded iff it hit `cap` steps without finishing the task.
pub fn elite_filter(episode_length: usize, done: bool, cap: usize) -> EpisodeVerdict {
    if !done && episode_length >= cap {
        EpisodeVerdict {
            kept: false,
            reason: VerdictReason::Truncated,
        }
    } else {
        EpisodeVerdict {
            kept: true,
            reason: VerdictReason::Completed,
        }
    }
}

/// Elite-set options. Replaying the best episodes is off by default.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EliteConfig {
    pub episode_cap: usize,
    pub replay_best: Option<usize>,
}

impl Default for EliteConfig {
    fn default() -> Self {
        Self {
            episode_cap: DEFAULT_EPISODE_CAP,
            replay_best: None,
        }
    }
}

/// Keeps the `capacity` shortest completed episodes seen so far.
#[derive(Debug, Clone)]
pub struct EliteArchive<T> {
    capacity: usize,
    entries: Vec<(usize, u64, T)>,
    counter: u64,
}

impl<T: Clone> EliteArchive<T> {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            entries: Vec::new(),
            counter: 0,
        }
    }

    /// Offers an episode of the given length; ties favor older entries.
    pub fn offer(&mut self, length: usize, episode: &T) -> bool {
        if self.capacity == 0 {
            return false;
        }
        let worst = self.entries.iter().map(|e| e.0).max();
        if self.entries.len() == self.capacity && worst.is_some_and(|w| length >= w) {
            return false;
        }
        self.counter += 1;
        self.entries.push((length, self.counter, episode.clone()));
        self.entries.sort_by_key(|e| (e.0, e.1));
        self.entries.truncate(self.capacity);
        true
    }

    pub fn episodes(&self) -> impl Iterator<Item = &T> {
        self.entries.iter().map(|e| &e.2)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}
