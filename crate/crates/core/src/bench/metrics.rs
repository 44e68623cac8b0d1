//! Per-episode metrics and their CSV encoding.

use std::fmt::Write as _;

use crate::world::World;

pub const CSV_HEADER: &str =
    "episode,steps,coverage,distance_m,rotation_units,base_reward,shaped_reward,wall_hits,seed";

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub episode: usize,
    pub steps: usize,
    pub coverage: f64,
    pub distance_m: f64,
    pub rotation_units: u64,
    pub base_reward: f64,
    pub shaped_reward: f64,
    pub wall_hits: usize,
    pub seed: u64,
}

impl MetricsRecord {
    /// Snapshot of the world's episode accumulators.
    pub fn from_world(episode: usize, world: &World, shaped_reward: f64, seed: u64) -> Self {
        let s = world.state();
        Self {
            episode,
            steps: s.steps,
            coverage: world.coverage(),
            distance_m: s.episode_distance,
            rotation_units: s.episode_rotation_units,
            base_reward: s.episode_base_reward,
            shaped_reward,
            wall_hits: s.blocked_moves,
            seed,
        }
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{:.6},{:.6},{},{:.6},{:.6},{},{}",
            self.episode,
            self.steps,
            self.coverage,
            self.distance_m,
            self.rotation_units,
            self.base_reward,
            self.shaped_reward,
            self.wall_hits,
            self.seed
        )
    }
}

/// Header plus one LF-terminated row per record.
pub fn to_csv(records: &[MetricsRecord]) -> String {
    let mut out = String::with_capacity(64 * (records.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(out, "{}", r.csv_row());
    }
    out
}

/// Mean of `f` over the last `window` records.
pub fn tail_mean(records: &[MetricsRecord], window: usize, f: impl Fn(&MetricsRecord) -> f64) -> f64 {
    let tail = &records[records.len().saturating_sub(window)..];
    if tail.is_empty() {
        return f64::NAN;
    }
    tail.iter().map(f).sum::<f64>() / tail.len() as f64
}
