//! Observation encoders.
//!
//! The local encoding has a fixed length regardless of map size: the eight
//! prospective tile rewards around the robot, the direction and distance of
//! the nearest uncleaned tile, and a one-hot heading. The global encoding
//! lists every tile and grows with the map; it exists to reproduce the
//! scaling failure of whole-map inputs.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::world::{CellKind, Heading, Pos, World};

pub const WINDOW_LEN: usize = 8;
pub const DNUT_LEN: usize = 3;
pub const HEADING_LEN: usize = 8;
/// Length of the default local observation.
pub const LOCAL_LEN: usize = WINDOW_LEN + DNUT_LEN + HEADING_LEN;

/// BFS distance at which the normalized distance feature saturates.
pub const DNUT_DISTANCE_CAP: f64 = 40.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObservationMode {
    Local,
    Global,
}

impl std::str::FromStr for ObservationMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "local" => Ok(Self::Local),
            "global" => Ok(Self::Global),
            other => Err(format!("unknown observation mode `{other}`")),
        }
    }
}

impl std::fmt::Display for ObservationMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Local => "local",
            Self::Global => "global",
        })
    }
}

/// Which features go into the observation.
///
/// Turning `dnut` off zeroes the three nearest-uncleaned features but keeps
/// the vector length, so ablated and full agents share one architecture.
/// Turning `heading` off drops the one-hot block (an 11-feature vector).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationConfig {
    pub mode: ObservationMode,
    pub dnut: bool,
    pub dnut_distance: bool,
    pub heading: bool,
}

impl Default for ObservationConfig {
    fn default() -> Self {
        Self {
            mode: ObservationMode::Local,
            dnut: true,
            dnut_distance: true,
            heading: true,
        }
    }
}

impl ObservationConfig {
    pub fn global() -> Self {
        Self {
            mode: ObservationMode::Global,
            ..Self::default()
        }
    }

    /// Input length for a map of the given size.
    pub fn len(&self, width: usize, height: usize) -> usize {
        match self.mode {
            ObservationMode::Local => {
                WINDOW_LEN + DNUT_LEN + if self.heading { HEADING_LEN } else { 0 }
            }
            ObservationMode::Global => width * height * 3,
        }
    }

    pub fn is_size_invariant(&self) -> bool {
        self.mode == ObservationMode::Local
    }
}

/// Structured local observation.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub window: [f64; WINDOW_LEN],
    pub dnut: [f64; DNUT_LEN],
    pub heading_onehot: [f64; HEADING_LEN],
}

impl Observation {
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(LOCAL_LEN);
        v.extend_from_slice(&self.window);
        v.extend_from_slice(&self.dnut);
        v.extend_from_slice(&self.heading_onehot);
        v
    }
}

/// Nearest uncleaned tile relative to the robot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NearestUncleaned {
    pub dr: isize,
    pub dc: isize,
    pub distance: usize,
}

/// Prospective tile reward of each octant neighbor, halved, indexed by heading.
pub fn local_window(world: &World) -> [f64; WINDOW_LEN] {
    let mut out = [0.0; WINDOW_LEN];
    for h in Heading::ALL {
        out[h.index()] = world.prospective_tile_reward(h) * 0.5;
    }
    out
}

/// Breadth-first search over Free cells with 8-connected moves.
///
/// Among uncleaned cells at the minimum distance the first in row-major
/// order wins. Returns `None` when no uncleaned cell is reachable.
pub fn nearest_uncleaned(world: &World) -> Option<NearestUncleaned> {
    if world.is_done() {
        return None;
    }
    let map = world.map();
    let origin = world.pos();
    let mut dist = vec![usize::MAX; map.cells().len()];
    dist[map.index(origin)] = 0;
    let mut frontier: VecDeque<Pos> = VecDeque::new();
    frontier.push_back(origin);

    let mut best: Option<(usize, Pos)> = None;
    while let Some(p) = frontier.pop_front() {
        let d = dist[map.index(p)];
        if let Some((bd, _)) = best {
            if d > bd {
                break;
            }
        }
        if !world.is_cleaned(p) {
            match best {
                Some((_, bp)) if bp <= p => {}
                _ => best = Some((d, p)),
            }
            continue;
        }
        for h in Heading::ALL {
            if let Some(n) = map.neighbor(p, h) {
                let i = map.index(n);
                if dist[i] == usize::MAX {
                    dist[i] = d + 1;
                    frontier.push_back(n);
                }
            }
        }
    }
    best.map(|(distance, (r, c))| NearestUncleaned {
        dr: r as isize - origin.0 as isize,
        dc: c as isize - origin.1 as isize,
        distance,
    })
}

fn dnut_features(world: &World, cfg: &ObservationConfig) -> [f64; DNUT_LEN] {
    if !cfg.dnut {
        return [0.0; DNUT_LEN];
    }
    match nearest_uncleaned(world) {
        Some(n) => {
            let (dx, dy) = (n.dc as f64, n.dr as f64);
            let norm = dx.hypot(dy);
            let d = if cfg.dnut_distance {
                (n.distance as f64).min(DNUT_DISTANCE_CAP) / DNUT_DISTANCE_CAP
            } else {
                0.0
            };
            [dx / norm, dy / norm, d]
        }
        None => [0.0; DNUT_LEN],
    }
}

/// Structured local observation (always the full 19-feature layout).
pub fn observe_local(world: &World, cfg: &ObservationConfig) -> Observation {
    let mut heading_onehot = [0.0; HEADING_LEN];
    heading_onehot[world.heading().index()] = 1.0;
    Observation {
        window: local_window(world),
        dnut: dnut_features(world, cfg),
        heading_onehot,
    }
}

/// Global encoding: for each tile in row-major order, its offset from the
/// robot (normalized by map extent) and its halved tile reward.
pub fn observe_global(world: &World) -> Vec<f64> {
    let mut out = Vec::new();
    write_global(world, &mut out);
    out
}

fn write_global(world: &World, out: &mut Vec<f64>) {
    let map = world.map();
    let (ar, ac) = world.pos();
    let sx = (map.width().max(2) - 1) as f64;
    let sy = (map.height().max(2) - 1) as f64;
    for row in 0..map.height() {
        for col in 0..map.width() {
            let r = match map.kind(row as isize, col as isize) {
                CellKind::Obstacle => -1.0,
                CellKind::Free if world.is_cleaned((row, col)) => -0.5,
                CellKind::Free => 0.0,
            };
            out.push((col as f64 - ac as f64) / sx);
            out.push((row as f64 - ar as f64) / sy);
            out.push(r);
        }
    }
}

/// Writes the configured encoding into `out` (cleared first).
pub fn encode_into(world: &World, cfg: &ObservationConfig, out: &mut Vec<f64>) {
    out.clear();
    match cfg.mode {
        ObservationMode::Local => {
            let obs = observe_local(world, cfg);
            out.extend_from_slice(&obs.window);
            out.extend_from_slice(&obs.dnut);
            if cfg.heading {
                out.extend_from_slice(&obs.heading_onehot);
            }
        }
        ObservationMode::Global => write_global(world, out),
    }
}

pub fn encode(world: &World, cfg: &ObservationConfig) -> Vec<f64> {
    let mut out = Vec::with_capacity(cfg.len(world.map().width(), world.map().height()));
    encode_into(world, cfg, &mut out);
    out
}
