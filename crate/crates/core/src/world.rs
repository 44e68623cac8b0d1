//! Headless grid world for the cleaning task.
//!
//! The robot occupies one Free cell and acts by choosing one of eight
//! absolute compass headings. Each step turns the robot toward the chosen
//! octant (paying 0.5 per 45° of the shorter arc) and then tries to move
//! one cell. Entering an uncleaned tile is free, re-entering a cleaned
//! tile costs 1 and bumping into an obstacle or the outer wall costs 2.

use std::fmt;

use thiserror::Error;

/// Side length of a tile in meters.
pub const DEFAULT_TILE_SIDE: f64 = 0.5;

/// Reward per 45° of rotation.
pub const ROTATION_REWARD_PER_UNIT: f64 = -0.5;

pub const REWARD_UNCLEANED: f64 = 0.0;
pub const REWARD_CLEANED: f64 = -1.0;
pub const REWARD_BLOCKED: f64 = -2.0;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WorldError {
    #[error("map has no free cell")]
    NoFreeCell,
    #[error("map must be at least 2x2 (got {width}x{height})")]
    TooSmall { width: usize, height: usize },
    #[error("cell table has {got} entries, expected {expected}")]
    CellCount { expected: usize, got: usize },
    #[error("start cell ({row}, {col}) is not a free cell")]
    BadStart { row: usize, col: usize },
    #[error("episode already finished")]
    EpisodeFinished,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CellKind {
    Free,
    Obstacle,
}

/// Grid coordinate as (row, col).
pub type Pos = (usize, usize);

/// Static map geometry. Everything outside the grid is wall.
#[derive(Debug, Clone, PartialEq)]
pub struct GridMap {
    width: usize,
    height: usize,
    cells: Vec<CellKind>,
    start: Option<Pos>,
    tile_side: f64,
}

impl GridMap {
    /// Builds a map from a row-major cell table.
    pub fn new(
        width: usize,
        height: usize,
        cells: Vec<CellKind>,
        start: Option<Pos>,
    ) -> Result<Self, WorldError> {
        if width == 0 || height == 0 {
            return Err(WorldError::TooSmall { width, height });
        }
        if cells.len() != width * height {
            return Err(WorldError::CellCount {
                expected: width * height,
                got: cells.len(),
            });
        }
        let map = Self {
            width,
            height,
            cells,
            start,
            tile_side: DEFAULT_TILE_SIDE,
        };
        if let Some((row, col)) = start {
            if !map.is_free(row as isize, col as isize) {
                return Err(WorldError::BadStart { row, col });
            }
        }
        Ok(map)
    }

    /// Obstacle-free rectangle with the default start.
    pub fn empty(width: usize, height: usize) -> Self {
        Self::new(width, height, vec![CellKind::Free; width * height], None)
            .expect("empty map is always valid")
    }

    pub fn with_tile_side(mut self, meters: f64) -> Self {
        self.tile_side = meters;
        self
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn start(&self) -> Option<Pos> {
        self.start
    }

    pub fn tile_side(&self) -> f64 {
        self.tile_side
    }

    pub fn cells(&self) -> &[CellKind] {
        &self.cells
    }

    #[inline]
    pub fn index(&self, (row, col): Pos) -> usize {
        row * self.width + col
    }

    #[inline]
    pub fn in_bounds(&self, row: isize, col: isize) -> bool {
        row >= 0 && col >= 0 && (row as usize) < self.height && (col as usize) < self.width
    }

    /// Cell kind with out-of-bounds coordinates reported as Obstacle.
    #[inline]
    pub fn kind(&self, row: isize, col: isize) -> CellKind {
        if self.in_bounds(row, col) {
            self.cells[row as usize * self.width + col as usize]
        } else {
            CellKind::Obstacle
        }
    }

    #[inline]
    pub fn is_free(&self, row: isize, col: isize) -> bool {
        self.kind(row, col) == CellKind::Free
    }

    pub fn free_count(&self) -> usize {
        self.cells.iter().filter(|c| **c == CellKind::Free).count()
    }

    /// Start cell if set, otherwise the first Free cell in row-major order.
    pub fn start_pos(&self) -> Option<Pos> {
        self.start.or_else(|| {
            self.cells
                .iter()
                .position(|c| *c == CellKind::Free)
                .map(|i| (i / self.width, i % self.width))
        })
    }

    /// Free cell reached by moving from `pos` along `heading`, if any.
    #[inline]
    pub fn neighbor(&self, pos: Pos, heading: Heading) -> Option<Pos> {
        let (dr, dc) = heading.offset();
        let row = pos.0 as isize + dr;
        let col = pos.1 as isize + dc;
        self.is_free(row, col).then_some((row as usize, col as usize))
    }

    /// Checks the structural invariants a runnable map must satisfy.
    pub fn validate(&self) -> Result<(), WorldError> {
        if self.width < 2 || self.height < 2 {
            return Err(WorldError::TooSmall {
                width: self.width,
                height: self.height,
            });
        }
        if self.free_count() == 0 {
            return Err(WorldError::NoFreeCell);
        }
        Ok(())
    }

    /// Free cells not reachable from the start pose with 8-connected moves.
    pub fn unreachable_cells(&self) -> Vec<Pos> {
        let Some(start) = self.start_pos() else {
            return Vec::new();
        };
        let mut seen = vec![false; self.cells.len()];
        let mut stack = vec![start];
        seen[self.index(start)] = true;
        while let Some(p) = stack.pop() {
            for h in Heading::ALL {
                if let Some(n) = self.neighbor(p, h) {
                    let i = self.index(n);
                    if !seen[i] {
                        seen[i] = true;
                        stack.push(n);
                    }
                }
            }
        }
        (0..self.cells.len())
            .filter(|&i| self.cells[i] == CellKind::Free && !seen[i])
            .map(|i| (i / self.width, i % self.width))
            .collect()
    }
}

/// Compass octant. 0 = N (row − 1), 2 = E (col + 1), clockwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Heading(u8);

impl Heading {
    pub const N: Heading = Heading(0);
    pub const NE: Heading = Heading(1);
    pub const E: Heading = Heading(2);
    pub const SE: Heading = Heading(3);
    pub const S: Heading = Heading(4);
    pub const SW: Heading = Heading(5);
    pub const W: Heading = Heading(6);
    pub const NW: Heading = Heading(7);

    pub const ALL: [Heading; 8] = [
        Heading::N,
        Heading::NE,
        Heading::E,
        Heading::SE,
        Heading::S,
        Heading::SW,
        Heading::W,
        Heading::NW,
    ];

    pub const COUNT: usize = 8;

    /// Returns `None` for indices outside 0..8.
    pub fn new(dir: u8) -> Option<Self> {
        (dir < 8).then_some(Heading(dir))
    }

    /// Wraps any index into 0..8.
    pub fn from_index(i: usize) -> Self {
        Heading((i % 8) as u8)
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    /// (row, col) displacement of one move.
    pub fn offset(self) -> (isize, isize) {
        const OFFSETS: [(isize, isize); 8] = [
            (-1, 0),
            (-1, 1),
            (0, 1),
            (1, 1),
            (1, 0),
            (1, -1),
            (0, -1),
            (-1, -1),
        ];
        OFFSETS[self.0 as usize]
    }

    pub fn is_diagonal(self) -> bool {
        self.0 % 2 == 1
    }

    pub fn from_offset(dr: isize, dc: isize) -> Option<Self> {
        Heading::ALL.into_iter().find(|h| h.offset() == (dr, dc))
    }
}

impl fmt::Display for Heading {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        const NAMES: [&str; 8] = ["N", "NE", "E", "SE", "S", "SW", "W", "NW"];
        f.write_str(NAMES[self.0 as usize])
    }
}

/// Number of 45° units on the shorter arc between two headings, and the
/// matching reward.
pub fn rotation_cost(from: Heading, to: Heading) -> (u32, f64) {
    let diff = (from.0 as i32 - to.0 as i32).rem_euclid(8) as u32;
    let units = diff.min(8 - diff);
    (units, ROTATION_REWARD_PER_UNIT * units as f64)
}

/// Result of a single `step`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub tile_reward: f64,
    pub rotation_reward: f64,
    pub moved: bool,
    pub new_pos: Pos,
    pub done: bool,
    pub distance_delta: f64,
    pub rotation_units: u32,
}

impl StepOutcome {
    pub fn base_reward(&self) -> f64 {
        self.tile_reward + self.rotation_reward
    }
}

/// Mutable per-episode state of the robot.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub pos: Pos,
    pub heading: Heading,
    pub cleaned: Vec<bool>,
    pub steps: usize,
    pub episode_base_reward: f64,
    pub episode_rotation_units: u64,
    pub episode_distance: f64,
    pub axis_moves: usize,
    pub diagonal_moves: usize,
    pub blocked_moves: usize,
    pub seed: u64,
    uncleaned: usize,
}

impl AgentState {
    pub fn uncleaned_count(&self) -> usize {
        self.uncleaned
    }
}

/// A map together with the live episode state on it.
#[derive(Debug, Clone)]
pub struct World {
    map: GridMap,
    state: AgentState,
}

impl World {
    /// Starts a fresh episode. The start cell counts as cleaned.
    pub fn reset(map: GridMap, rng_seed: u64) -> Result<Self, WorldError> {
        let state = fresh_state(&map, rng_seed)?;
        Ok(Self { map, state })
    }

    /// Re-initializes the episode on the same map.
    pub fn restart(&mut self, rng_seed: u64) {
        self.state = fresh_state(&self.map, rng_seed).expect("map validated at construction");
    }

    pub fn map(&self) -> &GridMap {
        &self.map
    }

    pub fn state(&self) -> &AgentState {
        &self.state
    }

    pub fn pos(&self) -> Pos {
        self.state.pos
    }

    pub fn heading(&self) -> Heading {
        self.state.heading
    }

    pub fn steps(&self) -> usize {
        self.state.steps
    }

    #[inline]
    pub fn is_cleaned(&self, pos: Pos) -> bool {
        self.state.cleaned[self.map.index(pos)]
    }

    /// True iff every Free cell is cleaned.
    pub fn is_done(&self) -> bool {
        self.state.uncleaned == 0
    }

    /// Fraction of Free cells cleaned.
    pub fn coverage(&self) -> f64 {
        let free = self.map.free_count();
        (free - self.state.uncleaned) as f64 / free as f64
    }

    /// Tile reward for entering the cell at the given offset, with walls
    /// reported as blocked.
    #[inline]
    pub fn prospective_tile_reward(&self, heading: Heading) -> f64 {
        match self.map.neighbor(self.state.pos, heading) {
            None => REWARD_BLOCKED,
            Some(p) if self.is_cleaned(p) => REWARD_CLEANED,
            Some(_) => REWARD_UNCLEANED,
        }
    }

    /// Turns toward `action` and attempts one cell of motion.
    pub fn step(&mut self, action: Heading) -> Result<StepOutcome, WorldError> {
        if self.is_done() {
            return Err(WorldError::EpisodeFinished);
        }
        let (rotation_units, rotation_reward) = rotation_cost(self.state.heading, action);
        self.state.heading = action;

        let (tile_reward, moved, distance_delta) = match self.map.neighbor(self.state.pos, action)
        {
            Some(target) => {
                let idx = self.map.index(target);
                let reward = if self.state.cleaned[idx] {
                    REWARD_CLEANED
                } else {
                    self.state.cleaned[idx] = true;
                    self.state.uncleaned -= 1;
                    REWARD_UNCLEANED
                };
                self.state.pos = target;
                let dist = if action.is_diagonal() {
                    self.state.diagonal_moves += 1;
                    self.map.tile_side * std::f64::consts::SQRT_2
                } else {
                    self.state.axis_moves += 1;
                    self.map.tile_side
                };
                (reward, true, dist)
            }
            None => {
                self.state.blocked_moves += 1;
                (REWARD_BLOCKED, false, 0.0)
            }
        };

        self.state.steps += 1;
        self.state.episode_base_reward += tile_reward + rotation_reward;
        self.state.episode_rotation_units += rotation_units as u64;
        self.state.episode_distance += distance_delta;

        Ok(StepOutcome {
            tile_reward,
            rotation_reward,
            moved,
            new_pos: self.state.pos,
            done: self.is_done(),
            distance_delta,
            rotation_units,
        })
    }
}

fn fresh_state(map: &GridMap, rng_seed: u64) -> Result<AgentState, WorldError> {
    let pos = map.start_pos().ok_or(WorldError::NoFreeCell)?;
    let mut cleaned = vec![false; map.cells.len()];
    cleaned[map.index(pos)] = true;
    Ok(AgentState {
        pos,
        heading: Heading::E,
        cleaned,
        steps: 0,
        episode_base_reward: 0.0,
        episode_rotation_units: 0,
        episode_distance: 0.0,
        axis_moves: 0,
        diagonal_moves: 0,
        blocked_moves: 0,
        seed: rng_seed,
        uncleaned: map.free_count() - 1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn open(n: usize) -> GridMap {
        GridMap::empty(n, n)
    }

    #[test]
    fn rotation_examples() {
        assert_eq!(rotation_cost(Heading::E, Heading::E), (0, 0.0));
        assert_eq!(rotation_cost(Heading::N, Heading::S), (4, -2.0));
        assert_eq!(rotation_cost(Heading::N, Heading::SE), (3, -1.5));
        assert_eq!(rotation_cost(Heading::NW, Heading::NE), (2, -1.0));
    }

    #[test]
    fn reset_defaults() {
        let w = World::reset(open(5), 0).unwrap();
        assert_eq!(w.pos(), (0, 0));
        assert_eq!(w.heading(), Heading::E);
        assert_eq!(w.state().uncleaned_count(), 24);
        assert!(w.is_cleaned((0, 0)));
        assert!(!w.is_done());
    }

    #[test]
    fn reset_with_start() {
        let map = GridMap::new(5, 5, vec![CellKind::Free; 25], Some((2, 2))).unwrap();
        let w = World::reset(map, 0).unwrap();
        assert_eq!(w.pos(), (2, 2));
        assert!(w.is_cleaned((2, 2)));
    }

    #[test]
    fn all_obstacle_map_has_no_free_cell() {
        let map = GridMap::new(3, 3, vec![CellKind::Obstacle; 9], None).unwrap();
        assert_eq!(World::reset(map, 0).unwrap_err(), WorldError::NoFreeCell);
    }

    #[test]
    fn single_free_cell_is_done_after_reset() {
        let mut cells = vec![CellKind::Obstacle; 4];
        cells[3] = CellKind::Free;
        let map = GridMap::new(2, 2, cells, None).unwrap();
        let mut w = World::reset(map, 0).unwrap();
        assert!(w.is_done());
        assert_eq!(w.step(Heading::N).unwrap_err(), WorldError::EpisodeFinished);
    }

    #[test]
    fn step_into_uncleaned_ahead() {
        let mut w = World::reset(open(5), 0).unwrap();
        let out = w.step(Heading::E).unwrap();
        assert_eq!(out.tile_reward, 0.0);
        assert_eq!(out.rotation_reward, 0.0);
        assert!(out.moved);
        assert_eq!(out.new_pos, (0, 1));
        assert_eq!(out.distance_delta, 0.5);
    }

    #[test]
    fn turn_ninety_into_cleaned_cell() {
        let mut w = World::reset(open(5), 0).unwrap();
        w.step(Heading::E).unwrap(); // (0,1)
        w.step(Heading::SW).unwrap(); // (1,0)
        w.step(Heading::N).unwrap(); // (0,0), heading N
        let out = w.step(Heading::E).unwrap(); // (0,1) already cleaned
        assert_eq!(out.tile_reward, -1.0);
        assert_eq!(out.rotation_reward, -1.0);
        assert_eq!(out.base_reward(), -2.0);
    }

    #[test]
    fn wall_hit_keeps_position() {
        let mut w = World::reset(GridMap::empty(2, 2), 0).unwrap();
        w.step(Heading::E).unwrap();
        let out = w.step(Heading::E).unwrap();
        assert_eq!(out.tile_reward, -2.0);
        assert!(!out.moved);
        assert_eq!(out.new_pos, (0, 1));
        assert_eq!(out.distance_delta, 0.0);
        assert_eq!(w.steps(), 2);
    }

    #[test]
    fn blocked_move_still_pays_rotation() {
        let mut w = World::reset(open(3), 0).unwrap();
        let out = w.step(Heading::W).unwrap();
        assert!(!out.moved);
        assert_eq!(out.rotation_units, 4);
        assert_eq!(out.base_reward(), -4.0);
        assert_eq!(w.heading(), Heading::W);
    }

    #[test]
    fn done_when_all_cleaned() {
        let mut w = World::reset(GridMap::empty(2, 2), 0).unwrap();
        w.step(Heading::E).unwrap();
        w.step(Heading::S).unwrap();
        let out = w.step(Heading::W).unwrap();
        assert!(out.done);
        assert!(w.is_done());
        assert_eq!(w.coverage(), 1.0);
    }

    #[test]
    fn unreachable_cells_detected() {
        // . # .
        // # # .
        let cells = vec![
            CellKind::Free,
            CellKind::Obstacle,
            CellKind::Free,
            CellKind::Obstacle,
            CellKind::Obstacle,
            CellKind::Free,
        ];
        let map = GridMap::new(3, 2, cells, None).unwrap();
        assert_eq!(map.unreachable_cells(), vec![(0, 2), (1, 2)]);
    }
}
