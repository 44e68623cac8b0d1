//! Scripted coverage baselines.
//!
//! * Random: drive straight; when the cell ahead is blocked, pick a new
//!   heading uniformly among the octants that lead to a Free cell.
//! * Zigzag: boustrophedon row sweep (left→right, down one row,
//!   right→left, …) with axis moves only. On maps with obstacles the sweep
//!   detours via shortest paths to the next uncovered cell in sweep order.

use std::collections::VecDeque;

use rand::Rng;
use thiserror::Error;

use crate::world::{GridMap, Heading, Pos, World};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PlannerError {
    #[error("robot at ({0}, {1}) has no free neighbor")]
    Trapped(usize, usize),
    #[error("free cell ({0}, {1}) cannot be reached")]
    Unreachable(usize, usize),
    #[error("map has no free cell")]
    NoFreeCell,
}

/// Next heading for the bump-and-turn random baseline.
pub fn random_step(world: &World, rng: &mut impl Rng) -> Result<Heading, PlannerError> {
    let map = world.map();
    let pos = world.pos();
    let heading = world.heading();
    if map.neighbor(pos, heading).is_some() {
        return Ok(heading);
    }
    if Heading::ALL.iter().all(|h| map.neighbor(pos, *h).is_none()) {
        return Err(PlannerError::Trapped(pos.0, pos.1));
    }
    loop {
        let h = Heading::from_index(rng.gen_range(0..Heading::COUNT));
        if map.neighbor(pos, h).is_some() {
            return Ok(h);
        }
    }
}

/// Free cells in serpentine order: even rows left→right, odd rows right→left.
pub fn serpentine_order(map: &GridMap) -> Vec<Pos> {
    let mut order = Vec::with_capacity(map.free_count());
    for row in 0..map.height() {
        let cols: Box<dyn Iterator<Item = usize>> = if row % 2 == 0 {
            Box::new(0..map.width())
        } else {
            Box::new((0..map.width()).rev())
        };
        for col in cols {
            if map.is_free(row as isize, col as isize) {
                order.push((row, col));
            }
        }
    }
    order
}

const AXIS: [Heading; 4] = [Heading::N, Heading::E, Heading::S, Heading::W];

/// Shortest move sequence from `from` to `to` using only `moves`.
fn bfs_path(map: &GridMap, from: Pos, to: Pos, moves: &[Heading]) -> Option<Vec<Heading>> {
    let n = map.cells().len();
    let mut parent: Vec<Option<(usize, Heading)>> = vec![None; n];
    let mut seen = vec![false; n];
    let start = map.index(from);
    seen[start] = true;
    let mut queue = VecDeque::from([from]);
    while let Some(p) = queue.pop_front() {
        if p == to {
            let mut path = Vec::new();
            let mut cur = map.index(p);
            while cur != start {
                let (prev, h) = parent[cur].expect("visited cell has a parent");
                path.push(h);
                cur = prev;
            }
            path.reverse();
            return Some(path);
        }
        for &h in moves {
            if let Some(q) = map.neighbor(p, h) {
                let i = map.index(q);
                if !seen[i] {
                    seen[i] = true;
                    parent[i] = Some((map.index(p), h));
                    queue.push_back(q);
                }
            }
        }
    }
    None
}

/// Action sequence of the zigzag sweep from the map's start pose.
///
/// On an empty rectangle with the default start this is a Hamiltonian path
/// of `W·H − 1` axis moves.
pub fn zigzag_plan(map: &GridMap) -> Result<Vec<Heading>, PlannerError> {
    let start = map.start_pos().ok_or(PlannerError::NoFreeCell)?;
    let mut covered = vec![false; map.cells().len()];
    covered[map.index(start)] = true;
    let mut cur = start;
    let mut plan = Vec::new();
    for target in serpentine_order(map) {
        if covered[map.index(target)] {
            continue;
        }
        let path = bfs_path(map, cur, target, &AXIS)
            .or_else(|| bfs_path(map, cur, target, &Heading::ALL))
            .ok_or(PlannerError::Unreachable(target.0, target.1))?;
        for h in path {
            let (dr, dc) = h.offset();
            cur = ((cur.0 as isize + dr) as usize, (cur.1 as isize + dc) as usize);
            covered[map.index(cur)] = true;
            plan.push(h);
        }
    }
    Ok(plan)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::CellKind;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn smallest_serpentine() {
        let plan = zigzag_plan(&GridMap::empty(2, 2)).unwrap();
        assert_eq!(plan, vec![Heading::E, Heading::S, Heading::W]);
    }

    #[test]
    fn five_by_five_moves() {
        assert_eq!(zigzag_plan(&GridMap::empty(5, 5)).unwrap().len(), 24);
    }

    #[test]
    fn random_keeps_heading_in_open_space() {
        let w = World::reset(GridMap::empty(5, 5), 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        assert_eq!(random_step(&w, &mut rng).unwrap(), Heading::E);
    }

    #[test]
    fn random_turn_is_seeded() {
        let mut w = World::reset(GridMap::empty(2, 2), 0).unwrap();
        w.step(Heading::E).unwrap();
        let a = random_step(&w, &mut ChaCha8Rng::seed_from_u64(42)).unwrap();
        let b = random_step(&w, &mut ChaCha8Rng::seed_from_u64(42)).unwrap();
        assert_eq!(a, b);
        assert!(w.map().neighbor(w.pos(), a).is_some());
    }

    #[test]
    fn boxed_in_is_trapped() {
        let mut cells = vec![CellKind::Obstacle; 9];
        cells[4] = CellKind::Free;
        let map = GridMap::new(3, 3, cells, None).unwrap();
        let w = World::reset(map, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(random_step(&w, &mut rng), Err(PlannerError::Trapped(1, 1)));
    }

    #[test]
    fn detours_around_obstacles() {
        // . . .
        // . # .
        // . . .
        let mut cells = vec![CellKind::Free; 9];
        cells[4] = CellKind::Obstacle;
        let map = GridMap::new(3, 3, cells, None).unwrap();
        let plan = zigzag_plan(&map).unwrap();
        let mut w = World::reset(map, 0).unwrap();
        for h in plan {
            w.step(h).unwrap();
        }
        assert!(w.is_done());
    }

    #[test]
    fn isolated_cell_is_unreachable() {
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
        assert_eq!(zigzag_plan(&map), Err(PlannerError::Unreachable(0, 2)));
    }
}
