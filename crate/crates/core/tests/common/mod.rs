//! Oracles shared by the integration test targets.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sweeprl::neural::{Architecture, Network, Trace};
use sweeprl::ppo::{ppo_loss, PpoConfig, Sample};
use sweeprl::qlearn::{dqn_loss, QTransition, TdLoss};
use sweeprl::world::{CellKind, GridMap, World};

/// All-sources relaxation to a fixpoint over 8-connected Free cells; then the
/// closest uncleaned cell, smallest (row, col) on ties. Returns (dr, dc, d).
pub fn dnut_oracle(world: &World) -> Option<(isize, isize, usize)> {
    if world.is_done() {
        return None;
    }
    let map = world.map();
    let (w, h) = (map.width() as isize, map.height() as isize);
    let free = |r: isize, c: isize| r >= 0 && c >= 0 && r < h && c < w && map.is_free(r, c);
    let inf = usize::MAX / 2;
    let mut dist = vec![vec![inf; w as usize]; h as usize];
    let (r0, c0) = world.pos();
    dist[r0][c0] = 0;
    let mut changed = true;
    while changed {
        changed = false;
        for r in 0..h {
            for c in 0..w {
                if !free(r, c) {
                    continue;
                }
                for dr in -1..=1 {
                    for dc in -1..=1 {
                        let (pr, pc) = (r + dr, c + dc);
                        if (dr, dc) == (0, 0) || !free(pr, pc) {
                            continue;
                        }
                        let via = dist[pr as usize][pc as usize] + 1;
                        if via < dist[r as usize][c as usize] {
                            dist[r as usize][c as usize] = via;
                            changed = true;
                        }
                    }
                }
            }
        }
    }
    let mut best: Option<(usize, usize, usize)> = None;
    for r in 0..h as usize {
        for c in 0..w as usize {
            if !free(r as isize, c as isize) || world.is_cleaned((r, c)) || dist[r][c] >= inf {
                continue;
            }
            if best.is_none_or(|(d, _, _)| dist[r][c] < d) {
                best = Some((dist[r][c], r, c));
            }
        }
    }
    best.map(|(d, r, c)| (r as isize - r0 as isize, c as isize - c0 as isize, d))
}

/// Random map up to `max × max` with at least one Free cell.
pub fn random_map(rng: &mut impl Rng, max: usize) -> GridMap {
    loop {
        let w = rng.gen_range(2..=max);
        let h = rng.gen_range(2..=max);
        let density = rng.gen_range(0.0..0.4);
        let cells: Vec<CellKind> = (0..w * h)
            .map(|_| {
                if rng.gen_bool(density) {
                    CellKind::Obstacle
                } else {
                    CellKind::Free
                }
            })
            .collect();
        let map = GridMap::new(w, h, cells, None).unwrap();
        if map.validate().is_ok() {
            return map;
        }
    }
}

pub const FD_STEP: f64 = 1e-5;

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

pub fn perturbed_net(arch: Architecture, seed: u64) -> Network {
    let mut net = Network::new(arch, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcdef);
    for p in net.params_mut() {
        *p += rng.gen_range(-0.3..0.3);
    }
    net
}

/// Worst relative error between `analytic` and central differences of
/// `loss` over `coords` random coordinates.
pub fn fd_worst(net: &Network, analytic: &[f64], loss: impl Fn(&Network) -> f64, coords: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mut probe = net.clone();
    for _ in 0..coords {
        let i = rng.gen_range(0..net.param_count());
        let orig = probe.params()[i];
        probe.params_mut()[i] = orig + FD_STEP;
        let up = loss(&probe);
        probe.params_mut()[i] = orig - FD_STEP;
        let down = loss(&probe);
        probe.params_mut()[i] = orig;
        worst = worst.max(rel_err(analytic[i], (up - down) / (2.0 * FD_STEP)));
    }
    worst
}

fn random_obs(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// Full PPO loss on a random 19→8 actor-critic and random batch.
/// Returns (worst relative error, clip fraction of the batch).
pub fn ppo_fd_case(seed: u64, coords: usize) -> (f64, f64) {
    let net = perturbed_net(Architecture::actor_critic(19, &[8], 8), seed);
    let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
    let obs: Vec<Vec<f64>> = (0..16).map(|_| random_obs(&mut rng, 19)).collect();
    // Old log-probs away from the current ones put some samples on the
    // clipped branch.
    let samples: Vec<Sample> = obs
        .iter()
        .map(|o| Sample {
            obs: o,
            action: rng.gen_range(0..8),
            log_prob_old: -2.08 + rng.gen_range(-0.6..0.6),
            advantage: rng.gen_range(-2.0..2.0),
            ret: rng.gen_range(-3.0..3.0),
        })
        .collect();
    let cfg = PpoConfig::default();
    let mut grads = vec![0.0; net.param_count()];
    let terms = ppo_loss(&net, &samples, &cfg, Some(&mut grads), &mut Trace::default()).unwrap();
    let worst = fd_worst(
        &net,
        &grads,
        |n| ppo_loss(n, &samples, &cfg, None, &mut Trace::default()).unwrap().total,
        coords,
        seed,
    );
    (worst, terms.clip_fraction)
}

/// Mean TD loss on a random network pair and batch. Returns the worst
/// relative error.
pub fn dqn_fd_case(arch: Architecture, kind: TdLoss, seed: u64, coords: usize) -> f64 {
    let online = perturbed_net(arch.clone(), seed);
    let target = perturbed_net(arch, seed + 50);
    let mut rng = ChaCha8Rng::seed_from_u64(200 + seed);
    let owned: Vec<QTransition> = (0..24)
        .map(|i| QTransition {
            obs: random_obs(&mut rng, 19),
            action: rng.gen_range(0..8),
            reward: rng.gen_range(-2.0..1.0) * if i % 3 == 0 { 4.0 } else { 1.0 },
            next_obs: random_obs(&mut rng, 19),
            done: i % 5 == 0,
        })
        .collect();
    let batch: Vec<&QTransition> = owned.iter().collect();
    let mut grads = vec![0.0; online.param_count()];
    dqn_loss(&online, &target, &batch, 0.99, kind, Some(&mut grads)).unwrap();
    fd_worst(
        &online,
        &grads,
        |n| dqn_loss(n, &target, &batch, 0.99, kind, None).unwrap(),
        coords,
        seed,
    )
}
