//! Acceptance criteria, one test per criterion.
//!
//! Each test writes a single `criterion N: PASS|FAIL ...` line straight to
//! stderr (bypassing the test harness capture) and then asserts. Criteria 10
//! and 12 train dozens of agents and are ignored by default; run them with
//!
//! ```text
//! cargo test --release -p sweeprl --test acceptance -- --ignored
//! ```

mod common;

use std::fs;
use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{dnut_oracle, dqn_fd_case, ppo_fd_case, random_map};
use sweeprl::bench::{
    compare_baselines, episodes_to_threshold, par_map, run_ablation, run_episode, run_transfer,
    train_learner, Algo, GreedyNetwork, MetricsRecord, ZigzagPolicy,
};
use sweeprl::config::RunConfig;
use sweeprl::neural::{Architecture, Network};
use sweeprl::percept::{encode, nearest_uncleaned, ObservationConfig, LOCAL_LEN};
use sweeprl::ppo::{clipped_term, PpoConfig};
use sweeprl::qlearn::{DqnConfig, TdLoss};
use sweeprl::shaping::{shaped_step, StackState};
use sweeprl::train::{TrainOptions, Variant};
use sweeprl::world::{GridMap, Heading, World};

fn report(id: u32, pass: bool, detail: impl AsRef<str>) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let line = format!("criterion {id:>2}: {verdict}  {}\n", detail.as_ref());
    let _ = std::io::stderr().write_all(line.as_bytes());
    assert!(pass, "criterion {id} failed: {}", detail.as_ref());
}

// ---------------------------------------------------------------- 1

/// Shorter-arc 45° units between two compass angles.
fn arc_units(a: usize, b: usize) -> f64 {
    let diff = ((a as i64 - b as i64) * 45).rem_euclid(360);
    diff.min(360 - diff) as f64 / 45.0
}

#[test]
fn criterion_01_reward_arithmetic() {
    // 3x3 room, start in the middle; the first move puts the robot on the
    // border so the second move can hit a wall, a cleaned or an uncleaned tile.
    let map = GridMap::new(3, 3, vec![sweeprl::CellKind::Free; 9], Some((1, 1))).unwrap();
    let mut seen = [false; 3];
    let mut mismatches = 0;
    for h0 in 0..8 {
        for h1 in 0..8 {
            let mut w = World::reset(map.clone(), 0).unwrap();
            w.step(Heading::from_index(h0)).unwrap();
            let (r, c) = w.pos();
            let (dr, dc) = Heading::from_index(h1).offset();
            let (tr, tc) = (r as isize + dr, c as isize + dc);
            let want_tile = if !(0..3).contains(&tr) || !(0..3).contains(&tc) {
                seen[2] = true;
                -2.0
            } else if (tr, tc) == (1, 1) {
                seen[1] = true;
                -1.0
            } else {
                seen[0] = true;
                0.0
            };
            let out = w.step(Heading::from_index(h1)).unwrap();
            let want_rot = -0.5 * arc_units(h0, h1);
            if out.tile_reward != want_tile || out.rotation_reward != want_rot {
                mismatches += 1;
            }
        }
    }
    let reverse = World::reset(map.clone(), 0)
        .map(|mut w| {
            w.step(Heading::S).unwrap();
            w.step(Heading::N).unwrap().rotation_reward
        })
        .unwrap();
    report(
        1,
        mismatches == 0 && seen == [true; 3] && reverse == -2.0,
        format!("64 heading pairs x 3 tile states, {mismatches} mismatches, 180 deg turn = {reverse}"),
    );
}

// ---------------------------------------------------------------- 2

#[test]
fn criterion_02_shaping_arithmetic() {
    let mut s = StackState::new(1.5);
    let mut bonus = 0.0;
    for _ in 0..3 {
        let out = shaped_step(s, 0.0, 0.0, false);
        bonus += out.bonus;
        s = out.stack;
    }
    let mut s = StackState::new(1.5);
    let mut tile_total = 0.0;
    for _ in 0..3 {
        let out = shaped_step(s, -1.0, 0.0, false);
        tile_total += out.shaped;
        s = out.stack;
    }
    report(
        2,
        (bonus - 7.125).abs() <= 1e-12 && tile_total.abs() <= 1e-12,
        format!("bonus over three non-negative steps = {bonus}, shaped total of three -1 steps = {tile_total}"),
    );
}

// ---------------------------------------------------------------- 3

#[test]
fn criterion_03_clipping_table() {
    let table = [
        ((1.0, 2.0, 0.2), 2.0),
        ((1.5, 1.0, 0.2), 1.2),
        ((0.5, -1.0, 0.2), -0.8),
    ];
    let table_ok = table
        .iter()
        .all(|((r, a, e), want)| (clipped_term(*r, *a, *e) - want).abs() <= 1e-12);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut violations = 0;
    for _ in 0..10_000 {
        let r: f64 = rng.gen_range(0.0..3.0);
        let a: f64 = rng.gen_range(-5.0..5.0);
        let e: f64 = rng.gen_range(0.01..0.5);
        let c = clipped_term(r, a, e);
        let unclipped = r * a;
        let clipped = r.clamp(1.0 - e, 1.0 + e) * a;
        if c > unclipped || c > clipped || (c != unclipped && c != clipped) {
            violations += 1;
        }
    }
    report(
        3,
        table_ok && violations == 0,
        format!("table rows {}, min-bound violations {violations}/10000", if table_ok { "match" } else { "differ" }),
    );
}

// ---------------------------------------------------------------- 4

#[test]
fn criterion_04_gradient_correctness() {
    let (ppo, clip) = ppo_fd_case(4, 100);
    let dqn = dqn_fd_case(Architecture::q(19, &[8], 8), TdLoss::Huber, 4, 100);
    report(
        4,
        ppo <= 1e-5 && dqn <= 1e-5 && clip > 0.0,
        format!("worst relative error: PPO loss {ppo:.2e}, DQN Huber {dqn:.2e} (100 coordinates each)"),
    );
}

// ---------------------------------------------------------------- 5

#[test]
fn criterion_05_observation_size() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut bad = 0;
    for _ in 0..200 {
        let (w, h) = (rng.gen_range(3..=50), rng.gen_range(3..=50));
        let world = World::reset(GridMap::empty(w, h), 0).unwrap();
        if encode(&world, &ObservationConfig::default()).len() != LOCAL_LEN
            || encode(&world, &ObservationConfig::global()).len() != w * h * 3
        {
            bad += 1;
        }
    }
    let g5 = encode(&World::reset(GridMap::empty(5, 5), 0).unwrap(), &ObservationConfig::global()).len();
    report(
        5,
        bad == 0 && LOCAL_LEN == 19 && g5 == 75,
        format!("local length {LOCAL_LEN} on 200 random sizes ({bad} off), global 5x5 = {g5}"),
    );
}

// ---------------------------------------------------------------- 6

#[test]
fn criterion_06_dnut_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut states, mut mismatches) = (0, 0);
    for _ in 0..200 {
        let mut world = World::reset(random_map(&mut rng, 10), 0).unwrap();
        for _ in 0..rng.gen_range(1..40) {
            let got = nearest_uncleaned(&world).map(|n| (n.dr, n.dc, n.distance));
            if got != dnut_oracle(&world) {
                mismatches += 1;
            }
            states += 1;
            if world.is_done() {
                break;
            }
            world.step(Heading::from_index(rng.gen_range(0..8))).unwrap();
        }
    }
    report(
        6,
        mismatches == 0,
        format!("200 maps, {states} states, {mismatches} disagreements with brute force"),
    );
}

// ---------------------------------------------------------------- 7

#[test]
fn criterion_07_zigzag_constants() {
    let (m, _) = run_episode(&mut ZigzagPolicy::default(), &GridMap::empty(20, 20), 0, None, usize::MAX).unwrap();
    report(
        7,
        m.steps == 399 && m.distance_m == 199.5 && m.rotation_units == 76 && m.coverage == 1.0,
        format!(
            "20x20 zigzag: {} moves, {} m, {} rotation units, coverage {}",
            m.steps, m.distance_m, m.rotation_units, m.coverage
        ),
    );
}

// ---------------------------------------------------------------- 8

#[test]
fn criterion_08_random_vs_zigzag() {
    let seeds: Vec<u64> = (0..10).collect();
    let cap = RunConfig::default().random_cap;
    let report_rows = compare_baselines(&GridMap::empty(20, 20), &seeds, None, cap, 0).unwrap();
    let random = report_rows.row("Random").unwrap().distance_m;
    let zigzag = report_rows.row("Zigzag").unwrap().distance_m;
    report(
        8,
        random > 20.0 * zigzag,
        format!(
            "mean Random distance {random:.1} m vs Zigzag {zigzag:.1} m, ratio {:.1} (Random cap {cap} steps)",
            random / zigzag
        ),
    );
}

// ---------------------------------------------------------------- 9, 11

const TRAIN_SEEDS: [u64; 5] = [0, 1, 2, 3, 4];
/// Frozen after a five-seed pilot that reached the 24-step optimum on every seed.
const DESK_MEDIAN_STEPS: f64 = 35.0;

fn all_ppo_policies() -> &'static Vec<Network> {
    static NETS: OnceLock<Vec<Network>> = OnceLock::new();
    NETS.get_or_init(|| {
        let map = GridMap::empty(5, 5);
        par_map(TRAIN_SEEDS.to_vec(), |seed| {
            train_learner(Algo::Ppo, &map, &Variant::All.options(10_000, seed), &PpoConfig::default(), &DqnConfig::default())
                .unwrap()
                .net
        })
    })
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

#[test]
fn criterion_09_desk_scale_training() {
    let map = GridMap::empty(5, 5);
    let evals: Vec<MetricsRecord> = all_ppo_policies()
        .iter()
        .map(|net| {
            let mut policy = GreedyNetwork::new(net, ObservationConfig::default());
            run_episode(&mut policy, &map, 0, None, 500).unwrap().0
        })
        .collect();
    let steps: Vec<f64> = evals.iter().map(|m| m.steps as f64).collect();
    let med = median(steps.clone());
    let full = evals.iter().filter(|m| m.coverage == 1.0).count();
    report(
        9,
        med <= DESK_MEDIAN_STEPS && full >= 4,
        format!("greedy 5x5 steps per seed {steps:?}, median {med} (limit {DESK_MEDIAN_STEPS}), full coverage on {full}/5"),
    );
}

#[test]
fn criterion_11_transfer() {
    let map = GridMap::empty(20, 20);
    let coverage: Vec<f64> = all_ppo_policies()
        .iter()
        .map(|net| run_transfer(net, &ObservationConfig::default(), &map, 3_000).unwrap().coverage)
        .collect();
    let good = coverage.iter().filter(|c| **c >= 0.95).count();
    report(
        11,
        good >= 4,
        format!("20x20 coverage within 3000 steps per seed {coverage:?}, {good}/5 at or above 0.95"),
    );
}

// ---------------------------------------------------------------- 10

#[test]
#[ignore = "slow: trains 25 agents for 10 000 episodes each"]
fn criterion_10_ablation_ordering() {
    let report_runs = run_ablation(
        &GridMap::empty(5, 5),
        &Variant::ABLATION,
        10_000,
        &TRAIN_SEEDS,
        &PpoConfig::default(),
        500,
    )
    .unwrap();
    let mut ok_seeds = 0;
    let mut rows = Vec::new();
    for seed in TRAIN_SEEDS {
        let f = |v: Variant| report_runs.run(v, seed).unwrap().final_mean_steps(500);
        let all = f(Variant::All);
        let ablated = [f(Variant::NoDnut), f(Variant::NoRs), f(Variant::NoEs)];
        let plain = f(Variant::Plain);
        let all_best = ablated.iter().all(|a| all <= *a);
        let plain_worst = plain >= all && ablated.iter().all(|a| plain >= *a);
        if all_best && plain_worst {
            ok_seeds += 1;
        }
        rows.push(format!(
            "seed {seed}: all {all:.2} no-dnut {:.2} no-rs {:.2} no-es {:.2} plain {plain:.2}",
            ablated[0], ablated[1], ablated[2]
        ));
    }
    report(
        10,
        ok_seeds >= 4,
        format!("ordering holds on {ok_seeds}/5 seeds; {}", rows.join("; ")),
    );
}

// ---------------------------------------------------------------- 12

/// Trailing-window mean base reward that counts as "learned" on 5x5.
const REWARD_THRESHOLD: f64 = -30.0;
const THRESHOLD_WINDOW: usize = 100;
const COMPARISON_BUDGET: usize = 2_000;

fn comparison_options(seed: u64, obs: ObservationConfig) -> TrainOptions {
    TrainOptions {
        episodes: COMPARISON_BUDGET,
        seed,
        obs,
        shaping: None,
        elite: None,
        safety_cap: 500,
    }
}

fn episodes_needed(algo: Algo, size: usize, obs: ObservationConfig, seed: u64) -> Option<usize> {
    let run = train_learner(
        algo,
        &GridMap::empty(size, size),
        &comparison_options(seed, obs),
        &PpoConfig::default(),
        &DqnConfig::default(),
    )
    .unwrap();
    episodes_to_threshold(&run.records, THRESHOLD_WINDOW, REWARD_THRESHOLD)
}

#[test]
#[ignore = "slow: trains PPO and DQN on 5x5 and PPO on 7x7 for five seeds"]
fn criterion_12_algorithms_and_scaling() {
    let global = ObservationConfig::global();
    let local = ObservationConfig::default();
    let jobs: Vec<(Algo, usize, ObservationConfig, u64)> = TRAIN_SEEDS
        .iter()
        .flat_map(|&s| {
            [
                (Algo::Ppo, 5, global, s),
                (Algo::Dqn, 5, global, s),
                (Algo::Ppo, 7, global, s),
                (Algo::Ppo, 7, local, s),
            ]
        })
        .collect();
    let results = par_map(jobs, |(algo, size, obs, seed)| episodes_needed(algo, size, obs, seed));
    let show = |x: Option<usize>| x.map_or("never".to_string(), |n| n.to_string());
    let (mut ppo_faster, mut scaling) = (0, 0);
    let mut rows = Vec::new();
    for (i, chunk) in results.chunks(4).enumerate() {
        let budget = COMPARISON_BUDGET + 1;
        let (ppo5, dqn5, g7, l7) = (chunk[0], chunk[1], chunk[2], chunk[3]);
        if ppo5.is_some() && ppo5.unwrap_or(budget) < dqn5.unwrap_or(budget) {
            ppo_faster += 1;
        }
        if g7.is_none() && l7.is_some() {
            scaling += 1;
        }
        rows.push(format!(
            "seed {i}: ppo {} dqn {} | 7x7 global {} local {}",
            show(ppo5),
            show(dqn5),
            show(g7),
            show(l7)
        ));
    }
    report(
        12,
        ppo_faster >= 4 && scaling >= 4,
        format!(
            "PPO faster than DQN on {ppo_faster}/5, 7x7 global fails while local learns on {scaling}/5 \
             (threshold {REWARD_THRESHOLD} over {THRESHOLD_WINDOW} episodes, budget {COMPARISON_BUDGET}); {}",
            rows.join("; ")
        ),
    );
}

// ---------------------------------------------------------------- 13

#[test]
fn criterion_13_cli_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let map = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../maps/room5.txt");
    let train = |out: &Path| {
        let status = Command::new(env!("CARGO_BIN_EXE_sweeprl"))
            .env("SWEEPRL_THREADS", "1")
            .args(["train", "--algo", "ppo", "--episodes", "10000", "--seed", "0"])
            .arg("--map")
            .arg(&map)
            .arg("--out")
            .arg(out)
            .output()
            .unwrap();
        assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    };
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    train(&a);
    train(&b);
    let same = |f: &str| fs::read(a.join(f)).unwrap() == fs::read(b.join(f)).unwrap();
    let (csv, policy) = (same("metrics.csv"), same("policy.sweeprl"));
    report(
        13,
        csv && policy,
        format!("two 10 000-episode train runs: metrics.csv identical {csv}, policy.sweeprl identical {policy}"),
    );
}
