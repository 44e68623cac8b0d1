//! Experiment harness: evaluation episodes, ablation and transfer runs,
//! algorithm comparison and the baseline table.
//!
//! Independent (variant, seed) runs execute on a rayon pool whose size comes
//! from `SWEEPRL_THREADS`. Each run owns its environment, RNGs and learner,
//! and results are gathered in input order, so outputs do not depend on the
//! thread count.

pub mod metrics;
pub mod plot;

use std::fmt;
use std::fs;
use std::io;
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::neural::{argmax, HeadKind, NeuralError, Network, Trace};
use crate::percept::{encode_into, ObservationConfig, ObservationMode};
use crate::planners::{random_step, zigzag_plan, PlannerError};
use crate::ppo::{self, PpoConfig, PpoError};
use crate::qlearn::{self, q_from_heads, DqnConfig, QlearnError};
use crate::seeding::{self, sub_seed};
use crate::shaping::{RewardShaper, ShapingConfig};
use crate::train::{TrainOptions, Variant};
use crate::world::{GridMap, Heading, Pos, World, WorldError};

pub use metrics::{tail_mean, to_csv, MetricsRecord, CSV_HEADER};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("policy expects {expected} inputs but this map yields {got} (trained on global observations?)")]
    ObservationMismatch { expected: usize, got: usize },
    #[error("policy was trained on global observations and cannot transfer to another map")]
    GlobalObservation,
    #[error("`{0}` is a scripted baseline and cannot be trained")]
    NotTrainable(Algo),
    #[error(transparent)]
    Planner(#[from] PlannerError),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Ppo(#[from] PpoError),
    #[error(transparent)]
    Qlearn(#[from] QlearnError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Anything that picks a heading from the current world.
pub trait Policy {
    /// Called once after each reset.
    fn begin(&mut self, _world: &World) -> Result<(), BenchError> {
        Ok(())
    }

    fn act(&mut self, world: &World) -> Result<Heading, BenchError>;
}

/// Argmax action of a trained network. Holds a shared borrow, so
/// evaluation cannot modify parameters.
pub struct GreedyNetwork<'a> {
    net: &'a Network,
    obs_cfg: ObservationConfig,
    obs: Vec<f64>,
    trace: Trace,
}

impl<'a> GreedyNetwork<'a> {
    pub fn new(net: &'a Network, obs_cfg: ObservationConfig) -> Self {
        Self {
            net,
            obs_cfg,
            obs: Vec::new(),
            trace: Trace::default(),
        }
    }
}

impl Policy for GreedyNetwork<'_> {
    fn begin(&mut self, world: &World) -> Result<(), BenchError> {
        let got = self.obs_cfg.len(world.map().width(), world.map().height());
        if got != self.net.input_len() {
            return Err(BenchError::ObservationMismatch {
                expected: self.net.input_len(),
                got,
            });
        }
        Ok(())
    }

    fn act(&mut self, world: &World) -> Result<Heading, BenchError> {
        encode_into(world, &self.obs_cfg, &mut self.obs);
        self.net.forward_into(&self.obs, &mut self.trace)?;
        let kind = self.net.architecture().kind;
        let scores = match kind {
            HeadKind::ActorCritic | HeadKind::Custom => self.trace.head(0).to_vec(),
            HeadKind::Q | HeadKind::Dueling => q_from_heads(kind, &self.trace)?,
        };
        Ok(Heading::from_index(argmax(&scores)))
    }
}

pub struct RandomPolicy {
    rng: ChaCha8Rng,
}

impl RandomPolicy {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(sub_seed(seed, seeding::PLANNER)),
        }
    }
}

impl Policy for RandomPolicy {
    fn act(&mut self, world: &World) -> Result<Heading, BenchError> {
        Ok(random_step(world, &mut self.rng)?)
    }
}

#[derive(Default)]
pub struct ZigzagPolicy {
    plan: Vec<Heading>,
    next: usize,
}

impl Policy for ZigzagPolicy {
    fn begin(&mut self, world: &World) -> Result<(), BenchError> {
        self.plan = zigzag_plan(world.map())?;
        self.next = 0;
        Ok(())
    }

    fn act(&mut self, world: &World) -> Result<Heading, BenchError> {
        let h = self.plan.get(self.next).copied().unwrap_or(world.heading());
        self.next += 1;
        Ok(h)
    }
}

/// Rolls one episode to completion or `step_cap`. Metrics use unshaped
/// quantities; the shaped total is reported alongside when `shaping` is set.
pub fn run_episode(
    policy: &mut dyn Policy,
    map: &GridMap,
    seed: u64,
    shaping: Option<ShapingConfig>,
    step_cap: usize,
) -> Result<(MetricsRecord, Vec<Pos>), BenchError> {
    let mut world = World::reset(map.clone(), sub_seed(seed, seeding::ENV))?;
    policy.begin(&world)?;
    let mut shaper = shaping.map(RewardShaper::new);
    let mut shaped_total = 0.0;
    let mut trajectory = vec![world.pos()];
    while !world.is_done() && world.steps() < step_cap {
        let action = policy.act(&world)?;
        let out = world.step(action)?;
        shaped_total += match shaper.as_mut() {
            Some(s) => s.shape(out.tile_reward, out.rotation_reward).shaped,
            None => out.base_reward(),
        };
        trajectory.push(out.new_pos);
    }
    Ok((MetricsRecord::from_world(0, &world, shaped_total, seed), trajectory))
}

/// Worker count from `SWEEPRL_THREADS`, defaulting to the machine's
/// available parallelism.
pub fn worker_threads() -> usize {
    std::env::var("SWEEPRL_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|n| *n > 0)
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        })
}

/// Order-preserving parallel map over independent jobs.
pub fn par_map<T, R, F>(items: Vec<T>, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Send + Sync,
{
    let threads = worker_threads();
    if threads <= 1 || items.len() <= 1 {
        return items.into_iter().map(f).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(pool) => pool.install(|| items.into_par_iter().map(&f).collect()),
        Err(_) => items.into_iter().map(f).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algo {
    Ppo,
    Dqn,
    Dueling,
    Random,
    Zigzag,
}

impl Algo {
    pub fn label(self) -> &'static str {
        match self {
            Algo::Ppo => "ppo",
            Algo::Dqn => "dqn",
            Algo::Dueling => "dueling",
            Algo::Random => "random",
            Algo::Zigzag => "zigzag",
        }
    }

    pub fn is_learner(self) -> bool {
        matches!(self, Algo::Ppo | Algo::Dqn | Algo::Dueling)
    }
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Algo {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [Algo::Ppo, Algo::Dqn, Algo::Dueling, Algo::Random, Algo::Zigzag]
            .into_iter()
            .find(|a| a.label() == s)
            .ok_or_else(|| format!("unknown algorithm `{s}`"))
    }
}

/// One training run of any learner.
#[derive(Debug, Clone)]
pub struct TrainedRun {
    pub algo: Algo,
    pub options: TrainOptions,
    pub net: Network,
    pub records: Vec<MetricsRecord>,
}

pub fn train_learner(
    algo: Algo,
    map: &GridMap,
    opts: &TrainOptions,
    ppo_cfg: &PpoConfig,
    dqn_cfg: &DqnConfig,
) -> Result<TrainedRun, BenchError> {
    let (net, records) = match algo {
        Algo::Ppo => {
            let t = ppo::train(map, opts, ppo_cfg, |_| {})?;
            (t.net, t.records)
        }
        Algo::Dqn | Algo::Dueling => {
            let cfg = DqnConfig {
                dueling: algo == Algo::Dueling,
                ..dqn_cfg.clone()
            };
            let t = qlearn::train(map, opts, &cfg, |_| {})?;
            (t.net, t.records)
        }
        Algo::Random | Algo::Zigzag => {
            return Err(BenchError::NotTrainable(algo))
        }
    };
    Ok(TrainedRun {
        algo,
        options: opts.clone(),
        net,
        records,
    })
}

/// Greedy evaluation of a trained network on another map.
pub fn run_transfer(
    net: &Network,
    obs_cfg: &ObservationConfig,
    map: &GridMap,
    step_cap: usize,
) -> Result<MetricsRecord, BenchError> {
    if obs_cfg.mode == ObservationMode::Global {
        return Err(BenchError::GlobalObservation);
    }
    let mut policy = GreedyNetwork::new(net, *obs_cfg);
    Ok(run_episode(&mut policy, map, 0, None, step_cap)?.0)
}

pub struct AblationRun {
    pub variant: Variant,
    pub seed: u64,
    pub net: Network,
    pub records: Vec<MetricsRecord>,
}

impl AblationRun {
    pub fn final_mean_steps(&self, window: usize) -> f64 {
        tail_mean(&self.records, window, |r| r.steps as f64)
    }
}

pub struct AblationReport {
    pub runs: Vec<AblationRun>,
    pub window: usize,
}

impl AblationReport {
    pub fn run(&self, variant: Variant, seed: u64) -> Option<&AblationRun> {
        self.runs
            .iter()
            .find(|r| r.variant == variant && r.seed == seed)
    }

    pub fn summary_csv(&self) -> String {
        let mut out = String::from("variant,seed,final_mean_steps,final_mean_coverage,final_mean_base_reward\n");
        for r in &self.runs {
            out.push_str(&format!(
                "{},{},{:.6},{:.6},{:.6}\n",
                r.variant,
                r.seed,
                r.final_mean_steps(self.window),
                tail_mean(&r.records, self.window, |m| m.coverage),
                tail_mean(&r.records, self.window, |m| m.base_reward),
            ));
        }
        out
    }

    /// Writes `<variant>_seed<seed>.csv` per run plus `summary.csv`.
    pub fn write(&self, dir: &Path) -> io::Result<()> {
        fs::create_dir_all(dir)?;
        for r in &self.runs {
            fs::write(
                dir.join(format!("{}_seed{}.csv", r.variant, r.seed)),
                to_csv(&r.records),
            )?;
        }
        fs::write(dir.join("summary.csv"), self.summary_csv())
    }
}

/// Trains every ablation variant on every seed.
pub fn run_ablation(
    map: &GridMap,
    variants: &[Variant],
    episodes: usize,
    seeds: &[u64],
    ppo_cfg: &PpoConfig,
    window: usize,
) -> Result<AblationReport, BenchError> {
    let jobs: Vec<(Variant, u64)> = variants
        .iter()
        .flat_map(|v| seeds.iter().map(move |s| (*v, *s)))
        .collect();
    let results = par_map(jobs, |(variant, seed)| {
        let opts = variant.options(episodes, seed);
        ppo::train(map, &opts, ppo_cfg, |_| {}).map(|t| AblationRun {
            variant,
            seed,
            net: t.net,
            records: t.records,
        })
    });
    let runs = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(AblationReport { runs, window })
}

/// First episode index at which the trailing `window`-episode mean base
/// reward reaches `threshold`.
pub fn episodes_to_threshold(records: &[MetricsRecord], window: usize, threshold: f64) -> Option<usize> {
    let mut acc = 0.0;
    for (i, r) in records.iter().enumerate() {
        acc += r.base_reward;
        if i >= window {
            acc -= records[i - window].base_reward;
        }
        if i + 1 >= window && acc / window as f64 >= threshold {
            return Some(i + 1);
        }
    }
    None
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub name: String,
    pub distance_m: f64,
    pub rotation_units: f64,
    pub steps: f64,
    pub coverage: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonReport {
    pub fn row(&self, name: &str) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("model,distance_m,rotation_units,steps,coverage\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{:.6},{:.6},{:.6},{:.6}\n",
                r.name, r.distance_m, r.rotation_units, r.steps, r.coverage
            ));
        }
        out
    }

    pub fn to_svg(&self) -> String {
        let names: Vec<&str> = self.rows.iter().map(|r| r.name.as_str()).collect();
        let metric = |f: fn(&ComparisonRow) -> f64| self.rows.iter().map(f).collect::<Vec<_>>();
        plot::bar_chart(
            "Travel distance and rotation",
            "value",
            &["distance (m)", "rotation (45° units)"],
            &names
                .iter()
                .enumerate()
                .map(|(i, n)| {
                    (
                        *n,
                        vec![
                            metric(|r| r.distance_m)[i],
                            metric(|r| r.rotation_units)[i],
                        ],
                    )
                })
                .collect::<Vec<_>>(),
        )
    }
}

fn row_from(name: &str, records: &[MetricsRecord]) -> ComparisonRow {
    let n = records.len() as f64;
    let mean = |f: fn(&MetricsRecord) -> f64| records.iter().map(f).sum::<f64>() / n;
    ComparisonRow {
        name: name.to_string(),
        distance_m: mean(|r| r.distance_m),
        rotation_units: mean(|r| r.rotation_units as f64),
        steps: mean(|r| r.steps as f64),
        coverage: mean(|r| r.coverage),
    }
}

/// Random (mean over seeds), Zigzag and, if given, the greedy learned policy.
pub fn compare_baselines(
    map: &GridMap,
    seeds: &[u64],
    learned: Option<(&Network, &ObservationConfig)>,
    random_cap: usize,
    learned_cap: usize,
) -> Result<ComparisonReport, BenchError> {
    let random: Vec<MetricsRecord> = par_map(seeds.to_vec(), |seed| {
        run_episode(&mut RandomPolicy::new(seed), map, seed, None, random_cap).map(|r| r.0)
    })
    .into_iter()
    .collect::<Result<_, _>>()?;
    let mut rows = vec![row_from("Random", &random)];
    let (zig, _) = run_episode(&mut ZigzagPolicy::default(), map, 0, None, usize::MAX)?;
    rows.push(row_from("Zigzag", &[zig]));
    if let Some((net, obs)) = learned {
        let rec = run_transfer(net, obs, map, learned_cap)?;
        rows.push(row_from("ALL(PPO)", &[rec]));
    }
    Ok(ComparisonReport { rows })
}
