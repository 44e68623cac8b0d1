//! Value-based learners: DQN with replay memory and a target network, and
//! its dueling variant.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bench::metrics::MetricsRecord;
use crate::neural::{
    argmax, clip_grad_norm, Adam, AdamConfig, Architecture, HeadKind, NeuralError, Network, Trace,
};
use crate::percept::encode_into;
use crate::seeding::{self, sub_seed};
use crate::shaping::{elite_filter, RewardShaper};
use crate::train::TrainOptions;
use crate::world::{GridMap, Heading, World, WorldError};

#[derive(Debug, Error)]
pub enum QlearnError {
    #[error("replay memory holds {have} transitions, batch needs {need}")]
    InsufficientSamples { have: usize, need: usize },
    #[error("network head layout `{0}` cannot produce Q-values")]
    NotAQNetwork(&'static str),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    World(#[from] WorldError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TdLoss {
    Huber,
    Squared,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DqnConfig {
    pub gamma: f64,
    pub lr: f64,
    pub batch: usize,
    pub capacity: usize,
    pub sync_period: usize,
    pub eps_start: f64,
    pub eps_end: f64,
    pub eps_decay_steps: usize,
    /// Environment steps between gradient updates.
    pub train_every: usize,
    pub loss: TdLoss,
    pub dueling: bool,
    pub max_grad_norm: f64,
    pub hidden: Vec<usize>,
}

impl Default for DqnConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            lr: 1e-3,
            batch: 64,
            capacity: 50_000,
            sync_period: 1_000,
            eps_start: 1.0,
            eps_end: 0.05,
            eps_decay_steps: 20_000,
            train_every: 4,
            loss: TdLoss::Huber,
            dueling: false,
            max_grad_norm: 10.0,
            hidden: vec![64, 64],
        }
    }
}

impl DqnConfig {
    /// Linearly annealed exploration rate after `step` environment steps.
    pub fn epsilon(&self, step: usize) -> f64 {
        if step >= self.eps_decay_steps {
            return self.eps_end;
        }
        let frac = step as f64 / self.eps_decay_steps as f64;
        self.eps_start + (self.eps_end - self.eps_start) * frac
    }
}

/// `r + γ·max_a' Q(s', a')`, with the bootstrap masked on terminal steps.
pub fn td_target(r: f64, q_next_max: f64, gamma: f64, done: bool) -> f64 {
    if done {
        r
    } else {
        r + gamma * q_next_max
    }
}

/// `Q_k = v + a_k − mean(a)`.
pub fn dueling_merge(v: f64, advantages: &[f64]) -> Vec<f64> {
    let mean = advantages.iter().sum::<f64>() / advantages.len() as f64;
    advantages.iter().map(|a| v + a - mean).collect()
}

/// Q-values from the heads of a Q or dueling network.
pub fn q_from_heads(kind: HeadKind, trace: &Trace) -> Result<Vec<f64>, QlearnError> {
    match kind {
        HeadKind::Q => Ok(trace.head(0).to_vec()),
        HeadKind::Dueling => Ok(dueling_merge(trace.head(0)[0], trace.head(1))),
        other => Err(QlearnError::NotAQNetwork(other.as_str())),
    }
}

pub fn q_values(net: &Network, obs: &[f64]) -> Result<Vec<f64>, QlearnError> {
    let trace = net.forward(obs)?;
    q_from_heads(net.architecture().kind, &trace)
}

#[derive(Debug, Clone, PartialEq)]
pub struct QTransition {
    pub obs: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next_obs: Vec<f64>,
    pub done: bool,
}

/// Fixed-capacity ring buffer with uniform sampling.
#[derive(Debug, Clone)]
pub struct ReplayMemory {
    capacity: usize,
    items: Vec<QTransition>,
    next: usize,
    rng: ChaCha8Rng,
}

impl ReplayMemory {
    pub fn new(capacity: usize, seed: u64) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            items: Vec::with_capacity(capacity.min(4096)),
            next: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn push(&mut self, t: QTransition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn get(&self, i: usize) -> &QTransition {
        &self.items[i]
    }

    /// `n` indices drawn uniformly with replacement.
    pub fn sample_indices(&mut self, n: usize) -> Vec<usize> {
        let len = self.items.len();
        (0..n).map(|_| self.rng.gen_range(0..len)).collect()
    }
}

/// Frozen copy of the online network, refreshed every `sync_period` steps.
#[derive(Debug, Clone)]
pub struct TargetNet {
    pub net: Network,
    pub sync_period: usize,
    since_sync: usize,
}

impl TargetNet {
    pub fn new(online: &Network, sync_period: usize) -> Self {
        Self {
            net: online.clone(),
            sync_period,
            since_sync: 0,
        }
    }

    pub fn sync(&mut self, online: &Network) {
        self.net.params_mut().copy_from_slice(online.params());
        self.since_sync = 0;
    }

    /// Counts one step; syncs when the period elapses. Returns true on sync.
    pub fn tick(&mut self, online: &Network) -> bool {
        self.since_sync += 1;
        if self.since_sync >= self.sync_period {
            self.sync(online);
            true
        } else {
            false
        }
    }
}

fn td_loss_and_slope(kind: TdLoss, err: f64) -> (f64, f64) {
    match kind {
        TdLoss::Huber => {
            if err.abs() <= 1.0 {
                (0.5 * err * err, err)
            } else {
                (err.abs() - 0.5, err.signum())
            }
        }
        TdLoss::Squared => (err * err, 2.0 * err),
    }
}

/// Mean TD loss over `batch` with targets from `target`. When `grads` is
/// given, the exact gradient w.r.t. `online` is accumulated into it.
pub fn dqn_loss(
    online: &Network,
    target: &Network,
    batch: &[&QTransition],
    gamma: f64,
    kind: TdLoss,
    mut grads: Option<&mut [f64]>,
) -> Result<f64, QlearnError> {
    let n = batch.len() as f64;
    let head_kind = online.architecture().kind;
    let mut trace = Trace::default();
    let mut loss = 0.0;
    for t in batch {
        let y = if t.done {
            t.reward
        } else {
            target.forward_into(&t.next_obs, &mut trace)?;
            let q_next = q_from_heads(head_kind, &trace)?;
            td_target(t.reward, q_next[argmax(&q_next)], gamma, false)
        };
        online.forward_into(&t.obs, &mut trace)?;
        let q = q_from_heads(head_kind, &trace)?;
        let (l, slope) = td_loss_and_slope(kind, q[t.action] - y);
        loss += l / n;
        if let Some(g) = grads.as_deref_mut() {
            let dq = slope / n;
            let k = q.len();
            match head_kind {
                HeadKind::Q => {
                    let mut gq = vec![0.0; k];
                    gq[t.action] = dq;
                    online.backward(&mut trace, &[&gq], g)?;
                }
                HeadKind::Dueling => {
                    let ga: Vec<f64> = (0..k)
                        .map(|j| {
                            let onehot = if j == t.action { 1.0 } else { 0.0 };
                            dq * (onehot - 1.0 / k as f64)
                        })
                        .collect();
                    online.backward(&mut trace, &[&[dq], &ga], g)?;
                }
                other => return Err(QlearnError::NotAQNetwork(other.as_str())),
            }
        }
    }
    Ok(loss)
}

/// One Adam step on a uniformly sampled minibatch.
pub fn dqn_update(
    online: &mut Network,
    adam: &mut Adam,
    target: &TargetNet,
    memory: &mut ReplayMemory,
    cfg: &DqnConfig,
) -> Result<f64, QlearnError> {
    if memory.len() < cfg.batch {
        return Err(QlearnError::InsufficientSamples {
            have: memory.len(),
            need: cfg.batch,
        });
    }
    let idx = memory.sample_indices(cfg.batch);
    let batch: Vec<&QTransition> = idx.iter().map(|&i| memory.get(i)).collect();
    let mut grads = vec![0.0; online.param_count()];
    let loss = dqn_loss(online, &target.net, &batch, cfg.gamma, cfg.loss, Some(&mut grads))?;
    if cfg.max_grad_norm > 0.0 {
        clip_grad_norm(&mut grads, cfg.max_grad_norm);
    }
    adam.step(online.params_mut(), &grads)?;
    Ok(loss)
}

pub fn q_architecture(input: usize, cfg: &DqnConfig) -> Architecture {
    if cfg.dueling {
        Architecture::dueling(input, &cfg.hidden, Heading::COUNT)
    } else {
        Architecture::q(input, &cfg.hidden, Heading::COUNT)
    }
}

#[derive(Debug, Clone)]
pub struct TrainedDqn {
    pub net: Network,
    pub records: Vec<MetricsRecord>,
    pub updates: usize,
}

/// ε-greedy DQN training on `map`. Transitions of an episode enter replay
/// memory when the episode ends, and only if the elite filter keeps it.
pub fn train(
    map: &GridMap,
    opts: &TrainOptions,
    cfg: &DqnConfig,
    mut on_episode: impl FnMut(&MetricsRecord),
) -> Result<TrainedDqn, QlearnError> {
    let input = opts.obs.len(map.width(), map.height());
    let mut online = Network::new(q_architecture(input, cfg), sub_seed(opts.seed, seeding::INIT));
    let mut target = TargetNet::new(&online, cfg.sync_period);
    let mut adam = Adam::new(
        AdamConfig {
            lr: cfg.lr,
            ..Default::default()
        },
        online.param_count(),
    );
    let mut memory = ReplayMemory::new(cfg.capacity, sub_seed(opts.seed, seeding::MINIBATCH));
    let mut explore = ChaCha8Rng::seed_from_u64(sub_seed(opts.seed, seeding::EXPLORATION));
    let env_seed = sub_seed(opts.seed, seeding::ENV);
    let mut world = World::reset(map.clone(), env_seed)?;
    let mut shaper = opts.shaping.map(RewardShaper::new);
    let cap = opts.episode_cap();
    let kind = online.architecture().kind;

    let mut records = Vec::with_capacity(opts.episodes);
    let mut total_steps = 0usize;
    let mut updates = 0usize;
    let mut trace = Trace::default();
    let mut obs = Vec::new();
    let mut next_obs = Vec::new();

    for ep_index in 0..opts.episodes {
        world.restart(env_seed);
        if let Some(s) = shaper.as_mut() {
            s.reset();
        }
        let mut pending = Vec::new();
        let mut shaped_total = 0.0;
        encode_into(&world, &opts.obs, &mut obs);
        while !world.is_done() && world.steps() < cap {
            let action = if explore.gen::<f64>() < cfg.epsilon(total_steps) {
                explore.gen_range(0..Heading::COUNT)
            } else {
                online.forward_into(&obs, &mut trace)?;
                argmax(&q_from_heads(kind, &trace)?)
            };
            let out = world.step(Heading::from_index(action))?;
            let reward = match shaper.as_mut() {
                Some(s) => s.shape(out.tile_reward, out.rotation_reward).shaped,
                None => out.base_reward(),
            };
            shaped_total += reward;
            encode_into(&world, &opts.obs, &mut next_obs);
            pending.push(QTransition {
                obs: obs.clone(),
                action,
                reward,
                next_obs: next_obs.clone(),
                done: out.done,
            });
            std::mem::swap(&mut obs, &mut next_obs);
            total_steps += 1;

            if total_steps.is_multiple_of(cfg.train_every) && memory.len() >= cfg.batch {
                dqn_update(&mut online, &mut adam, &target, &mut memory, cfg)?;
                updates += 1;
            }
            target.tick(&online);
        }
        let kept = match opts.elite {
            Some(e) => elite_filter(world.steps(), world.is_done(), e.episode_cap).kept,
            None => true,
        };
        if kept {
            pending.into_iter().for_each(|t| memory.push(t));
        }
        let record = MetricsRecord::from_world(ep_index, &world, shaped_total, opts.seed);
        on_episode(&record);
        records.push(record);
    }
    Ok(TrainedDqn {
        net: online,
        records,
        updates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn td_target_examples() {
        assert_eq!(td_target(1.5, 7.0, 0.0, false), 1.5);
        assert!((td_target(1.0, 2.0, 0.9, false) - 2.8).abs() < 1e-12);
        assert_eq!(td_target(-1.0, 100.0, 0.99, true), -1.0);
    }

    #[test]
    fn dueling_examples() {
        assert_eq!(dueling_merge(0.7, &[0.3; 8]), vec![0.7; 8]);
        let mut a = [0.0; 8];
        a[0] = 1.0;
        let q = dueling_merge(1.0, &a);
        assert!((q[0] - 1.875).abs() < 1e-12);
        for qk in &q[1..] {
            assert!((qk - 0.875).abs() < 1e-12);
        }
    }

    #[test]
    fn insufficient_samples() {
        let cfg = DqnConfig::default();
        let mut net = Network::new(q_architecture(4, &cfg), 0);
        let target = TargetNet::new(&net, 10);
        let mut adam = Adam::new(AdamConfig::default(), net.param_count());
        let mut mem = ReplayMemory::new(100, 0);
        mem.push(QTransition {
            obs: vec![0.0; 4],
            action: 0,
            reward: 0.0,
            next_obs: vec![0.0; 4],
            done: true,
        });
        assert!(matches!(
            dqn_update(&mut net, &mut adam, &target, &mut mem, &cfg),
            Err(QlearnError::InsufficientSamples { have: 1, need: 64 })
        ));
    }

    #[test]
    fn target_sync_schedule() {
        let cfg = DqnConfig::default();
        let mut online = Network::new(q_architecture(3, &cfg), 1);
        let mut target = TargetNet::new(&online, 3);
        online.params_mut()[0] += 1.0;
        assert!(!target.tick(&online));
        assert!(!target.tick(&online));
        assert_ne!(target.net.params(), online.params());
        assert!(target.tick(&online));
        assert_eq!(target.net.params(), online.params());
    }

    #[test]
    fn ring_buffer_overwrites_oldest() {
        let mut mem = ReplayMemory::new(2, 0);
        for r in 0..3 {
            mem.push(QTransition {
                obs: vec![],
                action: 0,
                reward: r as f64,
                next_obs: vec![],
                done: true,
            });
        }
        assert_eq!(mem.len(), 2);
        assert_eq!(mem.get(0).reward, 2.0);
        assert_eq!(mem.get(1).reward, 1.0);
    }

    #[test]
    fn epsilon_schedule() {
        let cfg = DqnConfig::default();
        assert_eq!(cfg.epsilon(0), 1.0);
        assert!((cfg.epsilon(10_000) - 0.525).abs() < 1e-12);
        assert_eq!(cfg.epsilon(20_000), 0.05);
        assert_eq!(cfg.epsilon(1_000_000), 0.05);
    }
}
