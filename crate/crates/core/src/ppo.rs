//! Proximal policy optimization with a clipped surrogate objective.
//!
//! Episodes are collected with the current stochastic policy, advantages
//! come from GAE(γ, λ), and the shared actor-critic network is updated for
//! a few epochs of shuffled minibatches on
//!
//! ```text
//! L = −mean(min(r·A, clip(r, 1−ε, 1+ε)·A)) + c_v·mean((V − R)²) − c_e·mean(H(π))
//! ```
//!
//! where `r = π(a|s) / π_old(a|s)`.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bench::metrics::MetricsRecord;
use crate::neural::{
    clip_grad_norm, log_softmax, Adam, AdamConfig, Architecture, NeuralError, Network, Trace,
};
use crate::percept::encode_into;
use crate::seeding::{self, sub_seed};
use crate::shaping::{elite_filter, EliteArchive, RewardShaper};
use crate::train::TrainOptions;
use crate::world::{GridMap, Heading, World, WorldError};

#[derive(Debug, Error)]
pub enum PpoError {
    #[error("rollout buffer is empty (every episode was truncated)")]
    EmptyBuffer,
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error("invalid PPO config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PpoConfig {
    pub gamma: f64,
    pub lam: f64,
    pub clip_eps: f64,
    pub epochs: usize,
    pub minibatch: usize,
    pub lr: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub episodes_per_update: usize,
    pub max_grad_norm: f64,
    pub normalize_advantages: bool,
    /// Divide learning rewards by the running std of the discounted return.
    pub reward_scaling: bool,
    pub hidden: Vec<usize>,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            lam: 0.95,
            clip_eps: 0.2,
            epochs: 4,
            minibatch: 64,
            lr: 3e-4,
            value_coef: 0.5,
            entropy_coef: 0.01,
            episodes_per_update: 8,
            max_grad_norm: 0.5,
            normalize_advantages: true,
            reward_scaling: true,
            hidden: vec![64, 64],
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<(), PpoError> {
        let bad = |m: &str| Err(PpoError::Config(m.to_string()));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma must lie in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.lam) {
            return bad("lam must lie in [0, 1]");
        }
        if self.clip_eps <= 0.0 {
            return bad("clip_eps must be positive");
        }
        if self.minibatch == 0 || self.episodes_per_update == 0 {
            return bad("minibatch and episodes_per_update must be positive");
        }
        Ok(())
    }
}

/// `π_new(a|s) / π_old(a|s)` from log-probabilities.
pub fn ratio(log_prob_new: f64, log_prob_old: f64) -> f64 {
    (log_prob_new - log_prob_old).exp()
}

/// `min(r·A, clip(r, 1−ε, 1+ε)·A)`.
pub fn clipped_term(r: f64, advantage: f64, eps: f64) -> f64 {
    let clipped = r.clamp(1.0 - eps, 1.0 + eps);
    (r * advantage).min(clipped * advantage)
}

/// Generalized advantage estimation over one episode.
///
/// `bootstrap` is the value of the state after the last step; it is only
/// used when that step is not terminal.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap: f64,
    gamma: f64,
    lam: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    assert_eq!(values.len(), n);
    assert_eq!(dones.len(), n);
    let mut adv = vec![0.0; n];
    let mut next_value = bootstrap;
    let mut next_adv = 0.0;
    for t in (0..n).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_value * live - values[t];
        next_adv = delta + gamma * lam * live * next_adv;
        adv[t] = next_adv;
        next_value = values[t];
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, returns)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub action: usize,
    pub log_prob_old: f64,
    pub base_reward: f64,
    /// Reward the learner optimizes (equals `base_reward` without shaping).
    pub shaped_reward: f64,
    pub value_old: f64,
    pub done: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Episode {
    pub transitions: Vec<Transition>,
    /// Value estimate of the state after the final transition.
    pub bootstrap_value: f64,
}

#[derive(Debug, Clone)]
pub struct RolloutBuffer {
    pub episodes: Vec<Episode>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
    pub reward_scale: f64,
}

impl Default for RolloutBuffer {
    fn default() -> Self {
        Self {
            episodes: Vec::new(),
            advantages: Vec::new(),
            returns: Vec::new(),
            reward_scale: 1.0,
        }
    }
}

impl RolloutBuffer {
    pub fn push(&mut self, episode: Episode) {
        self.episodes.push(episode);
    }

    pub fn len(&self) -> usize {
        self.episodes.iter().map(|e| e.transitions.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn clear(&mut self) {
        self.episodes.clear();
        self.advantages.clear();
        self.returns.clear();
    }

    pub fn transitions(&self) -> impl Iterator<Item = &Transition> {
        self.episodes.iter().flat_map(|e| e.transitions.iter())
    }

    /// Computes advantages and returns for every stored transition.
    pub fn finish(&mut self, cfg: &PpoConfig) {
        self.advantages.clear();
        self.returns.clear();
        for ep in &self.episodes {
            let rewards: Vec<f64> = ep
                .transitions
                .iter()
                .map(|t| t.shaped_reward * self.reward_scale)
                .collect();
            let values: Vec<f64> = ep.transitions.iter().map(|t| t.value_old).collect();
            let dones: Vec<bool> = ep.transitions.iter().map(|t| t.done).collect();
            let (a, r) = compute_gae(
                &rewards,
                &values,
                &dones,
                ep.bootstrap_value,
                cfg.gamma,
                cfg.lam,
            );
            self.advantages.extend(a);
            self.returns.extend(r);
        }
        if cfg.normalize_advantages {
            normalize(&mut self.advantages);
        }
    }
}

/// Shifts and scales to mean 0, std 1 (population std).
pub fn normalize(xs: &mut [f64]) {
    let n = xs.len();
    if n < 2 {
        return;
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
    let std = var.sqrt();
    if std < 1e-12 {
        xs.iter_mut().for_each(|x| *x -= mean);
        return;
    }
    xs.iter_mut().for_each(|x| *x = (*x - mean) / std);
}

/// One row of a PPO minibatch.
#[derive(Debug, Clone, Copy)]
pub struct Sample<'a> {
    pub obs: &'a [f64],
    pub action: usize,
    pub log_prob_old: f64,
    pub advantage: f64,
    pub ret: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossTerms {
    pub total: f64,
    pub policy: f64,
    pub value: f64,
    pub entropy: f64,
    pub mean_ratio: f64,
    pub clip_fraction: f64,
}

/// PPO loss over a minibatch. When `grads` is given, the exact gradient of
/// `total` is accumulated into it.
pub fn ppo_loss(
    net: &Network,
    samples: &[Sample<'_>],
    cfg: &PpoConfig,
    mut grads: Option<&mut [f64]>,
    trace: &mut Trace,
) -> Result<LossTerms, NeuralError> {
    let n = samples.len() as f64;
    let eps = cfg.clip_eps;
    let mut terms = LossTerms::default();
    let mut g_logits: Vec<f64> = Vec::new();
    for s in samples {
        net.forward_into(s.obs, trace)?;
        let logits = trace.head(0);
        let value = trace.head(1)[0];
        let logp = log_softmax(logits);
        let probs: Vec<f64> = logp.iter().map(|l| l.exp()).collect();
        let entropy = -probs.iter().zip(&logp).map(|(p, l)| p * l).sum::<f64>();
        let r = ratio(logp[s.action], s.log_prob_old);
        let surrogate = clipped_term(r, s.advantage, eps);
        let verr = value - s.ret;

        terms.policy -= surrogate / n;
        terms.value += verr * verr / n;
        terms.entropy += entropy / n;
        terms.mean_ratio += r / n;
        if (r - 1.0).abs() > eps {
            terms.clip_fraction += 1.0 / n;
        }

        if let Some(g) = grads.as_deref_mut() {
            // d surrogate / d r is A on the unclipped branch, else 0.
            let ds_dr = if r * s.advantage <= r.clamp(1.0 - eps, 1.0 + eps) * s.advantage {
                s.advantage
            } else {
                0.0
            };
            g_logits.clear();
            for (j, (&p, &lp)) in probs.iter().zip(&logp).enumerate() {
                let onehot = if j == s.action { 1.0 } else { 0.0 };
                let d_policy = -ds_dr * r * (onehot - p);
                let d_entropy = cfg.entropy_coef * p * (lp + entropy);
                g_logits.push((d_policy + d_entropy) / n);
            }
            let g_value = [2.0 * cfg.value_coef * verr / n];
            net.backward(trace, &[&g_logits, &g_value], g)?;
        }
    }
    terms.total = terms.policy + cfg.value_coef * terms.value - cfg.entropy_coef * terms.entropy;
    Ok(terms)
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct UpdateStats {
    /// Mean ratio on the very first minibatch (1 up to rounding).
    pub first_ratio: f64,
    pub mean_ratio: f64,
    pub clip_fraction: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub samples: usize,
    pub minibatches: usize,
}

/// Runs `cfg.epochs` passes of shuffled minibatch Adam steps on `buffer`.
pub fn update(
    net: &mut Network,
    adam: &mut Adam,
    buffer: &mut RolloutBuffer,
    cfg: &PpoConfig,
    rng: &mut impl Rng,
) -> Result<UpdateStats, PpoError> {
    if buffer.is_empty() {
        return Err(PpoError::EmptyBuffer);
    }
    buffer.finish(cfg);
    let flat: Vec<&Transition> = buffer.transitions().collect();
    let mut order: Vec<usize> = (0..flat.len()).collect();
    let mut grads = vec![0.0; net.param_count()];
    let mut trace = Trace::default();
    let mut stats = UpdateStats {
        samples: flat.len(),
        ..Default::default()
    };
    let mut batch = Vec::with_capacity(cfg.minibatch);
    for epoch in 0..cfg.epochs {
        order.shuffle(rng);
        for (k, chunk) in order.chunks(cfg.minibatch).enumerate() {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| Sample {
                obs: &flat[i].obs,
                action: flat[i].action,
                log_prob_old: flat[i].log_prob_old,
                advantage: buffer.advantages[i],
                ret: buffer.returns[i],
            }));
            grads.fill(0.0);
            let terms = ppo_loss(net, &batch, cfg, Some(&mut grads), &mut trace)?;
            if epoch == 0 && k == 0 {
                stats.first_ratio = terms.mean_ratio;
            }
            stats.mean_ratio += terms.mean_ratio;
            stats.clip_fraction += terms.clip_fraction;
            stats.policy_loss += terms.policy;
            stats.value_loss += terms.value;
            stats.entropy += terms.entropy;
            stats.minibatches += 1;
            if cfg.max_grad_norm > 0.0 {
                clip_grad_norm(&mut grads, cfg.max_grad_norm);
            }
            adam.step(net.params_mut(), &grads)?;
        }
    }
    let m = stats.minibatches.max(1) as f64;
    stats.mean_ratio /= m;
    stats.clip_fraction /= m;
    stats.policy_loss /= m;
    stats.value_loss /= m;
    stats.entropy /= m;
    Ok(stats)
}

/// Welford running variance.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunningStat {
    n: u64,
    mean: f64,
    m2: f64,
}

impl RunningStat {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / self.n as f64
        }
    }
}

/// Draws an index from the categorical distribution given by `log_probs`.
pub fn sample_categorical(log_probs: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, lp) in log_probs.iter().enumerate() {
        acc += lp.exp();
        if u < acc {
            return i;
        }
    }
    log_probs.len() - 1
}

/// Output of a finished PPO training run.
#[derive(Debug, Clone)]
pub struct TrainedPpo {
    pub net: Network,
    pub records: Vec<MetricsRecord>,
    pub updates: Vec<UpdateStats>,
    pub skipped_updates: usize,
}

/// Trains an actor-critic policy on `map`.
///
/// Every `episodes_per_update` collected episodes the kept ones (elite
/// filter applied) form one update batch; a batch left empty by the filter
/// skips its update.
pub fn train(
    map: &GridMap,
    opts: &TrainOptions,
    cfg: &PpoConfig,
    mut on_episode: impl FnMut(&MetricsRecord),
) -> Result<TrainedPpo, PpoError> {
    cfg.validate()?;
    let input = opts.obs.len(map.width(), map.height());
    let arch = Architecture::actor_critic(input, &cfg.hidden, Heading::COUNT);
    let mut net = Network::new(arch, sub_seed(opts.seed, seeding::INIT));
    let mut adam = Adam::new(
        AdamConfig {
            lr: cfg.lr,
            ..Default::default()
        },
        net.param_count(),
    );
    let mut sampler = ChaCha8Rng::seed_from_u64(sub_seed(opts.seed, seeding::SAMPLING));
    let mut shuffler = ChaCha8Rng::seed_from_u64(sub_seed(opts.seed, seeding::MINIBATCH));
    let env_seed = sub_seed(opts.seed, seeding::ENV);
    let mut world = World::reset(map.clone(), env_seed)?;
    let mut shaper = opts.shaping.map(RewardShaper::new);
    let mut archive = opts
        .elite
        .and_then(|e| e.replay_best)
        .map(EliteArchive::<Episode>::new);
    let cap = opts.episode_cap();

    let mut buffer = RolloutBuffer::default();
    let mut return_stat = RunningStat::default();
    let mut records = Vec::with_capacity(opts.episodes);
    let mut updates = Vec::new();
    let mut skipped_updates = 0;
    let mut collected = 0;
    let mut obs = Vec::with_capacity(input);
    let mut trace = Trace::default();

    for ep_index in 0..opts.episodes {
        world.restart(env_seed);
        if let Some(s) = shaper.as_mut() {
            s.reset();
        }
        let mut episode = Episode::default();
        let mut shaped_total = 0.0;
        let mut discounted = 0.0;
        while !world.is_done() && world.steps() < cap {
            encode_into(&world, &opts.obs, &mut obs);
            net.forward_into(&obs, &mut trace)?;
            let logp = log_softmax(trace.head(0));
            let value = trace.head(1)[0];
            let action = sample_categorical(&logp, &mut sampler);
            let out = world.step(Heading::from_index(action))?;
            let reward = match shaper.as_mut() {
                Some(s) => s.shape(out.tile_reward, out.rotation_reward).shaped,
                None => out.base_reward(),
            };
            shaped_total += reward;
            discounted = discounted * cfg.gamma + reward;
            return_stat.push(discounted);
            episode.transitions.push(Transition {
                obs: obs.clone(),
                action,
                log_prob_old: logp[action],
                base_reward: out.base_reward(),
                shaped_reward: reward,
                value_old: value,
                done: out.done,
            });
        }
        let done = world.is_done();
        if !done && !episode.transitions.is_empty() {
            encode_into(&world, &opts.obs, &mut obs);
            net.forward_into(&obs, &mut trace)?;
            episode.bootstrap_value = trace.head(1)[0];
        }

        let kept = match opts.elite {
            Some(e) => elite_filter(world.steps(), done, e.episode_cap).kept,
            None => true,
        };
        let record = MetricsRecord::from_world(ep_index, &world, shaped_total, opts.seed);
        on_episode(&record);
        records.push(record);
        if kept && !episode.transitions.is_empty() {
            if let Some(a) = archive.as_mut() {
                if done {
                    a.offer(world.steps(), &episode);
                }
            }
            buffer.push(episode);
        }

        collected += 1;
        if collected >= cfg.episodes_per_update {
            collected = 0;
            if buffer.is_empty() {
                skipped_updates += 1;
                continue;
            }
            if let Some(a) = archive.as_ref() {
                buffer.episodes.extend(a.episodes().cloned());
            }
            buffer.reward_scale = if cfg.reward_scaling {
                1.0 / (return_stat.variance() + 1e-8).sqrt().max(1e-4)
            } else {
                1.0
            };
            updates.push(update(&mut net, &mut adam, &mut buffer, cfg, &mut shuffler)?);
            buffer.clear();
        }
    }
    Ok(TrainedPpo {
        net,
        records,
        updates,
        skipped_updates,
    })
}
