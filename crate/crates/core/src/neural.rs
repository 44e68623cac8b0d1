//! Small dense network with hand-written reverse-mode gradients and Adam.
//!
//! A network is a tanh trunk followed by one or more linear heads that all
//! read the last trunk activation. Parameters live in one flat `f64` buffer
//! (per layer: row-major weights `out × in`, then biases), so gradients,
//! optimizer moments and the on-disk payload share a single layout.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NeuralError {
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("network has {got} heads, operation needs the {expected} layout")]
    WrongHeads { expected: &'static str, got: usize },
}

/// What the output heads mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HeadKind {
    /// Policy logits (`actions`) and a scalar state value.
    ActorCritic,
    /// One Q-value per action.
    Q,
    /// Scalar state value and per-action advantages.
    Dueling,
    /// Arbitrary head sizes with no fixed interpretation.
    Custom,
}

impl HeadKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::ActorCritic => "actor-critic",
            Self::Q => "q",
            Self::Dueling => "dueling",
            Self::Custom => "custom",
        }
    }
}

impl std::str::FromStr for HeadKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "actor-critic" => Ok(Self::ActorCritic),
            "q" => Ok(Self::Q),
            "dueling" => Ok(Self::Dueling),
            "custom" => Ok(Self::Custom),
            other => Err(format!("unknown head kind `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input: usize,
    pub hidden: Vec<usize>,
    pub kind: HeadKind,
    pub heads: Vec<usize>,
}

impl Architecture {
    pub fn actor_critic(input: usize, hidden: &[usize], actions: usize) -> Self {
        Self {
            input,
            hidden: hidden.to_vec(),
            kind: HeadKind::ActorCritic,
            heads: vec![actions, 1],
        }
    }

    pub fn q(input: usize, hidden: &[usize], actions: usize) -> Self {
        Self {
            input,
            hidden: hidden.to_vec(),
            kind: HeadKind::Q,
            heads: vec![actions],
        }
    }

    pub fn dueling(input: usize, hidden: &[usize], actions: usize) -> Self {
        Self {
            input,
            hidden: hidden.to_vec(),
            kind: HeadKind::Dueling,
            heads: vec![1, actions],
        }
    }

    pub fn custom(input: usize, hidden: &[usize], heads: &[usize]) -> Self {
        Self {
            input,
            hidden: hidden.to_vec(),
            kind: HeadKind::Custom,
            heads: heads.to_vec(),
        }
    }

    fn layer_shapes(&self) -> Vec<LayerShape> {
        let mut shapes = Vec::new();
        let mut offset = 0;
        let mut prev = self.input;
        for &h in &self.hidden {
            shapes.push(LayerShape {
                input: prev,
                output: h,
                offset,
            });
            offset += h * prev + h;
            prev = h;
        }
        for &h in &self.heads {
            shapes.push(LayerShape {
                input: prev,
                output: h,
                offset,
            });
            offset += h * prev + h;
        }
        shapes
    }

    pub fn param_count(&self) -> usize {
        self.layer_shapes()
            .iter()
            .map(|l| l.output * l.input + l.output)
            .sum()
    }

    pub fn trunk_width(&self) -> usize {
        self.hidden.last().copied().unwrap_or(self.input)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct LayerShape {
    input: usize,
    output: usize,
    offset: usize,
}

impl LayerShape {
    fn weights(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.input * self.output
    }

    fn biases(&self) -> std::ops::Range<usize> {
        let start = self.offset + self.input * self.output;
        start..start + self.output
    }
}

/// Forward-pass record needed by [`Network::backward`].
#[derive(Debug, Clone, Default)]
pub struct Trace {
    input: Vec<f64>,
    /// Post-tanh activations of each trunk layer.
    hidden: Vec<Vec<f64>>,
    heads: Vec<Vec<f64>>,
    delta: Vec<f64>,
    delta_prev: Vec<f64>,
}

impl Trace {
    pub fn head(&self, i: usize) -> &[f64] {
        &self.heads[i]
    }

    pub fn heads(&self) -> &[Vec<f64>] {
        &self.heads
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    arch: Architecture,
    layers: Vec<LayerShape>,
    params: Vec<f64>,
}

impl Network {
    /// Seeded fan-in uniform initialization with zero biases. For
    /// actor-critic nets the policy head is scaled by 0.01.
    pub fn new(arch: Architecture, seed: u64) -> Self {
        let layers = arch.layer_shapes();
        let mut params = vec![0.0; arch.param_count()];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n_trunk = arch.hidden.len();
        for (i, layer) in layers.iter().enumerate() {
            let bound = 1.0 / (layer.input as f64).sqrt();
            let scale = if arch.kind == HeadKind::ActorCritic && i == n_trunk {
                0.01
            } else {
                1.0
            };
            for w in &mut params[layer.weights()] {
                *w = rng.gen_range(-bound..bound) * scale;
            }
        }
        Self {
            arch,
            layers,
            params,
        }
    }

    pub fn from_params(arch: Architecture, params: Vec<f64>) -> Result<Self, NeuralError> {
        let expected = arch.param_count();
        if params.len() != expected {
            return Err(NeuralError::ShapeMismatch {
                expected,
                got: params.len(),
            });
        }
        let layers = arch.layer_shapes();
        Ok(Self {
            arch,
            layers,
            params,
        })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn input_len(&self) -> usize {
        self.arch.input
    }

    /// Sets every weight and bias of head `i` to zero.
    pub fn zero_head(&mut self, i: usize) {
        let layer = self.layers[self.arch.hidden.len() + i];
        self.params[layer.offset..layer.biases().end].fill(0.0);
    }

    pub fn forward(&self, x: &[f64]) -> Result<Trace, NeuralError> {
        let mut trace = Trace::default();
        self.forward_into(x, &mut trace)?;
        Ok(trace)
    }

    /// Runs the network, reusing the buffers in `trace`.
    pub fn forward_into(&self, x: &[f64], trace: &mut Trace) -> Result<(), NeuralError> {
        if x.len() != self.arch.input {
            return Err(NeuralError::ShapeMismatch {
                expected: self.arch.input,
                got: x.len(),
            });
        }
        let n_trunk = self.arch.hidden.len();
        trace.input.clear();
        trace.input.extend_from_slice(x);
        trace.hidden.resize_with(n_trunk, Vec::new);
        trace.heads.resize_with(self.arch.heads.len(), Vec::new);

        for i in 0..n_trunk {
            let layer = self.layers[i];
            let (before, after) = trace.hidden.split_at_mut(i);
            let src: &[f64] = if i == 0 { &trace.input } else { &before[i - 1] };
            let dst = &mut after[0];
            self.affine(layer, src, dst);
            dst.iter_mut().for_each(|v| *v = v.tanh());
        }
        let last: &[f64] = if n_trunk == 0 {
            &trace.input
        } else {
            &trace.hidden[n_trunk - 1]
        };
        for (h, out) in trace.heads.iter_mut().enumerate() {
            self.affine(self.layers[n_trunk + h], last, out);
        }
        Ok(())
    }

    fn affine(&self, layer: LayerShape, src: &[f64], dst: &mut Vec<f64>) {
        let w = &self.params[layer.weights()];
        let b = &self.params[layer.biases()];
        dst.clear();
        dst.extend(
            w.chunks_exact(layer.input)
                .zip(b)
                .map(|(row, bias)| bias + row.iter().zip(src).map(|(a, c)| a * c).sum::<f64>()),
        );
    }

    /// Accumulates `∂L/∂θ` into `grads` given `∂L/∂head` for every head.
    ///
    /// `head_grads[i]` must have the length of head `i`.
    pub fn backward(
        &self,
        trace: &mut Trace,
        head_grads: &[&[f64]],
        grads: &mut [f64],
    ) -> Result<(), NeuralError> {
        if grads.len() != self.params.len() {
            return Err(NeuralError::ShapeMismatch {
                expected: self.params.len(),
                got: grads.len(),
            });
        }
        if head_grads.len() != self.arch.heads.len() {
            return Err(NeuralError::ShapeMismatch {
                expected: self.arch.heads.len(),
                got: head_grads.len(),
            });
        }
        let n_trunk = self.arch.hidden.len();
        let width = self.arch.trunk_width();
        let Trace {
            input,
            hidden,
            delta,
            delta_prev,
            ..
        } = trace;
        let last: &[f64] = if n_trunk == 0 { input } else { &hidden[n_trunk - 1] };

        // Gradient w.r.t. the last trunk activation, summed over heads.
        delta.clear();
        delta.resize(width, 0.0);
        for (h, g) in head_grads.iter().enumerate() {
            let layer = self.layers[n_trunk + h];
            if g.len() != layer.output {
                return Err(NeuralError::ShapeMismatch {
                    expected: layer.output,
                    got: g.len(),
                });
            }
            accumulate_layer(&self.params, grads, layer, last, g, Some(&mut *delta));
        }

        for i in (0..n_trunk).rev() {
            let layer = self.layers[i];
            // through tanh: d/dz = d/da * (1 - a^2)
            for (d, a) in delta.iter_mut().zip(&hidden[i]) {
                *d *= 1.0 - a * a;
            }
            let src: &[f64] = if i == 0 { input } else { &hidden[i - 1] };
            let prev = if i == 0 {
                None
            } else {
                delta_prev.clear();
                delta_prev.resize(layer.input, 0.0);
                Some(&mut *delta_prev)
            };
            accumulate_layer(&self.params, grads, layer, src, delta, prev);
            if i > 0 {
                std::mem::swap(delta, delta_prev);
            }
        }
        Ok(())
    }
}

fn accumulate_layer(
    params: &[f64],
    grads: &mut [f64],
    layer: LayerShape,
    src: &[f64],
    upstream: &[f64],
    mut down: Option<&mut Vec<f64>>,
) {
    let w = &params[layer.weights()];
    let (gw, gb) = grads[layer.offset..layer.biases().end].split_at_mut(layer.input * layer.output);
    for (o, &g) in upstream.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        gb[o] += g;
        let row = o * layer.input..(o + 1) * layer.input;
        for (gw_i, s) in gw[row.clone()].iter_mut().zip(src) {
            *gw_i += g * s;
        }
        if let Some(d) = down.as_deref_mut() {
            for (d_i, w_i) in d.iter_mut().zip(&w[row]) {
                *d_i += g * w_i;
            }
        }
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Numerically stable log-softmax.
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    logits.iter().map(|z| z - lse).collect()
}

pub fn argmax(xs: &[f64]) -> usize {
    xs.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| {
            if v > bv {
                (i, v)
            } else {
                (bi, bv)
            }
        })
        .0
}

/// Scales `grads` so their L2 norm is at most `max_norm`. Returns the
/// norm before clipping.
pub fn clip_grad_norm(grads: &mut [f64], max_norm: f64) -> f64 {
    let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        grads.iter_mut().for_each(|g| *g *= s);
    }
    norm
}

impl Network {
    /// Policy probabilities and state value of an actor-critic network.
    pub fn policy_value(&self, obs: &[f64]) -> Result<(Vec<f64>, f64), NeuralError> {
        if self.arch.kind != HeadKind::ActorCritic {
            return Err(NeuralError::WrongHeads {
                expected: "actor-critic",
                got: self.arch.heads.len(),
            });
        }
        let trace = self.forward(obs)?;
        Ok((softmax(trace.head(0)), trace.head(1)[0]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected Adam.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub cfg: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(cfg: AdamConfig, n_params: usize) -> Self {
        Self {
            cfg,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<(), NeuralError> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(NeuralError::ShapeMismatch {
                expected: self.m.len(),
                got: if params.len() != self.m.len() {
                    params.len()
                } else {
                    grads.len()
                },
            });
        }
        self.t += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.cfg;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }
}
