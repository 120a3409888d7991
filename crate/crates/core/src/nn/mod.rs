//! Single-hidden-layer perceptrons for the policy and value function, with
//! hand-written reverse-mode gradients and Adam.

mod adam;
mod checkpoint;
pub mod loss;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use adam::{Adam, AdamConfig, Direction};
pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT};

use crate::env::{Compass, StateMode};
use crate::error::{Error, Result};

pub const POLICY_HIDDEN: usize = 128;
pub const VALUE_HIDDEN: usize = 256;
pub const N_ACTIONS: usize = 8;

/// `input -> dense(hidden) -> relu -> dense(output)`.
///
/// Parameters live in one flat vector laid out as
/// `[w1 (input x hidden, input-major), b1, w2 (output x hidden, output-major), b2]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub output_dim: usize,
    pub params: Vec<f64>,
}

/// Activations kept from a forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct Trace {
    pub hidden: Vec<f64>,
    pub out: Vec<f64>,
}

impl Mlp {
    pub fn param_count(input_dim: usize, hidden_dim: usize, output_dim: usize) -> usize {
        input_dim * hidden_dim + hidden_dim + output_dim * hidden_dim + output_dim
    }

    pub fn zeros(input_dim: usize, hidden_dim: usize, output_dim: usize) -> Self {
        Self {
            input_dim,
            hidden_dim,
            output_dim,
            params: vec![0.0; Self::param_count(input_dim, hidden_dim, output_dim)],
        }
    }

    /// Uniform `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` for weights and biases of each layer.
    pub fn init<R: Rng + ?Sized>(input_dim: usize, hidden_dim: usize, output_dim: usize, rng: &mut R) -> Self {
        let mut net = Self::zeros(input_dim, hidden_dim, output_dim);
        let l1 = 1.0 / (input_dim as f64).sqrt();
        let l2 = 1.0 / (hidden_dim as f64).sqrt();
        let split = net.w2_offset();
        for (i, p) in net.params.iter_mut().enumerate() {
            let lim = if i < split { l1 } else { l2 };
            *p = rng.random_range(-lim..=lim);
        }
        net
    }

    fn b1_offset(&self) -> usize {
        self.input_dim * self.hidden_dim
    }

    fn w2_offset(&self) -> usize {
        self.b1_offset() + self.hidden_dim
    }

    fn b2_offset(&self) -> usize {
        self.w2_offset() + self.output_dim * self.hidden_dim
    }

    pub fn b2(&self) -> &[f64] {
        &self.params[self.b2_offset()..]
    }

    pub fn b2_mut(&mut self) -> &mut [f64] {
        let o = self.b2_offset();
        &mut self.params[o..]
    }

    pub fn w2_mut(&mut self) -> &mut [f64] {
        let (a, b) = (self.w2_offset(), self.b2_offset());
        &mut self.params[a..b]
    }

    pub fn trace(&self) -> Trace {
        Trace {
            hidden: vec![0.0; self.hidden_dim],
            out: vec![0.0; self.output_dim],
        }
    }

    pub fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Forward pass into `trace`. Zero inputs are skipped, which makes one-hot
    /// features cheap.
    pub fn forward_into(&self, x: &[f64], trace: &mut Trace) {
        debug_assert_eq!(x.len(), self.input_dim);
        let h = self.hidden_dim;
        let (w1, rest) = self.params.split_at(self.b1_offset());
        let (b1, rest) = rest.split_at(h);
        let (w2, b2) = rest.split_at(self.output_dim * h);

        let hidden = &mut trace.hidden;
        hidden.copy_from_slice(b1);
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            let row = &w1[i * h..(i + 1) * h];
            for (a, &w) in hidden.iter_mut().zip(row) {
                *a += xi * w;
            }
        }
        for a in hidden.iter_mut() {
            *a = a.max(0.0);
        }
        for (k, o) in trace.out.iter_mut().enumerate() {
            *o = b2[k] + dot(&w2[k * h..(k + 1) * h], hidden);
        }
    }

    /// Accumulate `dL/dparams` into `grad` given `dL/dout` for the sample in `trace`.
    pub fn backward_into(&self, x: &[f64], trace: &Trace, dout: &[f64], grad: &mut [f64], dhidden: &mut [f64]) {
        let h = self.hidden_dim;
        let (b1o, w2o, b2o) = (self.b1_offset(), self.w2_offset(), self.b2_offset());
        let w2 = &self.params[w2o..b2o];

        dhidden.fill(0.0);
        for (k, &g) in dout.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            grad[b2o + k] += g;
            let gw = &mut grad[w2o + k * h..w2o + (k + 1) * h];
            for (gw, &a) in gw.iter_mut().zip(&trace.hidden) {
                *gw += g * a;
            }
            for (d, &w) in dhidden.iter_mut().zip(&w2[k * h..(k + 1) * h]) {
                *d += g * w;
            }
        }
        for (d, &a) in dhidden.iter_mut().zip(&trace.hidden) {
            if a <= 0.0 {
                *d = 0.0;
            }
        }
        for (gb, &d) in grad[b1o..b1o + h].iter_mut().zip(dhidden.iter()) {
            *gb += d;
        }
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            for (gw, &d) in grad[i * h..(i + 1) * h].iter_mut().zip(dhidden.iter()) {
                *gw += xi * d;
            }
        }
    }

    /// Directional derivative of the outputs along parameter direction `v`
    /// at the sample in `trace` (forward-mode).
    pub fn jvp_into(&self, x: &[f64], trace: &Trace, v: &[f64], dhidden: &mut [f64], dout: &mut [f64]) {
        let h = self.hidden_dim;
        let (b1o, w2o, b2o) = (self.b1_offset(), self.w2_offset(), self.b2_offset());
        dhidden.copy_from_slice(&v[b1o..b1o + h]);
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            for (d, &vw) in dhidden.iter_mut().zip(&v[i * h..(i + 1) * h]) {
                *d += xi * vw;
            }
        }
        for (d, &a) in dhidden.iter_mut().zip(&trace.hidden) {
            if a <= 0.0 {
                *d = 0.0;
            }
        }
        let w2 = &self.params[w2o..b2o];
        let vw2 = &v[w2o..b2o];
        for (k, o) in dout.iter_mut().enumerate() {
            let row = k * h..(k + 1) * h;
            *o = v[b2o + k] + dot(&vw2[row.clone()], &trace.hidden) + dot(&w2[row], dhidden);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Numerically stable softmax.
pub fn softmax_into(logits: &[f64], probs: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (p, &z) in probs.iter_mut().zip(logits) {
        *p = (z - max).exp();
        sum += *p;
    }
    for p in probs.iter_mut() {
        *p /= sum;
    }
}

/// `log softmax(logits)[k]` without forming the probabilities.
pub fn log_softmax_at(logits: &[f64], k: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = logits.iter().map(|&z| (z - max).exp()).sum::<f64>().ln();
    logits[k] - max - lse
}

/// `-sum p log p` from logits.
pub fn entropy_of_logits(logits: &[f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = logits.iter().map(|&z| (z - max).exp()).sum::<f64>().ln();
    logits
        .iter()
        .map(|&z| {
            let lp = z - max - lse;
            let p = lp.exp();
            if p > 0.0 { -p * lp } else { 0.0 }
        })
        .sum()
}

/// Categorical policy over the eight compass moves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyNet {
    pub net: Mlp,
}

impl PolicyNet {
    pub fn new(mode: StateMode, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            net: Mlp::init(mode.input_dim(), POLICY_HIDDEN, N_ACTIONS, &mut rng),
        }
    }

    /// All-zero parameters: the uniform policy.
    pub fn uniform(mode: StateMode) -> Self {
        Self {
            net: Mlp::zeros(mode.input_dim(), POLICY_HIDDEN, N_ACTIONS),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.net.input_dim
    }

    pub fn logits(&self, features: &[f64]) -> Result<[f64; N_ACTIONS]> {
        self.net.check_input(features)?;
        let mut t = self.net.trace();
        self.net.forward_into(features, &mut t);
        let mut out = [0.0; N_ACTIONS];
        out.copy_from_slice(&t.out);
        Ok(out)
    }

    pub fn probs(&self, features: &[f64]) -> Result<[f64; N_ACTIONS]> {
        let z = self.logits(features)?;
        let mut p = [0.0; N_ACTIONS];
        softmax_into(&z, &mut p);
        Ok(p)
    }

    pub fn log_prob(&self, features: &[f64], action: Compass) -> Result<f64> {
        Ok(log_softmax_at(&self.logits(features)?, action.index()))
    }

    pub fn entropy(&self, features: &[f64]) -> Result<f64> {
        Ok(entropy_of_logits(&self.logits(features)?))
    }

    /// Most probable action; ties go to the lowest index.
    pub fn greedy(&self, features: &[f64], trace: &mut Trace) -> Compass {
        self.net.forward_into(features, trace);
        Compass::ALL[argmax(&trace.out)]
    }
}

pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// State-value estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueNet {
    pub net: Mlp,
}

impl ValueNet {
    pub fn new(mode: StateMode, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            net: Mlp::init(mode.input_dim(), VALUE_HIDDEN, 1, &mut rng),
        }
    }

    pub fn zeros(mode: StateMode) -> Self {
        Self {
            net: Mlp::zeros(mode.input_dim(), VALUE_HIDDEN, 1),
        }
    }

    pub fn value(&self, features: &[f64]) -> Result<f64> {
        self.net.check_input(features)?;
        let mut t = self.net.trace();
        self.net.forward_into(features, &mut t);
        Ok(t.out[0])
    }
}
