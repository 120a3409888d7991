use serde::{Deserialize, Serialize};

use super::RolloutBatch;
use crate::nn::{ValueNet, VALUE_HIDDEN};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaeConfig {
    pub gamma: f64,
    pub lambda: f64,
}

impl Default for GaeConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            lambda: 0.99,
        }
    }
}

impl GaeConfig {
    pub fn is_valid(&self) -> bool {
        (0.0..=1.0).contains(&self.gamma) && (0.0..=1.0).contains(&self.lambda)
    }
}

/// Advantage estimates for one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct Advantages {
    pub values: Vec<f64>,
    /// Before normalization.
    pub raw: Vec<f64>,
    /// Zero mean, unit variance over the batch.
    pub normalized: Vec<f64>,
    /// `raw + values`: regression targets for the value net.
    pub targets: Vec<f64>,
}

/// `A_t = sum_l (gamma lambda)^l delta_{t+l}` with
/// `delta_t = r_t + gamma V(s_{t+1}) (1 - done_t) - V(s_t)`; credit stops at
/// `done` steps and `last_value` bootstraps the step after the final one.
pub fn gae(rewards: &[f64], values: &[f64], dones: &[bool], last_value: f64, cfg: GaeConfig) -> Vec<f64> {
    let n = rewards.len();
    assert!(values.len() == n && dones.len() == n);
    let mut adv = vec![0.0; n];
    let mut acc = 0.0;
    for t in (0..n).rev() {
        let next = if t + 1 < n { values[t + 1] } else { last_value };
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + cfg.gamma * next * live - values[t];
        acc = delta + cfg.gamma * cfg.lambda * live * acc;
        adv[t] = acc;
    }
    adv
}

pub fn normalize(xs: &[f64]) -> Vec<f64> {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let sd = var.sqrt() + 1e-8;
    xs.iter().map(|x| (x - mean) / sd).collect()
}

/// Values, advantages and value targets for `batch` under `value`.
pub fn compute_gae(batch: &RolloutBatch, value: &ValueNet, cfg: GaeConfig) -> Advantages {
    assert!(!batch.is_empty(), "empty batch");
    let net = &value.net;
    debug_assert_eq!(net.hidden_dim, VALUE_HIDDEN);
    let mut trace = net.trace();
    let mut v = |x: &[f64]| {
        net.forward_into(x, &mut trace);
        trace.out[0]
    };
    let values: Vec<f64> = (0..batch.len()).map(|t| v(batch.feats.row(t))).collect();
    let last = v(&batch.bootstrap);
    let raw = gae(&batch.rewards, &values, &batch.dones, last, cfg);
    let targets = raw.iter().zip(&values).map(|(a, v)| a + v).collect();
    Advantages {
        normalized: normalize(&raw),
        values,
        raw,
        targets,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Direct double sum over future TD residuals up to the episode end.
    fn oracle(r: &[f64], v: &[f64], d: &[bool], last: f64, g: f64, l: f64) -> Vec<f64> {
        let n = r.len();
        let next = |t: usize| if t + 1 < n { v[t + 1] } else { last };
        let delta = |t: usize| r[t] + g * next(t) * if d[t] { 0.0 } else { 1.0 } - v[t];
        (0..n)
            .map(|t| {
                let mut sum = 0.0;
                for k in t..n {
                    sum += (g * l).powi((k - t) as i32) * delta(k);
                    if d[k] {
                        break;
                    }
                }
                sum
            })
            .collect()
    }

    #[test]
    fn matches_double_sum_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..200 {
            let r: Vec<f64> = (0..10).map(|_| rng.random_range(0..3) as f64).collect();
            let v: Vec<f64> = (0..10).map(|_| rng.random_range(-2.0..2.0)).collect();
            let d: Vec<bool> = (0..10).map(|_| rng.random_bool(0.2)).collect();
            let cfg = GaeConfig {
                gamma: rng.random(),
                lambda: rng.random(),
            };
            let last = rng.random_range(-1.0..1.0);
            let got = gae(&r, &v, &d, last, cfg);
            let want = oracle(&r, &v, &d, last, cfg.gamma, cfg.lambda);
            for (a, b) in got.iter().zip(&want) {
                assert!((a - b).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn degenerate_discounts() {
        let r = [1.0, 0.0, 2.0, 1.0];
        let v = [0.5, -0.25, 1.5, 0.75];
        let d = [false, false, true, false];
        let a = gae(&r, &v, &d, 3.0, GaeConfig { gamma: 0.0, lambda: 0.9 });
        assert_eq!(a, vec![0.5, 0.25, 0.5, 0.25]);
        let g = 0.9;
        let a = gae(&r, &v, &d, 3.0, GaeConfig { gamma: g, lambda: 0.0 });
        let deltas = [1.0 + g * -0.25 - 0.5, 0.0 + g * 1.5 + 0.25, 2.0 - 1.5, 1.0 + g * 3.0 - 0.75];
        assert_eq!(a, deltas.to_vec());
    }

    #[test]
    fn done_blocks_credit() {
        let a = gae(&[0.0, 5.0], &[0.0, 0.0], &[true, true], 10.0, GaeConfig::default());
        assert_eq!(a, vec![0.0, 5.0]);
    }

    #[test]
    fn normalized_moments() {
        let n = normalize(&[1.0, 2.0, 3.0, 10.0]);
        let mean = n.iter().sum::<f64>() / 4.0;
        let var = n.iter().map(|x| x * x).sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-12 && (var - 1.0).abs() < 1e-6);
    }
}
