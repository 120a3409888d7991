use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Advantages, RolloutBatch};
use crate::nn::loss::{surrogate_grad, value_mse_grad, SurrogateShape, SurrogateTerms};
use crate::nn::{log_softmax_at, Adam, AdamConfig, Direction, PolicyNet, ValueNet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpoHyperparams {
    pub clip: f64,
    pub entropy_coef: f64,
    pub minibatch: usize,
    pub epochs: usize,
    pub lr: f64,
}

impl Default for PpoHyperparams {
    fn default() -> Self {
        Self {
            clip: 0.2,
            entropy_coef: 1e-2,
            minibatch: 64,
            epochs: 10,
            lr: 3e-4,
        }
    }
}

impl PpoHyperparams {
    pub fn shape(&self) -> SurrogateShape {
        SurrogateShape {
            clip: Some(self.clip),
            entropy_coef: self.entropy_coef,
        }
    }
}

/// Adam state for policy and value, kept across updates.
pub struct PpoOptimizers {
    pub policy: Adam,
    pub value: Adam,
}

impl PpoOptimizers {
    pub fn new(hyper: &PpoHyperparams, policy: &PolicyNet, value: &ValueNet) -> Self {
        Self {
            policy: Adam::new(AdamConfig::with_lr(hyper.lr), policy.net.params.len()),
            value: Adam::new(AdamConfig::with_lr(hyper.lr), value.net.params.len()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PpoStats {
    /// Mean minibatch surrogate over the last epoch.
    pub objective: f64,
    pub value_loss: f64,
    /// Mean `log old - log new` of the taken actions after the update.
    pub approx_kl: f64,
    pub clip_fraction: f64,
}

/// Shuffled minibatch passes of value regression; returns the mean loss of
/// the last pass.
pub(crate) fn fit_value<R: Rng + ?Sized>(
    value: &mut ValueNet,
    adam: &mut Adam,
    batch: &RolloutBatch,
    targets: &[f64],
    epochs: usize,
    minibatch: usize,
    rng: &mut R,
) -> f64 {
    let mut grad = vec![0.0; value.net.params.len()];
    let mut order: Vec<usize> = (0..batch.len()).collect();
    let mut last = 0.0;
    for _ in 0..epochs {
        order.shuffle(rng);
        let mut sum = 0.0;
        for mb in order.chunks(minibatch) {
            sum += value_mse_grad(value, &batch.feats, targets, mb, &mut grad) * mb.len() as f64;
            adam.step(&mut value.net.params, &grad, Direction::Descend);
        }
        last = sum / batch.len() as f64;
    }
    last
}

/// Clipped-surrogate ascent with an entropy bonus, then value regression
/// on the same schedule.
pub fn ppo_update<R: Rng + ?Sized>(
    policy: &mut PolicyNet,
    value: &mut ValueNet,
    opt: &mut PpoOptimizers,
    batch: &RolloutBatch,
    adv: &Advantages,
    hyper: &PpoHyperparams,
    rng: &mut R,
) -> PpoStats {
    let terms = SurrogateTerms {
        actions: &batch.actions,
        old_log_probs: &batch.log_probs,
        advantages: &adv.normalized,
    };
    let shape = hyper.shape();
    let mut grad = vec![0.0; policy.net.params.len()];
    let mut order: Vec<usize> = (0..batch.len()).collect();
    let mut objective = 0.0;
    for _ in 0..hyper.epochs {
        order.shuffle(rng);
        let mut sum = 0.0;
        for mb in order.chunks(hyper.minibatch) {
            sum += surrogate_grad(policy, &batch.feats, &terms, shape, mb, &mut grad) * mb.len() as f64;
            opt.policy.step(&mut policy.net.params, &grad, Direction::Ascend);
        }
        objective = sum / batch.len() as f64;
    }
    let value_loss = fit_value(value, &mut opt.value, batch, &adv.targets, hyper.epochs, hyper.minibatch, rng);

    let mut trace = policy.net.trace();
    let (mut kl, mut clipped) = (0.0, 0usize);
    for t in 0..batch.len() {
        policy.net.forward_into(batch.feats.row(t), &mut trace);
        let lp = log_softmax_at(&trace.out, batch.actions[t] as usize);
        kl += batch.log_probs[t] - lp;
        if ((lp - batch.log_probs[t]).exp() - 1.0).abs() > hyper.clip {
            clipped += 1;
        }
    }
    PpoStats {
        objective,
        value_loss,
        approx_kl: kl / batch.len() as f64,
        clip_fraction: clipped as f64 / batch.len() as f64,
    }
}
