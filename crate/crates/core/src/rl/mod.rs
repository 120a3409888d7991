//! On-policy refinement: rollouts, generalized advantage estimation, and
//! PPO / TRPO updates.

mod gae;
mod ppo;
mod rollout;
mod trpo;

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use gae::{compute_gae, gae, normalize, Advantages, GaeConfig};
pub use ppo::{ppo_update, PpoHyperparams, PpoOptimizers, PpoStats};
pub use rollout::{collect_rollout, sample_categorical, Collector, RolloutBatch};
pub use trpo::{conjugate_gradient, trpo_update, TrpoHyperparams, TrpoStep};

use crate::env::{ArenaConfig, StateMode};
use crate::error::{Error, Result};
use crate::eval::{eval_policy, EvalResult, EVAL_EPISODES, EVAL_STEPS};
use crate::nn::{Adam, AdamConfig, PolicyNet, ValueNet};
use crate::{derive_seed, stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algo {
    Ppo,
    Trpo,
}

impl Algo {
    pub fn name(self) -> &'static str {
        match self {
            Algo::Ppo => "ppo",
            Algo::Trpo => "trpo",
        }
    }

    pub fn parse(s: &str) -> Option<Algo> {
        match s {
            "ppo" => Some(Algo::Ppo),
            "trpo" => Some(Algo::Trpo),
            _ => None,
        }
    }
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub const DEFAULT_BUDGET: u64 = 10_020_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RlConfig {
    pub algo: Algo,
    /// Environment steps per rollout batch.
    pub batch_size: usize,
    /// Total environment steps; only whole batches are run.
    pub budget: u64,
    pub eval_every: u64,
    pub eval_episodes: usize,
    pub eval_steps: usize,
    pub gae: GaeConfig,
    pub ppo: PpoHyperparams,
    pub trpo: TrpoHyperparams,
}

impl RlConfig {
    pub fn new(algo: Algo) -> Self {
        Self {
            algo,
            batch_size: 30_000,
            budget: DEFAULT_BUDGET,
            eval_every: 30_000,
            eval_episodes: EVAL_EPISODES,
            eval_steps: EVAL_STEPS,
            gae: GaeConfig::default(),
            ppo: PpoHyperparams::default(),
            trpo: TrpoHyperparams::default(),
        }
    }

    pub fn with_budget(mut self, budget: u64) -> Self {
        self.budget = budget;
        self
    }

    pub fn updates(&self) -> u64 {
        self.budget / self.batch_size as u64
    }

    pub fn validate(&self, env: &ArenaConfig) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.batch_size < env.episode_len {
            return bad("batch size must cover at least one episode");
        }
        if self.budget < self.batch_size as u64 {
            return bad("budget must cover at least one batch");
        }
        if self.eval_every == 0 || self.eval_episodes == 0 {
            return bad("evaluation cadence and episode count must be positive");
        }
        if !self.gae.is_valid() {
            return bad("gae gamma and lambda must lie in [0, 1]");
        }
        if self.ppo.clip <= 0.0 || self.ppo.epochs == 0 || self.ppo.minibatch == 0 {
            return bad("ppo needs a positive clip, epoch count and minibatch");
        }
        if self.trpo.max_kl <= 0.0 || self.trpo.damping <= 0.0 {
            return bad("trpo needs a positive KL bound and damping");
        }
        Ok(())
    }
}

/// One line of a learning curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub step: u64,
    pub eval_mean: f64,
    pub eval_std: f64,
    pub seed: u64,
    /// `bc`, `ppo` or `trpo`.
    pub algo: String,
    pub mode: StateMode,
    pub init: String,
}

#[derive(Debug, Clone)]
pub struct RlOutcome {
    pub policy: PolicyNet,
    pub value: ValueNet,
    /// Greedy evaluation of the starting policy, on the same episodes as the curve.
    pub initial: EvalResult,
    pub curve: Vec<CurvePoint>,
    pub trpo_steps: Vec<TrpoStep>,
    pub ppo_stats: Vec<PpoStats>,
}

impl RlOutcome {
    pub fn final_eval(&self) -> f64 {
        self.curve.last().map_or(self.initial.mean, |p| p.eval_mean)
    }
}

/// Starting networks for a warm-started run. Without a value net, the value
/// function starts from a fresh initialization.
#[derive(Debug, Clone, Copy)]
pub struct Warm<'a> {
    pub policy: &'a PolicyNet,
    pub value: Option<&'a ValueNet>,
}

impl<'a> Warm<'a> {
    pub fn policy(policy: &'a PolicyNet) -> Self {
        Self { policy, value: None }
    }

    pub fn with_value(policy: &'a PolicyNet, value: &'a ValueNet) -> Self {
        Self {
            policy,
            value: Some(value),
        }
    }
}

/// `train_rl_with` without per-evaluation callbacks.
pub fn train_rl(
    init: Option<Warm<'_>>,
    env: &ArenaConfig,
    cfg: &RlConfig,
    mode: StateMode,
    seed: u64,
) -> Result<RlOutcome> {
    let label = if init.is_some() { "warm" } else { "fresh" };
    train_rl_with(init, env, cfg, mode, seed, label, |_, _, _| Ok(()))
}

/// Alternate rollout collection, advantage estimation and policy/value
/// updates until the budget is spent, evaluating the greedy policy every
/// `eval_every` steps. `on_eval` sees each curve point with the current
/// networks, e.g. to write checkpoints.
pub fn train_rl_with<F>(
    init: Option<Warm<'_>>,
    env: &ArenaConfig,
    cfg: &RlConfig,
    mode: StateMode,
    seed: u64,
    init_label: &str,
    mut on_eval: F,
) -> Result<RlOutcome>
where
    F: FnMut(&CurvePoint, &PolicyNet, &ValueNet) -> Result<()>,
{
    cfg.validate(env)?;
    let dims_match = |d: usize| {
        if d == mode.input_dim() {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: mode.input_dim(),
                got: d,
            })
        }
    };
    let mut policy = match init {
        Some(w) => {
            dims_match(w.policy.input_dim())?;
            w.policy.clone()
        }
        None => PolicyNet::new(mode, derive_seed(seed, stream::POLICY_INIT)),
    };
    let mut value = match init.and_then(|w| w.value) {
        Some(v) => {
            dims_match(v.net.input_dim)?;
            v.clone()
        }
        None => ValueNet::new(mode, derive_seed(seed, stream::VALUE_INIT)),
    };
    let mut collector = Collector::new(env.clone(), mode, derive_seed(seed, stream::ROLLOUT));
    let mut shuffle = ChaCha8Rng::seed_from_u64(derive_seed(seed, stream::SHUFFLE));
    let eval_seed = derive_seed(seed, stream::EVAL);
    let evaluate = |p: &PolicyNet| eval_policy(p, env, cfg.eval_episodes, cfg.eval_steps, mode, eval_seed);

    let mut ppo_opt = PpoOptimizers::new(&cfg.ppo, &policy, &value);
    let mut trpo_value_opt = Adam::new(AdamConfig::with_lr(cfg.trpo.value_lr), value.net.params.len());

    let initial = evaluate(&policy)?;
    let mut curve = Vec::new();
    let mut trpo_steps = Vec::new();
    let mut ppo_stats = Vec::new();
    let mut steps = 0u64;
    for _ in 0..cfg.updates() {
        let batch = collector.collect(&policy, cfg.batch_size);
        let adv = compute_gae(&batch, &value, cfg.gae);
        match cfg.algo {
            Algo::Ppo => {
                let s = ppo_update(&mut policy, &mut value, &mut ppo_opt, &batch, &adv, &cfg.ppo, &mut shuffle);
                ppo_stats.push(s);
            }
            Algo::Trpo => {
                trpo_steps.push(trpo_update(&mut policy, &batch, &adv, &cfg.trpo));
                ppo::fit_value(
                    &mut value,
                    &mut trpo_value_opt,
                    &batch,
                    &adv.targets,
                    cfg.trpo.value_epochs,
                    cfg.trpo.value_minibatch,
                    &mut shuffle,
                );
            }
        }
        let before = steps;
        steps += batch.len() as u64;
        if steps / cfg.eval_every > before / cfg.eval_every {
            let r = evaluate(&policy)?;
            let point = CurvePoint {
                step: steps,
                eval_mean: r.mean,
                eval_std: r.std,
                seed,
                algo: cfg.algo.name().to_string(),
                mode,
                init: init_label.to_string(),
            };
            log::info!(
                "{} seed {seed} step {steps}: eval {:.1} +- {:.1}, train episodes {:?}",
                cfg.algo,
                r.mean,
                r.std,
                batch.episode_returns
            );
            on_eval(&point, &policy, &value)?;
            curve.push(point);
        }
    }
    Ok(RlOutcome {
        policy,
        value,
        initial,
        curve,
        trpo_steps,
        ppo_stats,
    })
}
