//! Behavioral cloning: minimize the negative log-likelihood of one
//! demonstration trajectory under the policy.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::ProcessedTrajectory;
use crate::env::{encode_state_into, ArenaConfig, StateMode};
use crate::error::{Error, Result};
use crate::eval::{eval_policy, EVAL_EPISODES, EVAL_STEPS};
use crate::nn::loss::{nll, nll_grad, FeatureMatrix};
use crate::nn::{Adam, AdamConfig, Direction, PolicyNet};
use crate::{derive_seed, stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IlHyperparams {
    pub minibatch: usize,
    pub epochs_per_update: usize,
    pub updates: usize,
    pub lr: f64,
    /// Greedy evaluation after each update; 0 episodes skips it.
    pub eval_episodes: usize,
    pub eval_steps: usize,
    /// Trailing share of pairs held out for the agreement diagnostic.
    pub holdout: f64,
}

impl Default for IlHyperparams {
    fn default() -> Self {
        Self {
            minibatch: 32,
            epochs_per_update: 1,
            updates: 11,
            lr: 1e-3,
            eval_episodes: EVAL_EPISODES,
            eval_steps: EVAL_STEPS,
            holdout: 0.1,
        }
    }
}

impl IlHyperparams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.minibatch > 0
            && self.epochs_per_update > 0
            && self.updates > 0
            && self.lr > 0.0
            && (0.0..1.0).contains(&self.holdout);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("bad imitation hyperparameters: {self:?}")))
        }
    }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BcUpdate {
    pub update: usize,
    /// Mean NLL over the training pairs after this update.
    pub nll: f64,
    pub eval_mean: Option<f64>,
    pub eval_std: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BcReport {
    pub initial_nll: f64,
    pub initial_eval_mean: Option<f64>,
    pub updates: Vec<BcUpdate>,
    pub train_pairs: usize,
    pub holdout_pairs: usize,
    /// Share of held-out pairs whose recorded action is the greedy action.
    pub holdout_agreement: Option<f64>,
}

impl BcReport {
    pub fn final_nll(&self) -> f64 {
        self.updates.last().map_or(self.initial_nll, |u| u.nll)
    }

    /// Per-update records, one JSON object per line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for u in &self.updates {
            out.push_str(&serde_json::to_string(u).expect("plain record"));
            out.push('\n');
        }
        out
    }
}

/// Encoded states and action indices of a trajectory.
pub fn encode_pairs(dataset: &ProcessedTrajectory, mode: StateMode, config: &ArenaConfig) -> (FeatureMatrix, Vec<u8>) {
    let mut feats = FeatureMatrix::with_capacity(mode.input_dim(), dataset.len());
    let mut row = vec![0.0; mode.input_dim()];
    let mut actions = Vec::with_capacity(dataset.len());
    for (s, a) in &dataset.pairs {
        encode_state_into(s, mode, config, &mut row);
        feats.push(&row);
        actions.push(a.index() as u8);
    }
    (feats, actions)
}

fn check_dims(policy: &PolicyNet, mode: StateMode) -> Result<()> {
    if policy.input_dim() != mode.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: policy.input_dim(),
            got: mode.input_dim(),
        });
    }
    Ok(())
}

/// Mean of `-log pi(a_t | s_t)` over the trajectory.
pub fn nll_loss(policy: &PolicyNet, dataset: &ProcessedTrajectory, mode: StateMode, config: &ArenaConfig) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    check_dims(policy, mode)?;
    let (feats, actions) = encode_pairs(dataset, mode, config);
    let idx: Vec<usize> = (0..actions.len()).collect();
    Ok(nll(policy, &feats, &actions, &idx))
}

/// Share of pairs where the greedy action equals the recorded one.
pub fn action_agreement(
    policy: &PolicyNet,
    dataset: &ProcessedTrajectory,
    mode: StateMode,
    config: &ArenaConfig,
) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    check_dims(policy, mode)?;
    let mut trace = policy.net.trace();
    let mut row = vec![0.0; mode.input_dim()];
    let hits = dataset
        .pairs
        .iter()
        .filter(|(s, a)| {
            encode_state_into(s, mode, config, &mut row);
            policy.greedy(&row, &mut trace) == *a
        })
        .count();
    Ok(hits as f64 / dataset.len() as f64)
}

/// Fit a freshly initialized policy to one trajectory.
///
/// The first `1 - holdout` of the pairs are trained on, the tail is kept for
/// the agreement diagnostic. Each update runs `epochs_per_update` shuffled
/// passes of Adam descent on the NLL; the last minibatch of a pass may be short.
pub fn train_bc(
    dataset: &ProcessedTrajectory,
    hyper: &IlHyperparams,
    mode: StateMode,
    config: &ArenaConfig,
    seed: u64,
) -> Result<(PolicyNet, BcReport)> {
    train_bc_with(dataset, hyper, mode, config, seed, |_, _| Ok(()))
}

/// `train_bc` with a hook that sees every update record and the policy
/// after it, e.g. to write checkpoints.
pub fn train_bc_with<F>(
    dataset: &ProcessedTrajectory,
    hyper: &IlHyperparams,
    mode: StateMode,
    config: &ArenaConfig,
    seed: u64,
    mut on_update: F,
) -> Result<(PolicyNet, BcReport)>
where
    F: FnMut(&BcUpdate, &PolicyNet) -> Result<()>,
{
    hyper.validate()?;
    let n_holdout = (dataset.len() as f64 * hyper.holdout).floor() as usize;
    let n_train = dataset.len() - n_holdout;
    if n_train < hyper.minibatch {
        return Err(Error::DatasetTooSmall {
            len: n_train,
            min: hyper.minibatch,
        });
    }
    let (feats, actions) = encode_pairs(dataset, mode, config);
    let mut policy = PolicyNet::new(mode, derive_seed(seed, stream::POLICY_INIT));
    let mut adam = Adam::new(AdamConfig::with_lr(hyper.lr), policy.net.params.len());
    let mut grad = vec![0.0; policy.net.params.len()];
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, stream::SHUFFLE));
    let eval_seed = derive_seed(seed, stream::EVAL);
    let all: Vec<usize> = (0..n_train).collect();

    let evaluate = |p: &PolicyNet| -> Result<Option<(f64, f64)>> {
        if hyper.eval_episodes == 0 {
            return Ok(None);
        }
        let r = eval_policy(p, config, hyper.eval_episodes, hyper.eval_steps, mode, eval_seed)?;
        Ok(Some((r.mean, r.std)))
    };

    let initial_nll = nll(&policy, &feats, &actions, &all);
    let initial_eval_mean = evaluate(&policy)?.map(|e| e.0);
    let mut updates = Vec::with_capacity(hyper.updates);
    let mut order = all.clone();
    for update in 1..=hyper.updates {
        for _ in 0..hyper.epochs_per_update {
            order.shuffle(&mut rng);
            for batch in order.chunks(hyper.minibatch) {
                nll_grad(&policy, &feats, &actions, batch, &mut grad);
                adam.step(&mut policy.net.params, &grad, Direction::Descend);
            }
        }
        let e = evaluate(&policy)?;
        let record = BcUpdate {
            update,
            nll: nll(&policy, &feats, &actions, &all),
            eval_mean: e.map(|e| e.0),
            eval_std: e.map(|e| e.1),
        };
        log::debug!("bc update {update}: nll {:.5} eval {:?}", record.nll, record.eval_mean);
        on_update(&record, &policy)?;
        updates.push(record);
    }

    let holdout_agreement = if n_holdout > 0 {
        let tail = ProcessedTrajectory {
            meta: dataset.meta.clone(),
            pairs: dataset.pairs[n_train..].to_vec(),
        };
        Some(action_agreement(&policy, &tail, mode, config)?)
    } else {
        None
    };
    let report = BcReport {
        initial_nll,
        initial_eval_mean,
        updates,
        train_pairs: n_train,
        holdout_pairs: n_holdout,
        holdout_agreement,
    };
    Ok((policy, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_demo, ScriptedExpert, TrajectoryMeta};
    use crate::env::{encode_state, Compass, State};

    fn meta() -> TrajectoryMeta {
        TrajectoryMeta {
            source: "test".into(),
            coin_seed: 0,
            coins_collected: 0,
        }
    }

    fn quick() -> IlHyperparams {
        IlHyperparams {
            eval_episodes: 0,
            ..IlHyperparams::default()
        }
    }

    fn demo(pairs: usize) -> ProcessedTrajectory {
        generate_demo(&ScriptedExpert::default(), &ArenaConfig::default(), 11, 2)
            .unwrap()
            .concat_pairs()
            .truncated(pairs)
    }

    trait Concat {
        fn concat_pairs(self) -> ProcessedTrajectory;
    }

    impl Concat for Vec<ProcessedTrajectory> {
        fn concat_pairs(self) -> ProcessedTrajectory {
            ProcessedTrajectory {
                meta: self[0].meta.clone(),
                pairs: self.into_iter().flat_map(|t| t.pairs).collect(),
            }
        }
    }

    #[test]
    fn uniform_policy_nll_is_ln8() {
        let d = demo(300);
        let config = ArenaConfig::default();
        for mode in StateMode::ALL {
            let v = nll_loss(&PolicyNet::uniform(mode), &d, mode, &config).unwrap();
            assert!((v - 8f64.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn nll_matches_pairwise_recomputation() {
        let d = demo(100);
        let config = ArenaConfig::default();
        let p = PolicyNet::new(StateMode::Full, 8);
        let oracle = d
            .pairs
            .iter()
            .map(|(s, a)| -p.probs(&encode_state(s, StateMode::Full, &config)).unwrap()[a.index()].ln())
            .sum::<f64>()
            / 100.0;
        assert!((nll_loss(&p, &d, StateMode::Full, &config).unwrap() - oracle).abs() < 1e-12);
    }

    #[test]
    fn certain_policy_has_zero_nll() {
        // every pair takes E from a coinless state; a huge E bias makes p(E) = 1
        let s = State { x: 0, y: 0, sight: None };
        let d = ProcessedTrajectory {
            meta: meta(),
            pairs: vec![(s, Compass::E); 10],
        };
        let mut p = PolicyNet::uniform(StateMode::Full);
        p.net.b2_mut()[0] = 1e3;
        assert_eq!(nll_loss(&p, &d, StateMode::Full, &ArenaConfig::default()).unwrap(), 0.0);
    }

    #[test]
    fn empty_and_small_datasets_rejected() {
        let config = ArenaConfig::default();
        let empty = ProcessedTrajectory { meta: meta(), pairs: vec![] };
        assert!(matches!(
            nll_loss(&PolicyNet::uniform(StateMode::Full), &empty, StateMode::Full, &config),
            Err(Error::EmptyDataset)
        ));
        assert!(matches!(
            train_bc(&demo(20), &quick(), StateMode::Full, &config, 0),
            Err(Error::DatasetTooSmall { .. })
        ));
    }

    #[test]
    fn training_reduces_nll_and_is_deterministic() {
        let d = demo(1500);
        let config = ArenaConfig::default();
        let before = d.clone();
        let (p1, r1) = train_bc(&d, &quick(), StateMode::Full, &config, 3).unwrap();
        let (p2, r2) = train_bc(&d, &quick(), StateMode::Full, &config, 3).unwrap();
        assert_eq!(d, before);
        assert_eq!(p1, p2);
        assert_eq!(r1, r2);
        assert_eq!(r1.updates.len(), 11);
        assert!(r1.updates[0].nll < r1.initial_nll);
        assert!(r1.final_nll() < r1.initial_nll);
        assert_eq!((r1.train_pairs, r1.holdout_pairs), (1350, 150));
        assert_eq!(r1.to_jsonl().lines().count(), 11);
    }

    #[test]
    fn jsonl_record_shape() {
        let u = BcUpdate {
            update: 1,
            nll: 0.5,
            eval_mean: Some(10.0),
            eval_std: Some(1.0),
        };
        let v: serde_json::Value = serde_json::from_str(&serde_json::to_string(&u).unwrap()).unwrap();
        for key in ["update", "nll", "eval_mean", "eval_std"] {
            assert!(v.get(key).is_some());
        }
    }
}
