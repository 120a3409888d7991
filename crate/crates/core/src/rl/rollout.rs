use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::env::{encode_state_into, ArenaConfig, Compass, Env, State, StateMode};
use crate::nn::loss::FeatureMatrix;
use crate::nn::{log_softmax_at, softmax_into, PolicyNet, N_ACTIONS};

/// On-policy experience from one policy snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutBatch {
    pub feats: FeatureMatrix,
    pub actions: Vec<u8>,
    pub rewards: Vec<f64>,
    /// Log-probability of each action under the behavior policy.
    pub log_probs: Vec<f64>,
    /// `dones[t]` is set when step `t` is the last step of its episode.
    pub dones: Vec<bool>,
    /// Encoded state reached after the final step, for bootstrapping a cut
    /// episode.
    pub bootstrap: Vec<f64>,
    /// Totals of the episodes that finished inside this batch.
    pub episode_returns: Vec<f64>,
}

impl RolloutBatch {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

/// Draws a category from `probs` with one uniform number.
pub fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    // rounding left `acc` just below 1; take the last non-zero entry
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}

/// Environment plus RNG carried across batches, so an episode cut at the end
/// of one batch continues at the start of the next.
pub struct Collector {
    env: Env,
    mode: StateMode,
    rng: ChaCha8Rng,
    state: Option<State>,
    episode_return: f64,
}

impl Collector {
    pub fn new(config: ArenaConfig, mode: StateMode, seed: u64) -> Self {
        Self {
            env: Env::new(config),
            mode,
            rng: ChaCha8Rng::seed_from_u64(seed),
            state: None,
            episode_return: 0.0,
        }
    }

    pub fn collect(&mut self, policy: &PolicyNet, steps: usize) -> RolloutBatch {
        let dim = self.mode.input_dim();
        assert_eq!(policy.input_dim(), dim, "policy does not match the collector's state mode");
        let config = self.env.config().clone();
        let mut batch = RolloutBatch {
            feats: FeatureMatrix::with_capacity(dim, steps),
            actions: Vec::with_capacity(steps),
            rewards: Vec::with_capacity(steps),
            log_probs: Vec::with_capacity(steps),
            dones: Vec::with_capacity(steps),
            bootstrap: vec![0.0; dim],
            episode_returns: Vec::new(),
        };
        let mut row = vec![0.0; dim];
        let mut trace = policy.net.trace();
        let mut probs = [0.0; N_ACTIONS];
        for _ in 0..steps {
            let state = match self.state {
                Some(s) if !self.env.done() => s,
                _ => {
                    self.episode_return = 0.0;
                    self.env.reset(&mut self.rng)
                }
            };
            encode_state_into(&state, self.mode, &config, &mut row);
            policy.net.forward_into(&row, &mut trace);
            softmax_into(&trace.out, &mut probs);
            let a = sample_categorical(&probs, &mut self.rng);
            let out = self.env.step(Compass::ALL[a]);
            let done = self.env.done();
            self.episode_return += out.reward as f64;
            if done {
                batch.episode_returns.push(self.episode_return);
            }
            batch.feats.push(&row);
            batch.actions.push(a as u8);
            batch.rewards.push(out.reward as f64);
            batch.log_probs.push(log_softmax_at(&trace.out, a));
            batch.dones.push(done);
            self.state = Some(out.state);
        }
        if let Some(s) = self.state {
            encode_state_into(&s, self.mode, &config, &mut batch.bootstrap);
        }
        batch
    }
}

/// Sample `steps` steps of back-to-back episodes with actions drawn from
/// `policy`, starting from a fresh reset.
pub fn collect_rollout(
    policy: &PolicyNet,
    config: &ArenaConfig,
    mode: StateMode,
    steps: usize,
    seed: u64,
) -> RolloutBatch {
    Collector::new(config.clone(), mode, seed).collect(policy, steps)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_arena_gives_no_reward() {
        let b = collect_rollout(&PolicyNet::uniform(StateMode::Full), &ArenaConfig::empty(), StateMode::Full, 4000, 1);
        assert!(b.rewards.iter().all(|&r| r == 0.0));
        assert_eq!(b.len(), 4000);
    }

    #[test]
    fn episode_boundaries_fall_on_episode_length() {
        let config = ArenaConfig::default();
        let b = collect_rollout(&PolicyNet::new(StateMode::Full, 2), &config, StateMode::Full, 30000, 3);
        let ends: Vec<usize> = (0..b.len()).filter(|&t| b.dones[t]).map(|t| t + 1).collect();
        assert_eq!(ends, (1..=8).map(|k| k * 3464).collect::<Vec<_>>());
        assert_eq!(b.episode_returns.len(), 8);
        let total: f64 = b.rewards[..8 * 3464].iter().sum();
        assert_eq!(total, b.episode_returns.iter().sum::<f64>());
    }

    #[test]
    fn recorded_log_probs_match_recomputation() {
        let config = ArenaConfig::default();
        let p = PolicyNet::new(StateMode::Egocentric, 5);
        let b = collect_rollout(&p, &config, StateMode::Egocentric, 5000, 6);
        for t in 0..b.len() {
            let lp = p.log_prob(b.feats.row(t), Compass::ALL[b.actions[t] as usize]).unwrap();
            assert!((lp - b.log_probs[t]).abs() <= 1e-12);
            assert!(b.log_probs[t].is_finite());
        }
    }

    #[test]
    fn seeded_and_resumable() {
        let config = ArenaConfig::default();
        let p = PolicyNet::new(StateMode::Full, 1);
        assert_eq!(
            collect_rollout(&p, &config, StateMode::Full, 3000, 9),
            collect_rollout(&p, &config, StateMode::Full, 3000, 9)
        );
        // a cut episode carries on into the next batch
        let mut c = Collector::new(config, StateMode::Full, 9);
        let first = c.collect(&p, 3000);
        let second = c.collect(&p, 1000);
        assert_eq!(first.bootstrap, second.feats.row(0));
        assert_eq!(second.dones.iter().position(|&d| d), Some(463));
    }

    #[test]
    fn categorical_sampler_frequencies() {
        let probs = [0.5, 0.0, 0.25, 0.25, 0.0, 0.0, 0.0, 0.0];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut counts = [0usize; 8];
        for _ in 0..40000 {
            counts[sample_categorical(&probs, &mut rng)] += 1;
        }
        assert_eq!(counts[1] + counts[4..].iter().sum::<usize>(), 0);
        assert!((counts[0] as f64 / 40000.0 - 0.5).abs() < 0.01);
        assert!((counts[2] as f64 / 40000.0 - 0.25).abs() < 0.01);
    }
}
