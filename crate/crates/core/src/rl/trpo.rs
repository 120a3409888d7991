use serde::{Deserialize, Serialize};

use super::{Advantages, RolloutBatch};
use crate::nn::dot;
use crate::nn::loss::{
    fisher_vector_product, log_probs_and_probs, mean_kl, surrogate, surrogate_grad, SurrogateShape, SurrogateTerms,
};
use crate::nn::PolicyNet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrpoHyperparams {
    /// Bound on the mean KL between consecutive policies.
    pub max_kl: f64,
    pub damping: f64,
    pub cg_iters: usize,
    pub backtrack: f64,
    pub max_backtracks: usize,
    /// Accept a step while its measured KL stays within `kl_slack * max_kl`.
    pub kl_slack: f64,
    /// Value regression after each policy step, with Adam.
    pub value_lr: f64,
    pub value_epochs: usize,
    pub value_minibatch: usize,
}

impl Default for TrpoHyperparams {
    fn default() -> Self {
        Self {
            max_kl: 0.05,
            damping: 0.1,
            cg_iters: 20,
            backtrack: 0.8,
            max_backtracks: 10,
            kl_slack: 1.5,
            value_lr: 3e-4,
            value_epochs: 10,
            value_minibatch: 64,
        }
    }
}

/// Solves `A x = b` for symmetric positive-definite `A` given only
/// products `A v`, starting from `x = 0`.
pub fn conjugate_gradient<F>(mut avp: F, b: &[f64], iters: usize) -> Vec<f64>
where
    F: FnMut(&[f64]) -> Vec<f64>,
{
    let mut x = vec![0.0; b.len()];
    let mut r = b.to_vec();
    let mut p = b.to_vec();
    let mut rr = dot(&r, &r);
    for _ in 0..iters {
        if rr <= 1e-20 {
            break;
        }
        let ap = avp(&p);
        let alpha = rr / dot(&p, &ap);
        for i in 0..x.len() {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let next = dot(&r, &r);
        let beta = next / rr;
        rr = next;
        for i in 0..p.len() {
            p[i] = r[i] + beta * p[i];
        }
    }
    x
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrpoStep {
    pub accepted: bool,
    /// Measured mean KL of the applied step (0 when rejected).
    pub kl: f64,
    pub improvement: f64,
    pub backtracks: usize,
}

impl TrpoStep {
    fn rejected(backtracks: usize) -> Self {
        Self {
            accepted: false,
            kl: 0.0,
            improvement: 0.0,
            backtracks,
        }
    }
}

/// Natural-gradient step on the importance-weighted surrogate, scaled to the
/// KL bound and shrunk by backtracking until it both improves the surrogate
/// and respects the (slackened) bound. Leaves `policy` untouched otherwise.
pub fn trpo_update(policy: &mut PolicyNet, batch: &RolloutBatch, adv: &Advantages, hyper: &TrpoHyperparams) -> TrpoStep {
    let idx: Vec<usize> = (0..batch.len()).collect();
    let terms = SurrogateTerms {
        actions: &batch.actions,
        old_log_probs: &batch.log_probs,
        advantages: &adv.normalized,
    };
    let shape = SurrogateShape {
        clip: None,
        entropy_coef: 0.0,
    };
    let (_, old_probs) = log_probs_and_probs(policy, &batch.feats, &batch.actions);
    let mut g = vec![0.0; policy.net.params.len()];
    let before = surrogate_grad(policy, &batch.feats, &terms, shape, &idx, &mut g);

    let fvp = |v: &[f64]| fisher_vector_product(policy, &batch.feats, &idx, v, hyper.damping);
    let dir = conjugate_gradient(fvp, &g, hyper.cg_iters);
    let curvature = dot(&dir, &fisher_vector_product(policy, &batch.feats, &idx, &dir, hyper.damping));
    if !curvature.is_finite() || curvature <= 0.0 || dir.iter().any(|d| !d.is_finite()) {
        log::warn!("trpo: non-finite or degenerate search direction, skipping update");
        return TrpoStep::rejected(0);
    }
    let scale = (2.0 * hyper.max_kl / curvature).sqrt();
    let start = policy.net.params.clone();
    let mut frac = 1.0;
    for k in 0..hyper.max_backtracks {
        for ((p, s), d) in policy.net.params.iter_mut().zip(&start).zip(&dir) {
            *p = s + frac * scale * d;
        }
        let after = surrogate(policy, &batch.feats, &terms, shape, &idx);
        let kl = mean_kl(policy, &batch.feats, &old_probs, &idx);
        if after.is_finite() && kl.is_finite() && after > before && kl <= hyper.kl_slack * hyper.max_kl {
            return TrpoStep {
                accepted: true,
                kl,
                improvement: after - before,
                backtracks: k,
            };
        }
        frac *= hyper.backtrack;
    }
    policy.net.params.copy_from_slice(&start);
    TrpoStep::rejected(hyper.max_backtracks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_operator_converges_in_one_iteration() {
        let b = vec![1.0, -2.0, 0.5];
        let mut calls = 0;
        let x = conjugate_gradient(
            |v| {
                calls += 1;
                v.to_vec()
            },
            &b,
            20,
        );
        assert_eq!(x, b);
        assert_eq!(calls, 1);
    }

    /// Gaussian elimination with partial pivoting.
    fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
        let n = b.len();
        for c in 0..n {
            let piv = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
            a.swap(c, piv);
            b.swap(c, piv);
            for r in c + 1..n {
                let f = a[r][c] / a[c][c];
                for k in c..n {
                    a[r][k] -= f * a[c][k];
                }
                b[r] -= f * b[c];
            }
        }
        let mut x = vec![0.0; n];
        for r in (0..n).rev() {
            let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
            x[r] = (b[r] - s) / a[r][r];
        }
        x
    }

    #[test]
    fn matches_dense_solve_on_spd_systems() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let m: Vec<Vec<f64>> = (0..5).map(|_| (0..5).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
            // M M^T + I is symmetric positive definite
            let a: Vec<Vec<f64>> = (0..5)
                .map(|i| (0..5).map(|j| dot(&m[i], &m[j]) + if i == j { 1.0 } else { 0.0 }).collect())
                .collect();
            let b: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
            let x = conjugate_gradient(|v| a.iter().map(|row| dot(row, v)).collect(), &b, 20);
            let want = dense_solve(a.clone(), b.clone());
            for (u, w) in x.iter().zip(&want) {
                assert!((u - w).abs() <= 1e-6);
            }
        }
    }
}
