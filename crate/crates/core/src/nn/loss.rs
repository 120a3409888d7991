//! Scalar objectives over a minibatch and their exact gradients.
//!
//! Every objective is a mean over the selected rows. Gradient functions
//! overwrite `grad` with the gradient of the returned quantity; the caller
//! picks the optimizer direction.

use super::{log_softmax_at, softmax_into, Mlp, PolicyNet, ValueNet, N_ACTIONS};

/// Row-major feature rows of a fixed width.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureMatrix {
    pub dim: usize,
    pub data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(dim: usize) -> Self {
        Self { dim, data: Vec::new() }
    }

    pub fn with_capacity(dim: usize, rows: usize) -> Self {
        Self {
            dim,
            data: Vec::with_capacity(dim * rows),
        }
    }

    pub fn push(&mut self, row: &[f64]) {
        assert_eq!(row.len(), self.dim);
        self.data.extend_from_slice(row);
    }

    pub fn rows(&self) -> usize {
        self.data.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

/// Per-sample policy terms for surrogate objectives.
#[derive(Debug, Clone, Copy)]
pub struct SurrogateTerms<'a> {
    pub actions: &'a [u8],
    pub old_log_probs: &'a [f64],
    pub advantages: &'a [f64],
}

/// Shape of the policy surrogate: clipping (PPO) or plain ratio (TRPO), plus
/// an optional entropy bonus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurrogateShape {
    pub clip: Option<f64>,
    pub entropy_coef: f64,
}

/// Runs forward and backward over `idx`, with `per_sample` filling `dL_i/dout`
/// and returning `L_i`. Returns the mean loss; `grad` receives the mean gradient.
pub fn accumulate<F>(net: &Mlp, feats: &FeatureMatrix, idx: &[usize], grad: &mut [f64], mut per_sample: F) -> f64
where
    F: FnMut(usize, &[f64], &mut [f64]) -> f64,
{
    assert!(!idx.is_empty(), "empty minibatch");
    grad.fill(0.0);
    let mut trace = net.trace();
    let mut dout = vec![0.0; net.output_dim];
    let mut dh = vec![0.0; net.hidden_dim];
    let scale = 1.0 / idx.len() as f64;
    let mut total = 0.0;
    for &i in idx {
        let x = feats.row(i);
        net.forward_into(x, &mut trace);
        dout.fill(0.0);
        total += per_sample(i, &trace.out, &mut dout);
        for d in dout.iter_mut() {
            *d *= scale;
        }
        net.backward_into(x, &trace, &dout, grad, &mut dh);
    }
    total * scale
}

fn mean_over<F: FnMut(usize, &[f64]) -> f64>(net: &Mlp, feats: &FeatureMatrix, idx: &[usize], mut f: F) -> f64 {
    let mut trace = net.trace();
    let mut total = 0.0;
    for &i in idx {
        net.forward_into(feats.row(i), &mut trace);
        total += f(i, &trace.out);
    }
    total / idx.len() as f64
}

/// Mean negative log-likelihood of `actions`.
pub fn nll(policy: &PolicyNet, feats: &FeatureMatrix, actions: &[u8], idx: &[usize]) -> f64 {
    mean_over(&policy.net, feats, idx, |i, z| -log_softmax_at(z, actions[i] as usize))
}

pub fn nll_grad(policy: &PolicyNet, feats: &FeatureMatrix, actions: &[u8], idx: &[usize], grad: &mut [f64]) -> f64 {
    let mut p = [0.0; N_ACTIONS];
    accumulate(&policy.net, feats, idx, grad, |i, z, dz| {
        let a = actions[i] as usize;
        softmax_into(z, &mut p);
        dz.copy_from_slice(&p);
        dz[a] -= 1.0;
        -log_softmax_at(z, a)
    })
}

fn surrogate_sample(z: &[f64], i: usize, terms: &SurrogateTerms, shape: SurrogateShape) -> f64 {
    let a = terms.actions[i] as usize;
    let ratio = (log_softmax_at(z, a) - terms.old_log_probs[i]).exp();
    let adv = terms.advantages[i];
    let mut obj = ratio * adv;
    if let Some(eps) = shape.clip {
        obj = obj.min(ratio.clamp(1.0 - eps, 1.0 + eps) * adv);
    }
    if shape.entropy_coef != 0.0 {
        obj += shape.entropy_coef * super::entropy_of_logits(z);
    }
    obj
}

/// Mean of `min(r A, clip(r) A) + c * H` (or `r A` without clipping), where
/// `r = exp(log pi(a|s) - old log prob)`. This is an objective to maximize.
pub fn surrogate(
    policy: &PolicyNet,
    feats: &FeatureMatrix,
    terms: &SurrogateTerms,
    shape: SurrogateShape,
    idx: &[usize],
) -> f64 {
    mean_over(&policy.net, feats, idx, |i, z| surrogate_sample(z, i, terms, shape))
}

pub fn surrogate_grad(
    policy: &PolicyNet,
    feats: &FeatureMatrix,
    terms: &SurrogateTerms,
    shape: SurrogateShape,
    idx: &[usize],
    grad: &mut [f64],
) -> f64 {
    let mut p = [0.0; N_ACTIONS];
    accumulate(&policy.net, feats, idx, grad, |i, z, dz| {
        softmax_into(z, &mut p);
        let a = terms.actions[i] as usize;
        let logp = log_softmax_at(z, a);
        let ratio = (logp - terms.old_log_probs[i]).exp();
        let adv = terms.advantages[i];
        let unclipped = ratio * adv;
        let mut obj = unclipped;
        let mut active = true;
        if let Some(eps) = shape.clip {
            let clipped = ratio.clamp(1.0 - eps, 1.0 + eps) * adv;
            if clipped < unclipped {
                obj = clipped;
                // clamp saturated: constant in theta
                active = false;
            }
        }
        if active {
            // d(r A)/dz = r A (onehot(a) - p)
            let c = unclipped;
            for (k, d) in dz.iter_mut().enumerate() {
                *d = -c * p[k];
            }
            dz[a] += c;
        }
        if shape.entropy_coef != 0.0 {
            // dH/dz_k = -p_k (log p_k + H)
            let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = z.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
            let mut h = 0.0;
            let mut logp_all = [0.0; N_ACTIONS];
            for k in 0..N_ACTIONS {
                logp_all[k] = z[k] - max - lse;
                if p[k] > 0.0 {
                    h -= p[k] * logp_all[k];
                }
            }
            for k in 0..N_ACTIONS {
                dz[k] -= shape.entropy_coef * p[k] * (logp_all[k] + h);
            }
            obj += shape.entropy_coef * h;
        }
        obj
    })
}

/// Mean squared error to `targets`.
pub fn value_mse(value: &ValueNet, feats: &FeatureMatrix, targets: &[f64], idx: &[usize]) -> f64 {
    mean_over(&value.net, feats, idx, |i, out| {
        let e = out[0] - targets[i];
        e * e
    })
}

pub fn value_mse_grad(value: &ValueNet, feats: &FeatureMatrix, targets: &[f64], idx: &[usize], grad: &mut [f64]) -> f64 {
    accumulate(&value.net, feats, idx, grad, |i, out, d| {
        let e = out[0] - targets[i];
        d[0] = 2.0 * e;
        e * e
    })
}

/// Mean `KL(old || current)`; `old_probs` holds eight probabilities per row.
pub fn mean_kl(policy: &PolicyNet, feats: &FeatureMatrix, old_probs: &[f64], idx: &[usize]) -> f64 {
    mean_over(&policy.net, feats, idx, |i, z| {
        let old = &old_probs[i * N_ACTIONS..(i + 1) * N_ACTIONS];
        (0..N_ACTIONS)
            .filter(|&k| old[k] > 0.0)
            .map(|k| old[k] * (old[k].ln() - log_softmax_at(z, k)))
            .sum()
    })
}

pub fn mean_kl_grad(policy: &PolicyNet, feats: &FeatureMatrix, old_probs: &[f64], idx: &[usize], grad: &mut [f64]) -> f64 {
    let mut p = [0.0; N_ACTIONS];
    accumulate(&policy.net, feats, idx, grad, |i, z, dz| {
        let old = &old_probs[i * N_ACTIONS..(i + 1) * N_ACTIONS];
        softmax_into(z, &mut p);
        let mut kl = 0.0;
        for k in 0..N_ACTIONS {
            dz[k] = p[k] - old[k];
            if old[k] > 0.0 {
                kl += old[k] * (old[k].ln() - log_softmax_at(z, k));
            }
        }
        kl
    })
}

/// `(H + damping I) v`, where `H` is the Hessian of the mean
/// `KL(pi_current || pi_theta)` at `theta = current`: the Fisher matrix
/// `mean_i J_i^T (diag(p_i) - p_i p_i^T) J_i` with `J_i` the logit Jacobian.
pub fn fisher_vector_product(policy: &PolicyNet, feats: &FeatureMatrix, idx: &[usize], v: &[f64], damping: f64) -> Vec<f64> {
    let net = &policy.net;
    assert_eq!(v.len(), net.params.len());
    let mut out = vec![0.0; v.len()];
    let mut trace = net.trace();
    let mut dh = vec![0.0; net.hidden_dim];
    let mut jv = [0.0; N_ACTIONS];
    let mut u = [0.0; N_ACTIONS];
    let mut p = [0.0; N_ACTIONS];
    let scale = 1.0 / idx.len() as f64;
    for &i in idx {
        let x = feats.row(i);
        net.forward_into(x, &mut trace);
        softmax_into(&trace.out, &mut p);
        net.jvp_into(x, &trace, v, &mut dh, &mut jv);
        let pjv: f64 = p.iter().zip(&jv).map(|(a, b)| a * b).sum();
        for k in 0..N_ACTIONS {
            u[k] = scale * p[k] * (jv[k] - pjv);
        }
        net.backward_into(x, &trace, &u, &mut out, &mut dh);
    }
    for (o, &vi) in out.iter_mut().zip(v) {
        *o += damping * vi;
    }
    out
}

/// Log-probabilities of `actions` and full probability rows under `policy`.
pub fn log_probs_and_probs(policy: &PolicyNet, feats: &FeatureMatrix, actions: &[u8]) -> (Vec<f64>, Vec<f64>) {
    let n = feats.rows();
    let mut trace = policy.net.trace();
    let mut logp = Vec::with_capacity(n);
    let mut probs = vec![0.0; n * N_ACTIONS];
    for i in 0..n {
        policy.net.forward_into(feats.row(i), &mut trace);
        logp.push(log_softmax_at(&trace.out, actions[i] as usize));
        softmax_into(&trace.out, &mut probs[i * N_ACTIONS..(i + 1) * N_ACTIONS]);
    }
    (logp, probs)
}
