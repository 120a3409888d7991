//! Independent reference implementations shared by the integration suites.
#![allow(dead_code)]

use forage::env::{move_cell, ArenaConfig, Compass, Env};
use forage::nn::Mlp;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Sector of an angle given in tenths of a degree, by integer arithmetic:
/// compass `k` owns `[45k - 22.5, 45k + 22.5)`.
pub fn sector_of_tenths(tenths: i64) -> Compass {
    Compass::ALL[((tenths + 225).div_euclid(450) % 8) as usize]
}

/// Every angle on the 0.1 degree grid where `quantize_direction` disagrees
/// with the integer oracle, scanned at radius `r`.
pub fn quantization_mismatches(r: f64) -> Vec<i64> {
    (0..3600)
        .filter(|&k| {
            let rad = (k as f64 / 10.0).to_radians();
            let got = forage::env::quantize_direction(r * rad.cos(), r * rad.sin()).unwrap();
            got != sector_of_tenths(k)
        })
        .collect()
}

/// Counts of violated step invariants over `steps` random actions, with an
/// episode reset whenever the configured length is reached.
#[derive(Debug, Default, PartialEq)]
pub struct StepAudit {
    pub steps: usize,
    pub episodes: usize,
    pub coin_increase: usize,
    pub reward_mismatch: usize,
    pub off_grid_move: usize,
    pub out_of_bounds: usize,
    pub sight_mismatch: usize,
}

impl StepAudit {
    pub fn clean(&self) -> bool {
        self.coin_increase + self.reward_mismatch + self.off_grid_move + self.out_of_bounds + self.sight_mismatch == 0
    }
}

pub fn audit_random_steps(config: &ArenaConfig, steps: usize, seed: u64) -> StepAudit {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut env = Env::new(config.clone());
    let h = config.half_extent;
    let mut audit = StepAudit {
        steps,
        ..StepAudit::default()
    };
    let mut state = env.reset(&mut rng);
    let mut start_coins = env.coins().remaining();
    let mut earned = 0usize;
    audit.episodes = 1;
    for _ in 0..steps {
        if env.done() {
            state = env.reset(&mut rng);
            start_coins = env.coins().remaining();
            earned = 0;
            audit.episodes += 1;
        }
        let before = env.coins().remaining();
        let a = Compass::ALL[rng.random_range(0..8)];
        let out = env.step(a);
        let after = env.coins().remaining();
        earned += out.reward as usize;
        if after > before {
            audit.coin_increase += 1;
        }
        if before as i64 - after as i64 != out.reward as i64 || start_coins as i64 - after as i64 != earned as i64 {
            audit.reward_mismatch += 1;
        }
        if out.state.cell() != move_cell(state.cell(), a, config) {
            audit.off_grid_move += 1;
        }
        if out.state.x.abs() > h || out.state.y.abs() > h {
            audit.out_of_bounds += 1;
        }
        // brute-force sight: nearest live coin within the visibility radius
        let (px, py) = (out.state.x as f64, out.state.y as f64);
        let visible: Vec<(f64, Compass)> = env
            .coins()
            .coins()
            .iter()
            .filter(|c| !c.collected)
            .map(|c| (c.pos[0] - px, c.pos[1] - py))
            .filter(|(dx, dy)| dx * dx + dy * dy <= config.visibility_radius * config.visibility_radius)
            .map(|(dx, dy)| (dx * dx + dy * dy, sector_of_offset(dx, dy)))
            .collect();
        let ok = match out.state.sight {
            None => visible.is_empty(),
            Some(dir) => {
                let best = visible.iter().map(|v| v.0).fold(f64::INFINITY, f64::min);
                visible.iter().any(|&(d2, s)| d2 == best && s == dir)
            }
        };
        if !ok {
            audit.sight_mismatch += 1;
        }
        state = out.state;
    }
    audit
}

/// Compass whose center ray is angularly closest to the offset; on an exact
/// boundary the counterclockwise neighbour wins.
pub fn sector_of_offset(dx: f64, dy: f64) -> Compass {
    let r = dx.hypot(dy);
    let mut best = 0;
    let mut best_cos = f64::NEG_INFINITY;
    for k in 0..8 {
        let c = (k as f64 * 45.0).to_radians();
        let cos = (dx * c.cos() + dy * c.sin()) / r;
        let tie = (cos - best_cos).abs() <= 1e-12;
        if (!tie && cos > best_cos) || (tie && k == (best + 1) % 8) {
            best = k;
            best_cos = cos;
        }
    }
    Compass::ALL[best]
}

/// Central finite difference of `f` along parameter `i`.
pub fn central_diff<F: FnMut(&Mlp) -> f64>(net: &Mlp, i: usize, h: f64, mut f: F) -> f64 {
    let mut plus = net.clone();
    plus.params[i] += h;
    let mut minus = net.clone();
    minus.params[i] -= h;
    (f(&plus) - f(&minus)) / (2.0 * h)
}

/// `|a - n| / max(|a|, |n|, floor)`: relative error with an absolute floor
/// for coordinates whose gradient is essentially zero.
pub fn rel_err(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Advantages as a direct double sum of discounted TD residuals.
pub fn gae_double_sum(r: &[f64], v: &[f64], done: &[bool], last: f64, gamma: f64, lambda: f64) -> Vec<f64> {
    let n = r.len();
    let next = |t: usize| if t + 1 < n { v[t + 1] } else { last };
    let delta = |t: usize| r[t] + if done[t] { 0.0 } else { gamma * next(t) } - v[t];
    (0..n)
        .map(|t| {
            let mut sum = 0.0;
            let mut w = 1.0;
            for k in t..n {
                sum += w * delta(k);
                if done[k] {
                    break;
                }
                w *= gamma * lambda;
            }
            sum
        })
        .collect()
}

/// Gaussian elimination with partial pivoting.
pub fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
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

/// Pearson chi-square statistic against equal expected counts.
pub fn chi_square_uniform(counts: &[usize]) -> f64 {
    let n: usize = counts.iter().sum();
    let e = n as f64 / counts.len() as f64;
    counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Hash of every file under `dir`, by sorted relative path.
pub fn hash_tree(dir: &std::path::Path) -> String {
    fn walk(dir: &std::path::Path, out: &mut Vec<std::path::PathBuf>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(&p, out);
            } else {
                out.push(p);
            }
        }
    }
    let mut files = Vec::new();
    walk(dir, &mut files);
    files.sort();
    let mut h = Sha256::new();
    for f in files {
        h.update(f.strip_prefix(dir).unwrap().to_string_lossy().as_bytes());
        h.update(std::fs::read(&f).unwrap());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Loss {
    Nll,
    /// Clipped PPO surrogate with an entropy bonus.
    Surrogate,
    ValueMse,
}

/// Encoded random states for `mode`.
pub fn random_features(mode: forage::StateMode, n: usize, rng: &mut ChaCha8Rng) -> forage::nn::loss::FeatureMatrix {
    let config = ArenaConfig::default();
    let mut m = forage::nn::loss::FeatureMatrix::new(mode.input_dim());
    for _ in 0..n {
        let s = forage::State {
            x: rng.random_range(-80..=80),
            y: rng.random_range(-80..=80),
            sight: rng.random_bool(0.6).then(|| Compass::ALL[rng.random_range(0..8)]),
        };
        m.push(&forage::env::encode_state(&s, mode, &config));
    }
    m
}

/// Largest relative error between the analytic gradient of `loss` and a
/// central difference, over `coords` random coordinates of a random net.
/// Parameters are scaled up from the default init so the softmax is far
/// from uniform.
pub fn max_gradient_error(loss: Loss, seed: u64, coords: usize) -> f64 {
    use forage::nn::loss::*;
    use forage::nn::{PolicyNet, ValueNet};
    use forage::StateMode;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mode = StateMode::ALL[seed as usize % 3];
    let n = 24;
    let feats = random_features(mode, n, &mut rng);
    let idx: Vec<usize> = (0..n).collect();
    let actions: Vec<u8> = (0..n).map(|_| rng.random_range(0..8)).collect();
    let adv: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    let targets: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();

    let (net, grad, f): (Mlp, Vec<f64>, Box<dyn Fn(&Mlp) -> f64>) = match loss {
        Loss::Nll | Loss::Surrogate => {
            let mut p = PolicyNet::new(mode, seed);
            p.net.params.iter_mut().for_each(|w| *w *= 3.0);
            let mut g = vec![0.0; p.net.params.len()];
            if loss == Loss::Nll {
                nll_grad(&p, &feats, &actions, &idx, &mut g);
                let (feats, actions, idx) = (feats.clone(), actions.clone(), idx.clone());
                (p.net.clone(), g, Box::new(move |m: &Mlp| nll(&PolicyNet { net: m.clone() }, &feats, &actions, &idx)))
            } else {
                // behaviour log-probs a little off the current ones, so that
                // some samples sit in the clipped region
                let (lp, _) = log_probs_and_probs(&p, &feats, &actions);
                let old: Vec<f64> = lp.iter().map(|l| l + rng.random_range(-0.4..0.4)).collect();
                let shape = SurrogateShape {
                    clip: Some(0.2),
                    entropy_coef: 0.01,
                };
                let terms = SurrogateTerms {
                    actions: &actions,
                    old_log_probs: &old,
                    advantages: &adv,
                };
                surrogate_grad(&p, &feats, &terms, shape, &idx, &mut g);
                let (feats, actions, idx) = (feats.clone(), actions.clone(), idx.clone());
                let adv = adv.clone();
                (
                    p.net.clone(),
                    g,
                    Box::new(move |m: &Mlp| {
                        let terms = SurrogateTerms {
                            actions: &actions,
                            old_log_probs: &old,
                            advantages: &adv,
                        };
                        surrogate(&PolicyNet { net: m.clone() }, &feats, &terms, shape, &idx)
                    }),
                )
            }
        }
        Loss::ValueMse => {
            let v = ValueNet::new(mode, seed);
            let mut g = vec![0.0; v.net.params.len()];
            value_mse_grad(&v, &feats, &targets, &idx, &mut g);
            let (feats, idx) = (feats.clone(), idx.clone());
            (v.net.clone(), g, Box::new(move |m: &Mlp| value_mse(&ValueNet { net: m.clone() }, &feats, &targets, &idx)))
        }
    };
    (0..coords)
        .map(|_| {
            let i = rng.random_range(0..net.params.len());
            rel_err(grad[i], central_diff(&net, i, 1e-5, &f), 1e-6)
        })
        .fold(0.0, f64::max)
}
