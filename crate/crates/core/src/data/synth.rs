use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{RawTrajectory, Sample};
use crate::env::{sample_coins, ArenaConfig};

/// Continuous forward/turn movement model of a recording session.
#[derive(Debug, Clone, PartialEq)]
pub struct Kinematics {
    /// m/s while moving forward.
    pub speed: f64,
    /// degrees per second.
    pub turn_rate: f64,
    pub sample_hz: f64,
    pub duration: f64,
    /// Chance per second of stopping for a few seconds.
    pub pause_rate: f64,
}

impl Default for Kinematics {
    fn default() -> Self {
        Self {
            speed: 6.5,
            turn_rate: 90.0,
            sample_hz: 60.0,
            duration: 480.0,
            pause_rate: 0.02,
        }
    }
}

/// A simulated recording and the coins its forager picked up.
#[derive(Debug, Clone)]
pub struct SimulatedSession {
    pub raw: RawTrajectory,
    pub collected: u32,
}

fn wrap_deg(a: f64) -> f64 {
    (a + 180.0).rem_euclid(360.0) - 180.0
}

/// Simulate a human-like forager under the task rules: it steers toward the
/// closest visible coin, wanders when none is visible, turns away from walls
/// and occasionally stops. Coins are collected within the collection radius
/// of its continuous position.
pub fn simulate_raw(config: &ArenaConfig, kin: &Kinematics, seed: u64) -> SimulatedSession {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coins = sample_coins(config, config.coin_seed);
    let h = config.half_extent as f64;
    let dt = 1.0 / kin.sample_hz;
    let n = (kin.duration * kin.sample_hz).round() as usize;

    let mut x = rng.random_range(-h..h);
    let mut y = rng.random_range(-h..h);
    let mut heading: f64 = rng.random_range(-180.0..180.0);
    let mut wander = heading;
    let mut next_wander = 0.0;
    let mut paused_until = -1.0;
    let mut collected = 0u32;
    let vis2 = config.visibility_radius * config.visibility_radius;
    let col2 = config.collection_radius * config.collection_radius;

    let mut samples = Vec::with_capacity(n);
    for i in 0..n {
        let t = i as f64 * dt;
        samples.push(Sample { t, x, y });

        if t < paused_until {
            continue;
        }
        if rng.random::<f64>() < kin.pause_rate * dt {
            paused_until = t + rng.random_range(1.0..3.0);
            continue;
        }

        let mut nearest: Option<(f64, f64, f64)> = None;
        for c in coins.coins().iter().filter(|c| !c.collected) {
            let (dx, dy) = (c.pos[0] - x, c.pos[1] - y);
            let d2 = dx * dx + dy * dy;
            if d2 <= vis2 && nearest.is_none_or(|n| d2 < n.2) {
                nearest = Some((dx, dy, d2));
            }
        }
        let desired = match nearest {
            Some((dx, dy, _)) => dy.atan2(dx).to_degrees(),
            None => {
                if t >= next_wander {
                    wander = wrap_deg(wander + rng.random_range(-70.0..70.0));
                    next_wander = t + rng.random_range(2.0..5.0);
                }
                if x.abs() > h - 6.0 || y.abs() > h - 6.0 {
                    wander = (-y).atan2(-x).to_degrees() + rng.random_range(-40.0..40.0);
                }
                wander
            }
        };
        let err = wrap_deg(desired - heading);
        let max_turn = kin.turn_rate * dt;
        heading = wrap_deg(heading + err.clamp(-max_turn, max_turn));
        if err.abs() < 60.0 {
            let r = heading.to_radians();
            x = (x + kin.speed * dt * r.cos()).clamp(-h, h);
            y = (y + kin.speed * dt * r.sin()).clamp(-h, h);
        }
        for c in 0..coins.len() {
            let coin = &coins.coins()[c];
            if coin.collected {
                continue;
            }
            let (dx, dy) = (coin.pos[0] - x, coin.pos[1] - y);
            if dx * dx + dy * dy <= col2 {
                collected += coins.collect_index(c) as u32;
            }
        }
    }
    SimulatedSession {
        raw: RawTrajectory::new(samples).expect("simulated samples are valid"),
        collected,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stays_in_bounds_with_increasing_time() {
        let config = ArenaConfig::default();
        let kin = Kinematics {
            duration: 60.0,
            ..Kinematics::default()
        };
        let s = simulate_raw(&config, &kin, 1);
        assert_eq!(s.raw.len(), 3600);
        assert!(s.raw.check_bounds(&config).is_ok());
        assert!(s.raw.samples.windows(2).all(|w| w[1].t > w[0].t));
    }

    #[test]
    fn seeded() {
        let config = ArenaConfig::default();
        let kin = Kinematics {
            duration: 20.0,
            ..Kinematics::default()
        };
        assert_eq!(simulate_raw(&config, &kin, 4).raw, simulate_raw(&config, &kin, 4).raw);
    }
}
