use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ProcessedTrajectory, TrajectoryMeta};
use crate::env::{Action, ArenaConfig, Cell, Compass, Env, State};
use crate::error::{Error, Result};

/// Synthetic demonstrator: walk toward the closest visible coin, otherwise
/// follow a fixed lawnmower sweep.
///
/// The sweep is a memoryless vector field over the grid. The arena is cut
/// into horizontal stripes `lane_spacing` high; the agent crosses even
/// stripes eastward and odd stripes westward, climbing to the next stripe's
/// centre row inside `turn_width`-wide columns at either end. A
/// `return_width`-wide strip along the west wall carries it from the top
/// stripe back to the bottom one, so every start cell feeds into one closed
/// circuit.
#[derive(Debug, Clone, PartialEq)]
pub struct ScriptedExpert {
    /// Probability of replacing the chosen action with a uniform random one.
    pub noise: f64,
    pub lane_spacing: i32,
    pub turn_width: i32,
    pub return_width: i32,
}

impl Default for ScriptedExpert {
    fn default() -> Self {
        Self {
            noise: 0.0,
            lane_spacing: 40,
            turn_width: 4,
            return_width: 4,
        }
    }
}

impl ScriptedExpert {
    pub fn with_noise(noise: f64) -> Self {
        Self {
            noise,
            ..Self::default()
        }
    }

    fn lane_count(&self, config: &ArenaConfig) -> i32 {
        let n = (2 * config.half_extent + 1) / self.lane_spacing;
        // an even count ends the sweep on the west side, next to the return strip
        (n - n % 2).max(2)
    }

    /// Centre row of stripe `lane`.
    fn lane_row(&self, config: &ArenaConfig, lane: i32) -> i32 {
        let span = self.lane_count(config) * self.lane_spacing;
        -span / 2 + self.lane_spacing / 2 + lane * self.lane_spacing
    }

    fn lane_of(&self, config: &ArenaConfig, y: i32) -> i32 {
        let bottom = self.lane_row(config, 0) - self.lane_spacing / 2;
        (y - bottom).div_euclid(self.lane_spacing).clamp(0, self.lane_count(config) - 1)
    }

    /// Sweep action at `cell`, ignoring coins.
    pub fn sweep(&self, cell: Cell, config: &ArenaConfig) -> Action {
        let h = config.half_extent;
        let lanes = self.lane_count(config);
        let lane = self.lane_of(config, cell.y);
        let row = self.lane_row(config, lane);
        let return_edge = -h + self.return_width;
        let west_turn = return_edge + self.turn_width;
        let east_turn = h - self.turn_width;
        let eastward = lane % 2 == 0;

        if cell.x < return_edge {
            return if lane == 0 && cell.y <= row { Compass::E } else { Compass::S };
        }
        if lane == lanes - 1 && cell.x < west_turn {
            return Compass::W;
        }
        if eastward {
            if cell.x >= east_turn {
                return Compass::N;
            }
            if cell.x < west_turn && cell.y < row {
                return Compass::N;
            }
            Compass::E
        } else {
            if cell.x < west_turn {
                return Compass::N;
            }
            if cell.x >= east_turn && cell.y < row {
                return Compass::N;
            }
            Compass::W
        }
    }

    /// Noise-free decision for an observed state.
    pub fn decide(&self, state: &State, config: &ArenaConfig) -> Action {
        state.sight.unwrap_or_else(|| self.sweep(state.cell(), config))
    }

    pub fn act<R: Rng + ?Sized>(&self, state: &State, config: &ArenaConfig, rng: &mut R) -> Action {
        if self.noise > 0.0 && rng.random::<f64>() < self.noise {
            return Compass::ALL[rng.random_range(0..8)];
        }
        self.decide(state, config)
    }
}

/// Run the expert for `episodes` full episodes from uniform start cells.
pub fn generate_demo(
    expert: &ScriptedExpert,
    config: &ArenaConfig,
    seed: u64,
    episodes: usize,
) -> Result<Vec<ProcessedTrajectory>> {
    if episodes == 0 {
        return Err(Error::Validation("need at least one episode".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut env = Env::new(config.clone());
    let mut out = Vec::with_capacity(episodes);
    for ep in 0..episodes {
        let mut state = env.reset(&mut rng);
        let mut pairs = Vec::with_capacity(config.episode_len);
        let mut total = 0u32;
        while !env.done() {
            let a = expert.act(&state, config, &mut rng);
            pairs.push((state, a));
            let step = env.step(a);
            total += step.reward;
            state = step.state;
        }
        out.push(ProcessedTrajectory {
            meta: TrajectoryMeta {
                source: format!("expert-noise{}-seed{seed}-ep{ep}", expert.noise),
                coin_seed: config.coin_seed,
                coins_collected: total,
            },
            pairs,
        });
    }
    Ok(out)
}
