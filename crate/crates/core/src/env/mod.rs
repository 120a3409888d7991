//! Deterministic discrete-time coin-foraging grid world.
//!
//! The agent occupies integer cells of a square arena and moves one cell per
//! step in one of eight compass directions. Coins keep real-valued positions;
//! every uncollected coin within the collection radius of the agent's cell is
//! collected on arrival, and coins within the visibility radius drive the
//! egocentric part of the state.

mod config;

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub use config::{ArenaConfig, Cluster, DEFAULT_CONFIG_JSON, SHIFT_CONFIG_JSON};

use crate::error::{Error, Result};

/// Eight-way compass heading, indexed counterclockwise from east.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Compass {
    E,
    NE,
    N,
    NW,
    W,
    SW,
    S,
    SE,
}

/// Agent actions are compass moves.
pub type Action = Compass;

impl Compass {
    pub const ALL: [Compass; 8] = [
        Compass::E,
        Compass::NE,
        Compass::N,
        Compass::NW,
        Compass::W,
        Compass::SW,
        Compass::S,
        Compass::SE,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Compass> {
        Self::ALL.get(i).copied()
    }

    /// Grid displacement of one move; diagonals change both axes.
    pub fn delta(self) -> (i32, i32) {
        match self {
            Compass::E => (1, 0),
            Compass::NE => (1, 1),
            Compass::N => (0, 1),
            Compass::NW => (-1, 1),
            Compass::W => (-1, 0),
            Compass::SW => (-1, -1),
            Compass::S => (0, -1),
            Compass::SE => (1, -1),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Compass::E => "E",
            Compass::NE => "NE",
            Compass::N => "N",
            Compass::NW => "NW",
            Compass::W => "W",
            Compass::SW => "SW",
            Compass::S => "S",
            Compass::SE => "SE",
        }
    }

    pub fn parse(s: &str) -> Option<Compass> {
        Self::ALL.into_iter().find(|c| c.name() == s)
    }
}

impl fmt::Display for Compass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

// Sector membership is decided in units of 45 degrees; a displacement whose
// angle lies within this many sector-widths below a boundary is treated as on
// the boundary so that exact +22.5 degree inputs survive float rounding.
const BOUNDARY_SLACK: f64 = 1e-9;

/// Quantize a displacement into the compass sector whose center lies within
/// 22.5 degrees of its angle. Sectors are half-open, `[c - 22.5, c + 22.5)`.
pub fn quantize_direction(dx: f64, dy: f64) -> Result<Compass> {
    if dx == 0.0 && dy == 0.0 {
        return Err(Error::ZeroDisplacement);
    }
    let mut deg = dy.atan2(dx).to_degrees();
    if deg < 0.0 {
        deg += 360.0;
    }
    let sector = ((deg + 22.5) / 45.0 + BOUNDARY_SLACK).floor() as usize % 8;
    Ok(Compass::ALL[sector])
}

/// Which state fields a learner sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StateMode {
    #[serde(rename = "full")]
    Full,
    #[serde(rename = "allocentric-only")]
    Allocentric,
    #[serde(rename = "egocentric-only")]
    Egocentric,
}

impl StateMode {
    pub const ALL: [StateMode; 3] = [StateMode::Full, StateMode::Allocentric, StateMode::Egocentric];

    pub fn input_dim(self) -> usize {
        match self {
            StateMode::Full => 13,
            StateMode::Allocentric => 2,
            StateMode::Egocentric => 11,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            StateMode::Full => "full",
            StateMode::Allocentric => "allocentric-only",
            StateMode::Egocentric => "egocentric-only",
        }
    }

    pub fn parse(s: &str) -> Option<StateMode> {
        Self::ALL.into_iter().find(|m| m.name() == s)
    }
}

impl fmt::Display for StateMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Integer grid position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub x: i32,
    pub y: i32,
}

impl Cell {
    pub fn new(x: i32, y: i32) -> Self {
        Self { x, y }
    }
}

/// Observation `{x, y, psi, chi}`.
///
/// `sight` is `None` when no coin is visible (psi = no-coins, chi = no-coins)
/// and otherwise holds the direction to the closest visible coin, so the
/// psi/chi equivalence holds by construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct State {
    pub x: i32,
    pub y: i32,
    pub sight: Option<Compass>,
}

impl State {
    pub fn cell(&self) -> Cell {
        Cell::new(self.x, self.y)
    }

    pub fn sees_coin(&self) -> bool {
        self.sight.is_some()
    }

    /// One-hot index of chi: 0..8 compass, 8 = no-coins.
    pub fn chi_index(&self) -> usize {
        self.sight.map_or(8, Compass::index)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CoinSource {
    Uniform,
    Cluster(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Coin {
    pub pos: [f64; 2],
    pub collected: bool,
    pub source: CoinSource,
}

/// Coins of one episode. Collection is one-way.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CoinField {
    coins: Vec<Coin>,
    remaining: usize,
}

impl CoinField {
    pub fn new(coins: Vec<Coin>) -> Self {
        let remaining = coins.iter().filter(|c| !c.collected).count();
        Self { coins, remaining }
    }

    pub fn from_positions(positions: impl IntoIterator<Item = [f64; 2]>) -> Self {
        Self::new(
            positions
                .into_iter()
                .map(|pos| Coin {
                    pos,
                    collected: false,
                    source: CoinSource::Uniform,
                })
                .collect(),
        )
    }

    pub fn coins(&self) -> &[Coin] {
        &self.coins
    }

    pub fn len(&self) -> usize {
        self.coins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coins.is_empty()
    }

    pub fn remaining(&self) -> usize {
        self.remaining
    }

    pub fn positions(&self) -> Vec<[f64; 2]> {
        self.coins.iter().map(|c| c.pos).collect()
    }

    /// Index of the closest uncollected coin within `radius`; ties go to the lowest index.
    pub fn nearest_within(&self, cell: Cell, radius: f64) -> Option<(usize, f64, f64)> {
        let r2 = radius * radius;
        let (px, py) = (cell.x as f64, cell.y as f64);
        let mut best: Option<(usize, f64, f64, f64)> = None;
        for (i, c) in self.coins.iter().enumerate() {
            if c.collected {
                continue;
            }
            let dx = c.pos[0] - px;
            let dy = c.pos[1] - py;
            let d2 = dx * dx + dy * dy;
            if d2 <= r2 && best.is_none_or(|b| d2 < b.3) {
                best = Some((i, dx, dy, d2));
            }
        }
        best.map(|(i, dx, dy, _)| (i, dx, dy))
    }

    /// Marks coin `i` collected; false if it already was.
    pub fn collect_index(&mut self, i: usize) -> bool {
        let coin = &mut self.coins[i];
        if coin.collected {
            return false;
        }
        coin.collected = true;
        self.remaining -= 1;
        true
    }

    /// Marks every uncollected coin within `radius` of `cell`; returns their indices.
    pub fn collect_within(&mut self, cell: Cell, radius: f64) -> Vec<usize> {
        let r2 = radius * radius;
        let (px, py) = (cell.x as f64, cell.y as f64);
        let mut taken = Vec::new();
        for (i, c) in self.coins.iter_mut().enumerate() {
            if c.collected {
                continue;
            }
            let dx = c.pos[0] - px;
            let dy = c.pos[1] - py;
            if dx * dx + dy * dy <= r2 {
                c.collected = true;
                taken.push(i);
            }
        }
        self.remaining -= taken.len();
        taken
    }
}

/// Draw the coin layout. Uniform coins come first, then each cluster in order;
/// cluster draws are clamped into the arena.
pub fn sample_coins(config: &ArenaConfig, seed: u64) -> CoinField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = config.half_extent as f64;
    let mut coins = Vec::with_capacity(config.total_coins());
    for _ in 0..config.uniform_coin_count {
        let pos = [rng.random_range(-h..=h), rng.random_range(-h..=h)];
        coins.push(Coin {
            pos,
            collected: false,
            source: CoinSource::Uniform,
        });
    }
    for (k, cluster) in config.clusters.iter().enumerate() {
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        for _ in 0..cluster.count {
            let zx: f64 = normal.sample(&mut rng);
            let zy: f64 = normal.sample(&mut rng);
            let pos = [
                (cluster.mean[0] + cluster.sigma * zx).clamp(-h, h),
                (cluster.mean[1] + cluster.sigma * zy).clamp(-h, h),
            ];
            coins.push(Coin {
                pos,
                collected: false,
                source: CoinSource::Cluster(k),
            });
        }
    }
    CoinField::new(coins)
}

pub fn observe(cell: Cell, coins: &CoinField, config: &ArenaConfig) -> State {
    let sight = coins
        .nearest_within(cell, config.visibility_radius)
        .map(|(_, dx, dy)| quantize_direction(dx, dy).unwrap_or(Compass::E));
    State {
        x: cell.x,
        y: cell.y,
        sight,
    }
}

/// Uniform start cell drawn from `episode_seed`, with a fresh coin field from
/// the config's coin seed.
pub fn reset(config: &ArenaConfig, episode_seed: u64) -> (State, CoinField) {
    let coins = sample_coins(config, config.coin_seed);
    let mut rng = ChaCha8Rng::seed_from_u64(episode_seed);
    let start = random_cell(config, &mut rng);
    (observe(start, &coins, config), coins)
}

pub fn random_cell<R: Rng + ?Sized>(config: &ArenaConfig, rng: &mut R) -> Cell {
    let h = config.half_extent;
    Cell::new(rng.random_range(-h..=h), rng.random_range(-h..=h))
}

/// Cell reached by one move, clamped per axis to the walls.
pub fn move_cell(cell: Cell, action: Action, config: &ArenaConfig) -> Cell {
    let (dx, dy) = action.delta();
    let h = config.half_extent;
    Cell::new((cell.x + dx).clamp(-h, h), (cell.y + dy).clamp(-h, h))
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub state: State,
    pub reward: u32,
    pub collected: Vec<usize>,
}

/// Move, collect everything within the collection radius, then observe.
pub fn step(cell: Cell, coins: &mut CoinField, action: Action, config: &ArenaConfig) -> StepOutcome {
    let next = move_cell(cell, action, config);
    let collected = coins.collect_within(next, config.collection_radius);
    StepOutcome {
        state: observe(next, coins, config),
        reward: collected.len() as u32,
        collected,
    }
}

/// Write the learner-facing features of `state` into `out`.
///
/// Full layout: `[x/h, y/h, onehot(psi; see, none), onehot(chi; E..SE, none)]`.
pub fn encode_state_into(state: &State, mode: StateMode, config: &ArenaConfig, out: &mut [f64]) {
    debug_assert_eq!(out.len(), mode.input_dim());
    out.fill(0.0);
    let h = config.half_extent as f64;
    let ego = match mode {
        StateMode::Full | StateMode::Allocentric => {
            out[0] = state.x as f64 / h;
            out[1] = state.y as f64 / h;
            if mode == StateMode::Allocentric {
                return;
            }
            &mut out[2..]
        }
        StateMode::Egocentric => out,
    };
    ego[if state.sees_coin() { 0 } else { 1 }] = 1.0;
    ego[2 + state.chi_index()] = 1.0;
}

pub fn encode_state(state: &State, mode: StateMode, config: &ArenaConfig) -> Vec<f64> {
    let mut out = vec![0.0; mode.input_dim()];
    encode_state_into(state, mode, config, &mut out);
    out
}

/// A single running episode.
#[derive(Debug, Clone)]
pub struct Env {
    config: ArenaConfig,
    pristine: CoinField,
    coins: CoinField,
    state: State,
    t: usize,
}

impl Env {
    /// Samples the coin layout once; later resets reuse it.
    pub fn new(config: ArenaConfig) -> Self {
        let pristine = sample_coins(&config, config.coin_seed);
        let state = observe(Cell::new(0, 0), &pristine, &config);
        Self {
            coins: pristine.clone(),
            pristine,
            config,
            state,
            t: 0,
        }
    }

    pub fn config(&self) -> &ArenaConfig {
        &self.config
    }

    pub fn reset<R: Rng + ?Sized>(&mut self, rng: &mut R) -> State {
        let start = random_cell(&self.config, rng);
        self.reset_at(start)
    }

    pub fn reset_at(&mut self, start: Cell) -> State {
        self.coins.clone_from(&self.pristine);
        self.t = 0;
        self.state = observe(start, &self.coins, &self.config);
        self.state
    }

    pub fn step(&mut self, action: Action) -> StepOutcome {
        let out = step(self.state.cell(), &mut self.coins, action, &self.config);
        self.state = out.state;
        self.t += 1;
        out
    }

    pub fn state(&self) -> State {
        self.state
    }

    pub fn coins(&self) -> &CoinField {
        &self.coins
    }

    pub fn elapsed(&self) -> usize {
        self.t
    }

    pub fn done(&self) -> bool {
        self.t >= self.config.episode_len
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cluster_only(mean: [f64; 2], sigma: f64, count: usize) -> ArenaConfig {
        ArenaConfig {
            uniform_coin_count: 0,
            clusters: vec![Cluster { mean, sigma, count }],
            ..ArenaConfig::default()
        }
    }

    fn coins_at(positions: &[[f64; 2]]) -> CoinField {
        CoinField::from_positions(positions.iter().copied())
    }

    #[test]
    fn default_layout_counts() {
        let field = sample_coins(&ArenaConfig::default(), 3);
        assert_eq!(field.len(), 325);
        let count = |s| field.coins().iter().filter(|c| c.source == s).count();
        assert_eq!(count(CoinSource::Uniform), 100);
        for (k, n) in [75, 40, 60, 50].into_iter().enumerate() {
            assert_eq!(count(CoinSource::Cluster(k)), n);
        }
        assert!(field.coins().iter().all(|c| c.pos.iter().all(|v| v.abs() <= 80.0)));
    }

    #[test]
    fn zero_variance_cluster_is_a_point() {
        let field = sample_coins(&cluster_only([0.0, 0.0], 0.0, 10), 1);
        assert_eq!(field.len(), 10);
        assert!(field.coins().iter().all(|c| c.pos == [0.0, 0.0]));
    }

    #[test]
    fn sampling_is_seeded() {
        let c = ArenaConfig::default();
        assert_eq!(sample_coins(&c, 11), sample_coins(&c, 11));
        assert_ne!(sample_coins(&c, 11), sample_coins(&c, 12));
    }

    #[test]
    fn clusters_clamped_into_arena() {
        let field = sample_coins(&cluster_only([79.0, -79.0], 20.0, 500), 5);
        assert!(field.coins().iter().all(|c| c.pos[0] <= 80.0 && c.pos[1] >= -80.0));
        assert!(field.coins().iter().any(|c| c.pos[0] == 80.0));
    }

    #[test]
    fn quantize_examples() {
        assert_eq!(quantize_direction(1.0, 0.0).unwrap(), Compass::E);
        assert_eq!(quantize_direction(1.0, 1.0).unwrap(), Compass::NE);
        let a = 22.5_f64.to_radians();
        assert_eq!(quantize_direction(a.cos(), a.sin()).unwrap(), Compass::NE);
        assert_eq!(quantize_direction(-1.0, -1e-12).unwrap(), Compass::W);
        assert_eq!(quantize_direction(0.0, -2.0).unwrap(), Compass::S);
        assert!(matches!(quantize_direction(0.0, 0.0), Err(Error::ZeroDisplacement)));
    }

    #[test]
    fn quantize_scale_invariant() {
        for &(dx, dy) in &[(3.0, 0.0), (2.0, 5.0), (-7.0, 1.0), (0.5, -0.5)] {
            assert_eq!(
                quantize_direction(dx, dy).unwrap(),
                quantize_direction(10.0 * dx, 10.0 * dy).unwrap()
            );
        }
    }

    #[test]
    fn observe_out_of_sight() {
        let c = ArenaConfig::default();
        let s = observe(Cell::new(0, 0), &coins_at(&[[10.0, 0.0]]), &c);
        assert_eq!(s.sight, None);
        assert_eq!(s.chi_index(), 8);
    }

    #[test]
    fn observe_points_at_nearest() {
        let c = ArenaConfig::default();
        let s = observe(Cell::new(2, 3), &coins_at(&[[7.0, 3.0]]), &c);
        assert_eq!(s.sight, Some(Compass::E));
        let s = observe(Cell::new(0, 0), &coins_at(&[[0.0, 6.0], [4.0, 0.0]]), &c);
        assert_eq!(s.sight, Some(Compass::E));
    }

    #[test]
    fn observe_tie_and_zero_offset() {
        let c = ArenaConfig::default();
        let s = observe(Cell::new(0, 0), &coins_at(&[[0.0, 5.0], [5.0, 0.0]]), &c);
        assert_eq!(s.sight, Some(Compass::N));
        let s = observe(Cell::new(1, 1), &coins_at(&[[1.0, 1.0]]), &c);
        assert_eq!(s.sight, Some(Compass::E));
        // exactly at the radius still counts
        let s = observe(Cell::new(0, 0), &coins_at(&[[0.0, -8.0]]), &c);
        assert_eq!(s.sight, Some(Compass::S));
    }

    #[test]
    fn step_moves_one_cell() {
        let c = ArenaConfig::default();
        let mut coins = coins_at(&[[30.0, 30.0]]);
        let out = step(Cell::new(0, 0), &mut coins, Compass::E, &c);
        assert_eq!(out.state.cell(), Cell::new(1, 0));
        assert_eq!(out.reward, 0);
        let out = step(Cell::new(0, 0), &mut coins, Compass::SW, &c);
        assert_eq!(out.state.cell(), Cell::new(-1, -1));
    }

    #[test]
    fn step_clamps_at_walls() {
        let c = ArenaConfig::default();
        let mut coins = CoinField::default();
        let out = step(Cell::new(80, 0), &mut coins, Compass::E, &c);
        assert_eq!(out.state.cell(), Cell::new(80, 0));
        let out = step(Cell::new(80, 80), &mut coins, Compass::NE, &c);
        assert_eq!(out.state.cell(), Cell::new(80, 80));
        let out = step(Cell::new(-80, 5), &mut coins, Compass::SW, &c);
        assert_eq!(out.state.cell(), Cell::new(-80, 4));
    }

    #[test]
    fn step_collects_within_radius() {
        let c = ArenaConfig::default();
        let mut coins = coins_at(&[[2.5, 0.0]]);
        let out = step(Cell::new(0, 0), &mut coins, Compass::E, &c);
        assert_eq!(out.state.cell(), Cell::new(1, 0));
        assert_eq!(out.reward, 1);
        assert_eq!(out.collected, vec![0]);
        assert_eq!(coins.remaining(), 0);
        assert_eq!(out.state.sight, None);
    }

    #[test]
    fn step_collects_several_at_once() {
        let c = cluster_only([5.0, 0.0], 0.0, 10);
        let (_, mut coins) = reset(&c, 0);
        let out = step(Cell::new(1, 0), &mut coins, Compass::E, &c);
        assert_eq!(out.reward, 10);
    }

    #[test]
    fn reset_is_seeded() {
        let c = ArenaConfig::default();
        assert_eq!(reset(&c, 9), reset(&c, 9));
        let (s, coins) = reset(&ArenaConfig::empty(), 4);
        assert_eq!(s.sight, None);
        assert!(coins.is_empty());
    }

    #[test]
    fn encode_examples() {
        let c = ArenaConfig::default();
        let s = State { x: 0, y: 0, sight: None };
        assert_eq!(
            encode_state(&s, StateMode::Full, &c),
            [0., 0., 0., 1., 0., 0., 0., 0., 0., 0., 0., 0., 1.]
        );
        let s = State { x: 80, y: -80, sight: Some(Compass::NW) };
        assert_eq!(encode_state(&s, StateMode::Allocentric, &c), [1.0, -1.0]);
        let ego = encode_state(&s, StateMode::Egocentric, &c);
        assert_eq!(ego, [1., 0., 0., 0., 0., 1., 0., 0., 0., 0., 0.]);
        for m in StateMode::ALL {
            assert_eq!(encode_state(&s, m, &c).len(), m.input_dim());
        }
    }

    #[test]
    fn env_wrapper_restores_coins_on_reset() {
        let c = cluster_only([3.0, 0.0], 0.0, 4);
        let mut env = Env::new(c);
        env.reset_at(Cell::new(-1, 0));
        assert_eq!(env.step(Compass::E).reward, 4);
        assert_eq!(env.coins().remaining(), 0);
        env.reset_at(Cell::new(-1, 0));
        assert_eq!(env.coins().remaining(), 4);
        assert_eq!(env.elapsed(), 0);
    }

    #[test]
    fn names_round_trip() {
        for c in Compass::ALL {
            assert_eq!(Compass::parse(c.name()), Some(c));
            assert_eq!(Compass::from_index(c.index()), Some(c));
        }
        for m in StateMode::ALL {
            assert_eq!(StateMode::parse(m.name()), Some(m));
        }
    }
}
