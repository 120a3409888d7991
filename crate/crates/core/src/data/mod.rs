//! Demonstration pipeline: raw timestamped positions to state-action pairs.
//!
//! `parse_raw -> aggregate_grid -> infer_actions -> annotate_egocentric`.

mod expert;
mod synth;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use expert::{generate_demo, ScriptedExpert};
pub use synth::{simulate_raw, Kinematics, SimulatedSession};

use crate::env::{observe, quantize_direction, sample_coins, Action, ArenaConfig, Cell, Compass, State};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub x: f64,
    pub y: f64,
}

/// Positions sampled at strictly increasing times.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RawTrajectory {
    pub samples: Vec<Sample>,
}

impl RawTrajectory {
    /// Checks length, finiteness and time monotonicity.
    pub fn new(samples: Vec<Sample>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::Validation(format!(
                "trajectory needs at least 2 samples, got {}",
                samples.len()
            )));
        }
        for (i, s) in samples.iter().enumerate() {
            if !(s.t.is_finite() && s.x.is_finite() && s.y.is_finite()) {
                return Err(Error::Validation(format!("sample {i} is not finite")));
            }
        }
        if let Some(i) = samples.windows(2).position(|w| w[1].t <= w[0].t) {
            return Err(Error::Validation(format!(
                "time not strictly increasing at sample {} ({} -> {})",
                i + 1,
                samples[i].t,
                samples[i + 1].t
            )));
        }
        Ok(Self { samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn check_bounds(&self, config: &ArenaConfig) -> Result<()> {
        let h = config.half_extent as f64;
        match self.samples.iter().position(|s| s.x.abs() > h || s.y.abs() > h) {
            Some(i) => Err(Error::Validation(format!("sample {i} lies outside the arena"))),
            None => Ok(()),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        for s in &self.samples {
            w.serialize(s).expect("in-memory csv write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf8 csv")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        parse_raw(&text)
    }
}

/// Parse a `t,x,y` CSV document.
pub fn parse_raw(text: &str) -> Result<RawTrajectory> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| Error::Parse {
        line: 1,
        msg: e.to_string(),
    })?;
    if header.iter().collect::<Vec<_>>() != ["t", "x", "y"] {
        return Err(Error::Parse {
            line: 1,
            msg: format!("expected header `t,x,y`, got `{}`", header.iter().collect::<Vec<_>>().join(",")),
        });
    }
    let mut samples = Vec::new();
    for record in reader.deserialize::<Sample>() {
        let sample = record.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line()),
            msg: e.to_string(),
        })?;
        samples.push(sample);
    }
    RawTrajectory::new(samples)
}

/// Map samples to `(floor(x), floor(y))` and collapse consecutive repeats.
pub fn aggregate_grid(raw: &RawTrajectory, config: &ArenaConfig) -> Vec<Cell> {
    let h = config.half_extent;
    let mut cells: Vec<Cell> = Vec::new();
    for s in &raw.samples {
        let c = Cell::new(
            (s.x.floor() as i32).clamp(-h, h),
            (s.y.floor() as i32).clamp(-h, h),
        );
        if cells.last() != Some(&c) {
            cells.push(c);
        }
    }
    cells
}

/// Direction of each move between consecutive cells. Multi-cell jumps map to
/// a single quantized action.
pub fn infer_actions(cells: &[Cell]) -> Result<Vec<Action>> {
    if cells.len() < 2 {
        return Err(Error::Validation(format!(
            "need at least 2 cells to infer actions, got {}",
            cells.len()
        )));
    }
    cells
        .windows(2)
        .map(|w| quantize_direction((w[1].x - w[0].x) as f64, (w[1].y - w[0].y) as f64))
        .collect()
}

/// Provenance of a processed trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub source: String,
    pub coin_seed: u64,
    /// Coins collected while replaying the path against the coin field.
    pub coins_collected: u32,
}

/// State-action pairs of one demonstration.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcessedTrajectory {
    pub meta: TrajectoryMeta,
    pub pairs: Vec<(State, Action)>,
}

#[derive(Serialize, Deserialize)]
struct PairRecord {
    x: i32,
    y: i32,
    psi: String,
    chi: String,
    action: Compass,
}

#[derive(Serialize, Deserialize)]
struct ProcessedDoc {
    metadata: TrajectoryMeta,
    pairs: Vec<PairRecord>,
}

const SEE_COIN: &str = "see-coin";
const NO_COINS: &str = "no-coins";

impl ProcessedTrajectory {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Whether each state follows from the previous one by its recorded action
    /// (true for simulator episodes, not for human data with jumps).
    pub fn is_step_consistent(&self, config: &ArenaConfig) -> bool {
        self.pairs
            .windows(2)
            .all(|w| crate::env::move_cell(w[0].0.cell(), w[0].1, config) == w[1].0.cell())
    }

    /// Leading pairs only; metadata is kept.
    pub fn truncated(&self, n: usize) -> Self {
        Self {
            meta: self.meta.clone(),
            pairs: self.pairs[..n.min(self.pairs.len())].to_vec(),
        }
    }

    pub fn to_json(&self) -> String {
        let doc = ProcessedDoc {
            metadata: self.meta.clone(),
            pairs: self
                .pairs
                .iter()
                .map(|(s, a)| PairRecord {
                    x: s.x,
                    y: s.y,
                    psi: if s.sees_coin() { SEE_COIN } else { NO_COINS }.to_string(),
                    chi: s.sight.map_or(NO_COINS, Compass::name).to_string(),
                    action: *a,
                })
                .collect(),
        };
        serde_json::to_string(&doc).expect("trajectory serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ProcessedDoc = serde_json::from_str(text)?;
        let mut pairs = Vec::with_capacity(doc.pairs.len());
        for (i, r) in doc.pairs.into_iter().enumerate() {
            let sight = match (r.psi.as_str(), r.chi.as_str()) {
                (NO_COINS, NO_COINS) => None,
                (SEE_COIN, chi) => Some(
                    Compass::parse(chi)
                        .ok_or_else(|| Error::Validation(format!("pair {i}: unknown chi `{chi}`")))?,
                ),
                (psi, chi) => {
                    return Err(Error::Validation(format!("pair {i}: inconsistent psi `{psi}` / chi `{chi}`")))
                }
            };
            pairs.push((State { x: r.x, y: r.y, sight }, r.action));
        }
        Ok(Self {
            meta: doc.metadata,
            pairs,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}

/// Replay the path against the coin field drawn from `coin_seed` and attach
/// psi/chi to every visited cell but the last.
///
/// Arrival at each cell after the first collects the coins in range before
/// observing, mirroring `env::step`; the start cell collects nothing, as after
/// `env::reset`.
pub fn annotate_egocentric(
    cells: &[Cell],
    actions: &[Action],
    config: &ArenaConfig,
    coin_seed: u64,
    source: impl Into<String>,
) -> Result<ProcessedTrajectory> {
    if actions.len() + 1 != cells.len() {
        return Err(Error::Validation(format!(
            "{} actions for {} cells",
            actions.len(),
            cells.len()
        )));
    }
    let mut coins = sample_coins(config, coin_seed);
    let mut collected = 0u32;
    let mut pairs = Vec::with_capacity(actions.len());
    for (i, &cell) in cells.iter().enumerate() {
        if i > 0 {
            collected += coins.collect_within(cell, config.collection_radius).len() as u32;
        }
        if let Some(&a) = actions.get(i) {
            pairs.push((observe(cell, &coins, config), a));
        }
    }
    Ok(ProcessedTrajectory {
        meta: TrajectoryMeta {
            source: source.into(),
            coin_seed,
            coins_collected: collected,
        },
        pairs,
    })
}

/// The whole pipeline for one raw trajectory.
pub fn process_raw(
    raw: &RawTrajectory,
    config: &ArenaConfig,
    coin_seed: u64,
    source: impl Into<String>,
) -> Result<ProcessedTrajectory> {
    let cells = aggregate_grid(raw, config);
    let actions = infer_actions(&cells)?;
    annotate_egocentric(&cells, &actions, config, coin_seed, source)
}
