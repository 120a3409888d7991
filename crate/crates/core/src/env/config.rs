use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bundled arena layout used for all original-task experiments.
pub const DEFAULT_CONFIG_JSON: &str = include_str!("../../configs/default.json");
/// Bundled shifted coin layout for the robustness experiment.
pub const SHIFT_CONFIG_JSON: &str = include_str!("../../configs/shift.json");

/// One isotropic Gaussian coin cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub mean: [f64; 2],
    pub sigma: f64,
    pub count: usize,
}

/// Arena geometry, coin layout and episode length.
///
/// The arena spans `[-half_extent, half_extent]` on both axes with one grid
/// cell per meter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArenaConfig {
    pub half_extent: i32,
    pub grid_step: f64,
    pub uniform_coin_count: usize,
    pub clusters: Vec<Cluster>,
    pub visibility_radius: f64,
    pub collection_radius: f64,
    pub episode_len: usize,
    pub coin_seed: u64,
}

impl Default for ArenaConfig {
    fn default() -> Self {
        Self::from_json(DEFAULT_CONFIG_JSON).expect("bundled default config is valid")
    }
}

impl ArenaConfig {
    /// The shifted-reward layout: same arena, different clusters, no uniform coins.
    pub fn shifted() -> Self {
        Self::from_json(SHIFT_CONFIG_JSON).expect("bundled shift config is valid")
    }

    /// Same arena and learner settings, no coins at all.
    pub fn empty() -> Self {
        Self {
            uniform_coin_count: 0,
            clusters: Vec::new(),
            ..Self::default()
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if self.half_extent <= 0 {
            return bad("half_extent must be positive");
        }
        if self.grid_step != 1.0 {
            return bad("only a 1m grid is supported");
        }
        if self.clusters.iter().any(|c| c.sigma.is_nan() || c.sigma < 0.0 || !c.mean.iter().all(|m| m.is_finite())) {
            return bad("cluster sigma must be >= 0 and means finite");
        }
        // written so that NaN radii are rejected too
        let ordered = self.collection_radius > 0.0 && self.visibility_radius > self.collection_radius;
        if !ordered {
            return bad("need visibility_radius > collection_radius > 0");
        }
        if self.episode_len == 0 {
            return bad("episode_len must be positive");
        }
        Ok(())
    }

    pub fn total_coins(&self) -> usize {
        self.uniform_coin_count + self.clusters.iter().map(|c| c.count).sum::<usize>()
    }

    /// Cells per axis (161 for the default arena).
    pub fn side(&self) -> usize {
        (2 * self.half_extent + 1) as usize
    }

    pub fn cell_count(&self) -> usize {
        self.side() * self.side()
    }

    pub fn contains(&self, x: i32, y: i32) -> bool {
        x.abs() <= self.half_extent && y.abs() <= self.half_extent
    }

    /// Whether two configs differ only in where coins are placed.
    pub fn same_arena_as(&self, other: &Self) -> bool {
        self.half_extent == other.half_extent
            && self.grid_step == other.grid_step
            && self.visibility_radius == other.visibility_radius
            && self.collection_radius == other.collection_radius
            && self.episode_len == other.episode_len
    }
}
