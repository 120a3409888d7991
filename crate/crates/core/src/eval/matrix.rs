use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::summary::write_curve;
use crate::data::ProcessedTrajectory;
use crate::env::{ArenaConfig, StateMode};
use crate::error::{Error, Result};
use crate::il::{train_bc_with, IlHyperparams};
use crate::nn::Checkpoint;
use crate::rl::{train_rl_with, Algo, CurvePoint, RlConfig, Warm, DEFAULT_BUDGET};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Learner {
    Bc,
    Ppo,
    Trpo,
}

impl Learner {
    pub fn name(self) -> &'static str {
        match self {
            Learner::Bc => "bc",
            Learner::Ppo => "ppo",
            Learner::Trpo => "trpo",
        }
    }

    pub fn parse(s: &str) -> Option<Learner> {
        [Learner::Bc, Learner::Ppo, Learner::Trpo].into_iter().find(|l| l.name() == s)
    }

    pub fn rl_algo(self) -> Option<Algo> {
        match self {
            Learner::Bc => None,
            Learner::Ppo => Some(Algo::Ppo),
            Learner::Trpo => Some(Algo::Trpo),
        }
    }
}

fn default_budget() -> u64 {
    DEFAULT_BUDGET
}

fn default_eval_every() -> u64 {
    30_000
}

fn one() -> usize {
    1
}

/// Step counts written either as integers or in exponent form (`1e6`).
fn whole_steps<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<u64, D::Error> {
    let x = serde_json::Number::deserialize(d)?;
    if let Some(n) = x.as_u64() {
        return Ok(n);
    }
    match x.as_f64() {
        Some(f) if f >= 0.0 && f.fract() == 0.0 && f < u64::MAX as f64 => Ok(f as u64),
        _ => Err(serde::de::Error::custom(format!("`{x}` is not a whole number of steps"))),
    }
}

/// One experiment: every init file crossed with every seed.
///
/// For `bc` the inits are processed trajectories and `budget`/`eval_every`
/// are unused (the imitation schedule fixes the number of updates). For RL
/// the inits are checkpoints; without `init_glob` each seed trains from a
/// fresh initialization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub algo: Learner,
    pub mode: StateMode,
    /// Default arena when absent.
    #[serde(default)]
    pub env_config_path: Option<PathBuf>,
    #[serde(default)]
    pub init_glob: Option<String>,
    pub seeds: Vec<u64>,
    #[serde(default = "default_budget", deserialize_with = "whole_steps")]
    pub budget: u64,
    #[serde(default = "default_eval_every", deserialize_with = "whole_steps")]
    pub eval_every: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval_episodes: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval_steps: Option<usize>,
    /// Cells run concurrently, each one sequential inside.
    #[serde(default = "one")]
    pub parallelism: usize,
}

impl ExperimentSpec {
    pub fn new(algo: Learner, mode: StateMode, seeds: Vec<u64>) -> Self {
        Self {
            algo,
            mode,
            env_config_path: None,
            init_glob: None,
            seeds,
            budget: DEFAULT_BUDGET,
            eval_every: default_eval_every(),
            batch_size: None,
            eval_episodes: None,
            eval_steps: None,
            parallelism: 1,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.seeds.is_empty() {
            return bad("experiment needs at least one seed");
        }
        if self.budget == 0 || self.eval_every == 0 || self.parallelism == 0 {
            return bad("budget, eval_every and parallelism must be positive");
        }
        if self.algo == Learner::Bc && self.init_glob.is_none() {
            return bad("bc experiments need init_glob pointing at processed trajectories");
        }
        Ok(())
    }

    pub fn env_config(&self) -> Result<ArenaConfig> {
        match &self.env_config_path {
            Some(p) => ArenaConfig::load(p),
            None => Ok(ArenaConfig::default()),
        }
    }

    /// Init files in sorted order. A literal path that does not exist still
    /// yields one init, so that its cells fail individually; a wildcard
    /// pattern matching nothing is an error.
    pub fn inits(&self) -> Result<Vec<Option<PathBuf>>> {
        let Some(pattern) = &self.init_glob else {
            return Ok(vec![None]);
        };
        let mut found = Vec::new();
        for entry in glob::glob(pattern)? {
            found.push(entry.map_err(|e| Error::io(e.path().to_path_buf(), e.into()))?);
        }
        found.sort();
        if found.is_empty() {
            if pattern.contains(['*', '?', '[']) {
                return Err(Error::Validation(format!("init_glob `{pattern}` matches no files")));
            }
            found.push(PathBuf::from(pattern));
        }
        Ok(found.into_iter().map(Some).collect())
    }

    fn rl_config(&self, algo: Algo) -> RlConfig {
        let mut c = RlConfig::new(algo).with_budget(self.budget);
        c.eval_every = self.eval_every;
        if let Some(b) = self.batch_size {
            c.batch_size = b;
        }
        if let Some(e) = self.eval_episodes {
            c.eval_episodes = e;
        }
        if let Some(s) = self.eval_steps {
            c.eval_steps = s;
        }
        c
    }

    fn il_hyper(&self) -> IlHyperparams {
        let d = IlHyperparams::default();
        IlHyperparams {
            eval_episodes: self.eval_episodes.unwrap_or(d.eval_episodes).max(1),
            eval_steps: self.eval_steps.unwrap_or(d.eval_steps),
            ..d
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellStatus {
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellOutcome {
    pub key: String,
    pub init: String,
    pub seed: u64,
    pub status: CellStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Evaluation of the starting policy (zero-shot score for warm starts).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_eval: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_eval: Option<f64>,
    pub evals: usize,
    /// Curve file relative to the output directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub curve: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Manifest {
    spec: ExperimentSpec,
    cells: BTreeMap<String, CellOutcome>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixReport {
    pub out_dir: PathBuf,
    /// In (init, seed) order.
    pub cells: Vec<CellOutcome>,
    /// Cells taken from an earlier run's manifest.
    pub resumed: usize,
}

impl MatrixReport {
    pub fn all_done(&self) -> bool {
        self.cells.iter().all(|c| c.status == CellStatus::Done)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CellOutcome> {
        self.cells.iter().filter(|c| c.status == CellStatus::Failed)
    }

    pub fn curve_paths(&self) -> Vec<PathBuf> {
        self.cells
            .iter()
            .filter_map(|c| c.curve.as_ref().map(|p| self.out_dir.join(p)))
            .collect()
    }
}

struct Cell {
    key: String,
    label: String,
    init: Option<PathBuf>,
    seed: u64,
}

fn stem(path: &Path) -> String {
    let name = path.file_name().map_or_else(|| path.to_string_lossy(), |n| n.to_string_lossy());
    let name = name.strip_suffix(".json").unwrap_or(&name);
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' { c } else { '_' })
        .collect()
}

fn plan(spec: &ExperimentSpec) -> Result<Vec<Cell>> {
    let mut cells = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for init in spec.inits()? {
        let label = init.as_deref().map_or_else(|| "fresh".to_string(), stem);
        for &seed in &spec.seeds {
            let key = format!("{label}__seed{seed}");
            if !seen.insert(key.clone()) {
                return Err(Error::Validation(format!("duplicate cell `{key}`: init names must be unique")));
            }
            cells.push(Cell {
                key,
                label: label.clone(),
                init: init.clone(),
                seed,
            });
        }
    }
    Ok(cells)
}

fn write_if_changed(path: &Path, bytes: &[u8]) -> Result<()> {
    if std::fs::read(path).ok().as_deref() == Some(bytes) {
        return Ok(());
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Runs every (init, seed) cell of `spec`, writing one JSON-lines curve
/// per cell under `curves/`, a checkpoint per evaluation under
/// `checkpoints/<cell>/`, and `manifest.json`.
///
/// Cells already marked done in the manifest are skipped, so an interrupted
/// matrix can be resumed and a finished one re-run without touching any file.
/// A failing cell is recorded and the others carry on.
pub fn run_matrix(spec: &ExperimentSpec, out_dir: impl AsRef<Path>) -> Result<MatrixReport> {
    spec.validate()?;
    let out_dir = out_dir.as_ref().to_path_buf();
    let env = spec.env_config()?;
    let cells = plan(spec)?;
    create_dir(&out_dir.join("curves"))?;
    create_dir(&out_dir.join("checkpoints"))?;

    let manifest_path = out_dir.join(MANIFEST_FILE);
    let mut manifest = match std::fs::read_to_string(&manifest_path) {
        Ok(text) => {
            let m: Manifest = serde_json::from_str(&text)?;
            if m.spec != *spec {
                return Err(Error::Validation(format!(
                    "{} belongs to a different experiment",
                    manifest_path.display()
                )));
            }
            m
        }
        Err(_) => Manifest {
            spec: spec.clone(),
            cells: BTreeMap::new(),
        },
    };
    let finished = |m: &Manifest, c: &Cell| {
        m.cells.get(&c.key).is_some_and(|o| {
            o.status == CellStatus::Done && o.curve.as_ref().is_some_and(|p| out_dir.join(p).is_file())
        })
    };
    let todo: Vec<&Cell> = cells.iter().filter(|c| !finished(&manifest, c)).collect();
    let resumed = cells.len() - todo.len();
    write_if_changed(&manifest_path, serde_json::to_string_pretty(&manifest)?.as_bytes())?;

    let manifest = Mutex::new(&mut manifest);
    let next = AtomicUsize::new(0);
    let save_error = Mutex::new(None);
    let worker = || loop {
        let i = next.fetch_add(1, Ordering::SeqCst);
        let Some(cell) = todo.get(i) else { break };
        let outcome = match run_cell(spec, &env, cell, &out_dir) {
            Ok(o) => o,
            Err(e) => {
                log::warn!("cell {} failed: {e}", cell.key);
                CellOutcome {
                    key: cell.key.clone(),
                    init: cell.label.clone(),
                    seed: cell.seed,
                    status: CellStatus::Failed,
                    error: Some(e.to_string()),
                    initial_eval: None,
                    final_eval: None,
                    evals: 0,
                    curve: None,
                }
            }
        };
        let mut m = manifest.lock().expect("manifest lock");
        m.cells.insert(cell.key.clone(), outcome);
        let saved = serde_json::to_string_pretty(&**m)
            .map_err(Error::from)
            .and_then(|text| write_if_changed(&manifest_path, text.as_bytes()));
        if let Err(e) = saved {
            save_error.lock().expect("error lock").get_or_insert(e);
        }
    };
    std::thread::scope(|s| {
        for _ in 0..spec.parallelism.min(todo.len()).max(1) {
            s.spawn(worker);
        }
    });
    if let Some(e) = save_error.into_inner().expect("error lock") {
        return Err(e);
    }
    let manifest = manifest.into_inner().expect("manifest lock");
    Ok(MatrixReport {
        cells: cells.iter().map(|c| manifest.cells[&c.key].clone()).collect(),
        out_dir,
        resumed,
    })
}

fn run_cell(spec: &ExperimentSpec, env: &ArenaConfig, cell: &Cell, out_dir: &Path) -> Result<CellOutcome> {
    let ckpt_dir = out_dir.join("checkpoints").join(&cell.key);
    create_dir(&ckpt_dir)?;
    let ckpt_path = |step: u64| ckpt_dir.join(format!("step-{step:09}.json"));
    let (initial_eval, curve) = match spec.algo.rl_algo() {
        None => {
            let path = cell.init.as_ref().expect("validated: bc needs inits");
            let data = ProcessedTrajectory::load(path)?;
            let mut curve = Vec::new();
            let (_, report) = train_bc_with(&data, &spec.il_hyper(), spec.mode, env, cell.seed, |u, policy| {
                curve.push(CurvePoint {
                    step: u.update as u64,
                    eval_mean: u.eval_mean.unwrap_or(f64::NAN),
                    eval_std: u.eval_std.unwrap_or(f64::NAN),
                    seed: cell.seed,
                    algo: Learner::Bc.name().to_string(),
                    mode: spec.mode,
                    init: cell.label.clone(),
                });
                Checkpoint::new(spec.mode, cell.seed, u.update as u64, policy, None).save(ckpt_path(u.update as u64))
            })?;
            (report.initial_eval_mean, curve)
        }
        Some(algo) => {
            let loaded = match &cell.init {
                Some(path) => {
                    let c = Checkpoint::load(path)?;
                    if c.mode != spec.mode {
                        return Err(Error::Validation(format!(
                            "{} was trained with mode {}, experiment uses {}",
                            path.display(),
                            c.mode,
                            spec.mode
                        )));
                    }
                    Some((c.policy(), c.value()))
                }
                None => None,
            };
            let warm = loaded.as_ref().map(|(p, v)| Warm {
                policy: p,
                value: v.as_ref(),
            });
            let out = train_rl_with(
                warm,
                env,
                &spec.rl_config(algo),
                spec.mode,
                cell.seed,
                &cell.label,
                |point, policy, value| {
                    Checkpoint::new(spec.mode, cell.seed, point.step, policy, Some(value)).save(ckpt_path(point.step))
                },
            )?;
            (Some(out.initial.mean), out.curve)
        }
    };
    let rel = PathBuf::from("curves").join(format!("{}.jsonl", cell.key));
    write_curve(out_dir.join(&rel), &curve)?;
    Ok(CellOutcome {
        key: cell.key.clone(),
        init: cell.label.clone(),
        seed: cell.seed,
        status: CellStatus::Done,
        error: None,
        initial_eval,
        final_eval: curve.last().map(|p| p.eval_mean),
        evals: curve.len(),
        curve: Some(rel),
    })
}
