//! The `forage` command: preprocessing, training, evaluation, experiment
//! matrices and the recording server.

pub mod serve;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use forage::data::{generate_demo, process_raw, simulate_raw, Kinematics, ProcessedTrajectory, RawTrajectory, ScriptedExpert};
use forage::eval::{
    eval_policy, run_matrix, summarize, write_curve, ExperimentSpec, Learner, MatrixReport, SummaryOptions,
    DEFAULT_THRESHOLDS, EVAL_EPISODES, EVAL_STEPS,
};
use forage::il::{train_bc, IlHyperparams};
use forage::nn::Checkpoint;
use forage::rl::{train_rl_with, Algo, RlConfig, Warm, DEFAULT_BUDGET};
use forage::{derive_seed, stream, ArenaConfig, StateMode};

#[derive(Debug, Parser)]
#[command(name = "forage", version, about = "Coin-foraging imitation and reinforcement learning")]
pub struct Cli {
    /// Repeat for more log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Turn raw `t,x,y` recordings into state-action trajectories.
    Preprocess(PreprocessArgs),
    /// Record scripted-expert episodes as processed trajectories.
    Demo(DemoArgs),
    /// Write simulated recording sessions as raw CSV files.
    Synth(SynthArgs),
    /// Behavioral cloning on one or more processed trajectories.
    Imitate(ImitateArgs),
    /// PPO or TRPO from scratch or from a checkpoint.
    Train(TrainArgs),
    /// Greedy evaluation of a checkpoint.
    Evaluate(EvaluateArgs),
    /// Run an experiment spec over its inits and seeds.
    Matrix(MatrixArgs),
    /// Retrain checkpoints on the shifted coin layout.
    Shift(ShiftArgs),
    /// Behavioral cloning under each state representation.
    Ablate(AblateArgs),
    /// Final rewards, threshold fractions and win rates of curve files.
    Summarize(SummarizeArgs),
    /// Serve the capture UI and the recording API.
    Serve(ServeArgs),
}

fn parse_mode(s: &str) -> Result<StateMode, String> {
    StateMode::parse(s).ok_or_else(|| format!("unknown mode `{s}` (full, allocentric-only, egocentric-only)"))
}

fn parse_algo(s: &str) -> Result<Algo, String> {
    Algo::parse(s).ok_or_else(|| format!("unknown algorithm `{s}` (ppo, trpo)"))
}

fn parse_learner(s: &str) -> Result<Learner, String> {
    Learner::parse(s).ok_or_else(|| format!("unknown algorithm `{s}` (bc, ppo, trpo)"))
}

/// Step counts, also in exponent form such as `1e6` or `10.02e6`.
fn parse_steps(s: &str) -> Result<u64, String> {
    if let Ok(n) = s.parse::<u64>() {
        return Ok(n);
    }
    let x: f64 = s.parse().map_err(|_| format!("`{s}` is not a step count"))?;
    if x < 0.0 || x.fract() != 0.0 || x > u64::MAX as f64 {
        return Err(format!("`{s}` is not a whole number of steps"));
    }
    Ok(x as u64)
}

#[derive(Debug, Args)]
pub struct ArenaArg {
    /// Arena config JSON; the bundled default layout when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

impl ArenaArg {
    fn load(&self) -> Result<ArenaConfig> {
        match &self.config {
            Some(p) => ArenaConfig::load(p).with_context(|| format!("loading {}", p.display())),
            None => Ok(ArenaConfig::default()),
        }
    }
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    /// Glob of raw CSV files.
    #[arg(long)]
    pub raw: String,
    /// Coin layout to replay against; the config's own seed by default.
    #[arg(long)]
    pub coin_seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub arena: ArenaArg,
}

#[derive(Debug, Args)]
pub struct DemoArgs {
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub episodes: usize,
    /// Probability of a uniformly random action.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub arena: ArenaArg,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub arena: ArenaArg,
}

#[derive(Debug, Args)]
pub struct ImitateArgs {
    /// Processed trajectories, concatenated in the order given.
    #[arg(long, required = true, num_args = 1..)]
    pub data: Vec<PathBuf>,
    /// Keep only the first N pairs.
    #[arg(long)]
    pub pairs: Option<usize>,
    #[arg(long, value_parser = parse_mode, default_value = "full")]
    pub mode: StateMode,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub arena: ArenaArg,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, value_parser = parse_algo)]
    pub algo: Algo,
    /// Checkpoint to start from; a fresh network otherwise.
    #[arg(long)]
    pub init: Option<PathBuf>,
    /// Defaults to the checkpoint's mode, or `full`.
    #[arg(long, value_parser = parse_mode)]
    pub mode: Option<StateMode>,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, value_parser = parse_steps, default_value_t = DEFAULT_BUDGET)]
    pub budget: u64,
    #[arg(long, value_parser = parse_steps, default_value_t = 30_000)]
    pub eval_every: u64,
    #[arg(long, default_value_t = 30_000)]
    pub batch_size: usize,
    #[arg(long, default_value_t = EVAL_EPISODES)]
    pub eval_episodes: usize,
    #[arg(long, default_value_t = EVAL_STEPS)]
    pub eval_steps: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub arena: ArenaArg,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = EVAL_EPISODES)]
    pub episodes: usize,
    #[arg(long, default_value_t = EVAL_STEPS)]
    pub steps: usize,
    #[command(flatten)]
    pub arena: ArenaArg,
}

#[derive(Debug, Args)]
pub struct MatrixArgs {
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the spec's seeds.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    #[arg(long, value_parser = parse_steps)]
    pub budget: Option<u64>,
    #[arg(long)]
    pub parallelism: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ShiftArgs {
    /// Checkpoints to retrain.
    #[arg(long)]
    pub init_glob: String,
    #[arg(long, value_parser = parse_learner, default_value = "ppo")]
    pub algo: Learner,
    #[arg(long, value_parser = parse_mode, default_value = "full")]
    pub mode: StateMode,
    #[arg(long, value_delimiter = ',', required = true)]
    pub seeds: Vec<u64>,
    #[arg(long, value_parser = parse_steps, default_value = "2e6")]
    pub budget: u64,
    #[arg(long, value_parser = parse_steps, default_value_t = 30_000)]
    pub eval_every: u64,
    #[arg(long, default_value_t = 1)]
    pub parallelism: usize,
    /// Shifted arena config; the bundled shift layout when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    /// Processed trajectories to imitate.
    #[arg(long)]
    pub data_glob: String,
    #[arg(long, value_delimiter = ',', required = true)]
    pub seeds: Vec<u64>,
    #[arg(long, default_value_t = 1)]
    pub parallelism: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SummarizeArgs {
    /// Glob of JSON-lines curve files.
    #[arg(long)]
    pub curves: String,
    /// Reward thresholds as fractions of all coins.
    #[arg(long, value_delimiter = ',')]
    pub thresholds: Option<Vec<f64>>,
    /// Processed trajectories whose replayed coin counts serve as baselines.
    #[arg(long)]
    pub baselines: Option<String>,
    /// Where to write the `threshold,fraction` CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[command(flatten)]
    pub arena: ArenaArg,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    /// Directory for uploaded recordings.
    #[arg(long)]
    pub out: PathBuf,
    /// Capture UI build to serve under `/`.
    #[arg(long = "static")]
    pub static_dir: Option<PathBuf>,
    #[command(flatten)]
    pub arena: ArenaArg,
}

fn expand(pattern: &str) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in glob::glob(pattern).with_context(|| format!("bad glob `{pattern}`"))? {
        files.push(entry?);
    }
    files.sort();
    if files.is_empty() {
        bail!("`{pattern}` matches no files");
    }
    Ok(files)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)?).with_context(|| format!("writing {}", path.display()))
}

fn stem(path: &Path) -> String {
    path.file_stem().map_or_else(|| "out".into(), |s| s.to_string_lossy().into_owned())
}

fn preprocess(a: &PreprocessArgs) -> Result<bool> {
    let config = a.arena.load()?;
    let coin_seed = a.coin_seed.unwrap_or(config.coin_seed);
    let files = expand(&a.raw)?;
    create_dir(&a.out)?;
    let mut ok = true;
    for f in files {
        let done = RawTrajectory::load(&f)
            .map_err(anyhow::Error::from)
            .and_then(|raw| Ok(process_raw(&raw, &config, coin_seed, f.to_string_lossy())?))
            .and_then(|p| {
                let dest = a.out.join(format!("{}.json", stem(&f)));
                p.save(&dest)?;
                Ok(p)
            });
        match done {
            Ok(p) => println!("{}: {} pairs, {} coins", f.display(), p.len(), p.meta.coins_collected),
            Err(e) => {
                eprintln!("error: {}: {e:#}", f.display());
                ok = false;
            }
        }
    }
    Ok(ok)
}

fn demo(a: &DemoArgs) -> Result<bool> {
    let config = a.arena.load()?;
    let expert = ScriptedExpert::with_noise(a.noise);
    create_dir(&a.out)?;
    for (k, ep) in generate_demo(&expert, &config, a.seed, a.episodes)?.iter().enumerate() {
        let path = a.out.join(format!("expert-seed{}-ep{k}.json", a.seed));
        ep.save(&path)?;
        println!("{}: {} pairs, {} coins", path.display(), ep.len(), ep.meta.coins_collected);
    }
    Ok(true)
}

fn synth(a: &SynthArgs) -> Result<bool> {
    let config = a.arena.load()?;
    create_dir(&a.out)?;
    for k in 0..a.count {
        let s = simulate_raw(&config, &Kinematics::default(), derive_seed(a.seed, k as u64));
        let path = a.out.join(format!("synth-seed{}-{k:03}.csv", a.seed));
        std::fs::write(&path, s.raw.to_csv()).with_context(|| format!("writing {}", path.display()))?;
        println!("{}: {} samples, {} coins", path.display(), s.raw.len(), s.collected);
    }
    Ok(true)
}

fn load_dataset(paths: &[PathBuf], limit: Option<usize>) -> Result<ProcessedTrajectory> {
    let mut parts = Vec::new();
    for p in paths {
        parts.push(ProcessedTrajectory::load(p).with_context(|| format!("loading {}", p.display()))?);
    }
    let mut all = parts[0].clone();
    for p in &parts[1..] {
        all.pairs.extend_from_slice(&p.pairs);
        all.meta.coins_collected += p.meta.coins_collected;
    }
    Ok(match limit {
        Some(n) => all.truncated(n),
        None => all,
    })
}

fn imitate(a: &ImitateArgs) -> Result<bool> {
    let config = a.arena.load()?;
    let data = load_dataset(&a.data, a.pairs)?;
    let (policy, report) = train_bc(&data, &IlHyperparams::default(), a.mode, &config, a.seed)?;
    create_dir(&a.out)?;
    let name = format!("bc-{}-seed{}", a.mode, a.seed);
    Checkpoint::new(a.mode, a.seed, report.updates.len() as u64, &policy, None).save(a.out.join(format!("{name}.json")))?;
    write_json(&a.out.join(format!("{name}.report.json")), &report)?;
    std::fs::write(a.out.join(format!("{name}.jsonl")), report.to_jsonl())?;
    println!(
        "{name}: {} train pairs, final nll {:.4}, held-out agreement {}, eval {}",
        report.train_pairs,
        report.final_nll(),
        report.holdout_agreement.map_or("n/a".into(), |x| format!("{x:.3}")),
        report.updates.last().and_then(|u| u.eval_mean).map_or("n/a".into(), |x| format!("{x:.1}")),
    );
    Ok(true)
}

fn train(a: &TrainArgs) -> Result<bool> {
    let config = a.arena.load()?;
    let init = a.init.as_ref().map(Checkpoint::load).transpose()?;
    let mode = a.mode.or(init.as_ref().map(|c| c.mode)).unwrap_or(StateMode::Full);
    let nets = init.as_ref().map(|c| (c.policy(), c.value()));
    let warm = nets.as_ref().map(|(p, v)| Warm { policy: p, value: v.as_ref() });
    let mut cfg = RlConfig::new(a.algo).with_budget(a.budget);
    cfg.eval_every = a.eval_every;
    cfg.batch_size = a.batch_size;
    cfg.eval_episodes = a.eval_episodes;
    cfg.eval_steps = a.eval_steps;
    let label = a.init.as_deref().map_or_else(|| "fresh".to_string(), stem);
    let name = format!("{}-{label}-seed{}", a.algo, a.seed);
    let ckpt_dir = a.out.join(&name);
    create_dir(&ckpt_dir)?;
    let out = train_rl_with(warm, &config, &cfg, mode, a.seed, &label, |point, policy, value| {
        Checkpoint::new(mode, a.seed, point.step, policy, Some(value)).save(ckpt_dir.join(format!("step-{:09}.json", point.step)))
    })?;
    write_curve(a.out.join(format!("{name}.jsonl")), &out.curve)?;
    println!(
        "{name}: initial eval {:.1}, final eval {:.1} after {} steps",
        out.initial.mean,
        out.final_eval(),
        out.curve.last().map_or(0, |p| p.step)
    );
    Ok(true)
}

fn evaluate(a: &EvaluateArgs) -> Result<bool> {
    let config = a.arena.load()?;
    let ckpt = Checkpoint::load(&a.checkpoint)?;
    let r = eval_policy(&ckpt.policy(), &config, a.episodes, a.steps, ckpt.mode, derive_seed(a.seed, stream::EVAL))?;
    println!("{}", serde_json::to_string(&r)?);
    Ok(true)
}

fn report_matrix(r: &MatrixReport) -> bool {
    for c in &r.cells {
        match &c.error {
            Some(e) => println!("{}: failed: {e}", c.key),
            None => println!(
                "{}: initial {} final {} ({} evals)",
                c.key,
                c.initial_eval.map_or("n/a".into(), |x| format!("{x:.1}")),
                c.final_eval.map_or("n/a".into(), |x| format!("{x:.1}")),
                c.evals
            ),
        }
    }
    if r.resumed > 0 {
        println!("{} cells already complete", r.resumed);
    }
    r.all_done()
}

fn matrix(a: &MatrixArgs) -> Result<bool> {
    let mut spec = ExperimentSpec::load(&a.spec).with_context(|| format!("loading {}", a.spec.display()))?;
    if let Some(s) = &a.seeds {
        spec.seeds = s.clone();
    }
    if let Some(b) = a.budget {
        spec.budget = b;
    }
    if let Some(p) = a.parallelism {
        spec.parallelism = p;
    }
    Ok(report_matrix(&run_matrix(&spec, &a.out)?))
}

fn shift(a: &ShiftArgs) -> Result<bool> {
    create_dir(&a.out)?;
    let env_path = match &a.config {
        Some(p) => p.clone(),
        None => {
            let p = a.out.join("shift-config.json");
            std::fs::write(&p, ArenaConfig::shifted().to_json())?;
            p
        }
    };
    let mut spec = ExperimentSpec::new(a.algo, a.mode, a.seeds.clone());
    spec.env_config_path = Some(env_path);
    spec.init_glob = Some(a.init_glob.clone());
    spec.budget = a.budget;
    spec.eval_every = a.eval_every;
    spec.parallelism = a.parallelism;
    Ok(report_matrix(&run_matrix(&spec, a.out.join("runs"))?))
}

fn ablate(a: &AblateArgs) -> Result<bool> {
    let mut ok = true;
    for mode in StateMode::ALL {
        let mut spec = ExperimentSpec::new(Learner::Bc, mode, a.seeds.clone());
        spec.init_glob = Some(a.data_glob.clone());
        spec.env_config_path = a.config.clone();
        spec.parallelism = a.parallelism;
        println!("== {mode}");
        ok &= report_matrix(&run_matrix(&spec, a.out.join(mode.name()))?);
    }
    Ok(ok)
}

fn summarize_cmd(a: &SummarizeArgs) -> Result<bool> {
    let config = a.arena.load()?;
    let baselines = match &a.baselines {
        Some(g) => expand(g)?
            .iter()
            .map(|p| Ok(ProcessedTrajectory::load(p)?.meta.coins_collected as f64))
            .collect::<Result<Vec<_>>>()?,
        None => Vec::new(),
    };
    let opts = SummaryOptions {
        thresholds: a.thresholds.clone().unwrap_or_else(|| DEFAULT_THRESHOLDS.to_vec()),
        total_coins: config.total_coins() as f64,
        baselines,
    };
    let table = summarize(&expand(&a.curves)?, &opts)?;
    println!("{}", serde_json::to_string_pretty(&table)?);
    if let Some(p) = &a.csv {
        std::fs::write(p, table.to_csv()).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(true)
}

fn serve_cmd(a: &ServeArgs) -> Result<bool> {
    let state = serve::AppState::new(a.arena.load()?, &a.out)?;
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(serve::serve(a.port, state, a.static_dir.clone()))?;
    Ok(true)
}

pub fn run(cli: Cli) -> Result<bool> {
    match &cli.command {
        Command::Preprocess(a) => preprocess(a),
        Command::Demo(a) => demo(a),
        Command::Synth(a) => synth(a),
        Command::Imitate(a) => imitate(a),
        Command::Train(a) => train(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Matrix(a) => matrix(a),
        Command::Shift(a) => shift(a),
        Command::Ablate(a) => ablate(a),
        Command::Summarize(a) => summarize_cmd(a),
        Command::Serve(a) => serve_cmd(a),
    }
}

pub fn main_with(cli: Cli) -> ExitCode {
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
