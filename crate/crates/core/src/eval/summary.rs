use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rl::CurvePoint;

/// Published average coin count of the human participants.
pub const HUMAN_AVERAGE: f64 = 243.98;

/// Reward thresholds (fractions of all coins) for the main comparison.
pub const DEFAULT_THRESHOLDS: [f64; 4] = [0.7, 0.8, 0.85, 0.9];

/// Thresholds used for the reward-shift comparison.
pub const SHIFT_THRESHOLDS: [f64; 4] = [0.7, 0.8, 0.9, 0.95];

/// Reads a JSON-lines learning curve; blank lines are skipped.
pub fn read_curve(path: impl AsRef<Path>) -> Result<Vec<CurvePoint>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                line: i as u64 + 1,
                msg: format!("{}: {e}", path.display()),
            })
        })
        .collect()
}

pub fn write_curve(path: impl AsRef<Path>, curve: &[CurvePoint]) -> Result<()> {
    let path = path.as_ref();
    let mut text = String::new();
    for p in curve {
        text.push_str(&serde_json::to_string(p)?);
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryOptions {
    pub thresholds: Vec<f64>,
    pub total_coins: f64,
    /// Reference scores for pairwise win rates, e.g. the coins each human
    /// collected in their own demonstration.
    pub baselines: Vec<f64>,
}

impl Default for SummaryOptions {
    fn default() -> Self {
        Self {
            thresholds: DEFAULT_THRESHOLDS.to_vec(),
            total_coins: 325.0,
            baselines: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyScore {
    pub source: PathBuf,
    pub final_reward: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRow {
    pub threshold: f64,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryTable {
    pub policies: Vec<PolicyScore>,
    pub mean_final: f64,
    /// Ascending thresholds; `fraction` is the share of policies whose final
    /// reward, as a fraction of all coins, is strictly above `threshold`.
    pub rows: Vec<ThresholdRow>,
    /// Share of policies strictly above the human average.
    pub win_rate_vs_human_average: f64,
    /// Share of (policy, baseline) pairs the policy wins outright; `None`
    /// without baselines.
    pub win_rate_vs_baselines: Option<f64>,
}

impl SummaryTable {
    pub fn from_scores(policies: Vec<PolicyScore>, opts: &SummaryOptions) -> Self {
        let n = policies.len().max(1) as f64;
        let scores: Vec<f64> = policies.iter().map(|p| p.final_reward).collect();
        let share = |pred: &dyn Fn(f64) -> bool| scores.iter().filter(|&&s| pred(s)).count() as f64 / n;
        let mut thresholds = opts.thresholds.clone();
        thresholds.sort_by(f64::total_cmp);
        thresholds.dedup();
        let rows = thresholds
            .iter()
            .map(|&t| ThresholdRow {
                threshold: t,
                // compare ratios: 0.7 * 325 rounds below 227.5
                fraction: share(&|s| s / opts.total_coins > t),
            })
            .collect();
        let win_rate_vs_baselines = (!opts.baselines.is_empty()).then(|| {
            let wins: usize = scores
                .iter()
                .map(|s| opts.baselines.iter().filter(|&&b| s > &b).count())
                .sum();
            wins as f64 / (n * opts.baselines.len() as f64)
        });
        Self {
            mean_final: scores.iter().sum::<f64>() / n,
            win_rate_vs_human_average: share(&|s| s > HUMAN_AVERAGE),
            win_rate_vs_baselines,
            rows,
            policies,
        }
    }

    /// `threshold,fraction` table.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["threshold", "fraction"]).expect("in-memory write");
        for r in &self.rows {
            w.write_record([r.threshold.to_string(), r.fraction.to_string()])
                .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii csv")
    }
}

/// Final-evaluation reward of each curve file, threshold fractions and win
/// rates.
pub fn summarize(files: &[PathBuf], opts: &SummaryOptions) -> Result<SummaryTable> {
    if files.is_empty() {
        return Err(Error::Validation("no result files to summarize".into()));
    }
    let mut policies = Vec::with_capacity(files.len());
    for f in files {
        let curve = read_curve(f)?;
        let last = curve
            .last()
            .ok_or_else(|| Error::Validation(format!("{}: empty curve", f.display())))?;
        policies.push(PolicyScore {
            source: f.clone(),
            final_reward: last.eval_mean,
        });
    }
    Ok(SummaryTable::from_scores(policies, opts))
}
