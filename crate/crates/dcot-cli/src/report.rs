//! Run reports: per-task rows, recomputable aggregates, the CSV file
//! format, and the plain-text mode comparison.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{Context, Result};
use dcot_core::DCoTConfig;
use serde::{Deserialize, Serialize};

/// One `(task, mode)` result row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub task_id: String,
    pub mode: String,
    pub wall_time_ms: u64,
    pub step_count: usize,
    pub token_count: usize,
    pub correct: bool,
    pub episode_reward: f64,
    /// Abort reason, or empty when the session completed.
    #[serde(default)]
    pub aborted: String,
}

impl RunRow {
    pub fn is_aborted(&self) -> bool {
        !self.aborted.is_empty()
    }
}

/// A full run: rows plus the config snapshot and root seed they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub rows: Vec<RunRow>,
    pub config: DCoTConfig,
    pub seed: u64,
}

/// Aggregate statistics of one metric across one mode's rows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricStats {
    pub max: f64,
    pub mean: f64,
    pub median: f64,
}

fn stats(values: &[f64]) -> MetricStats {
    if values.is_empty() {
        return MetricStats {
            max: 0.0,
            mean: 0.0,
            median: 0.0,
        };
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let max = *sorted.last().unwrap();
    let mean = sorted.iter().sum::<f64>() / sorted.len() as f64;
    let n = sorted.len();
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    };
    MetricStats { max, mean, median }
}

/// The three benchmark metrics for one mode.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeAggregates {
    pub mode: String,
    pub rows: usize,
    pub wall_time_ms: MetricStats,
    pub step_count: MetricStats,
    pub token_count: MetricStats,
    pub total_tokens: usize,
}

impl RunReport {
    pub fn mode_rows(&self, mode: &str) -> Vec<&RunRow> {
        self.rows.iter().filter(|r| r.mode == mode).collect()
    }

    pub fn modes(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for row in &self.rows {
            if !out.contains(&row.mode) {
                out.push(row.mode.clone());
            }
        }
        out
    }

    /// Recompute aggregates from the rows.
    pub fn aggregates(&self, mode: &str) -> ModeAggregates {
        let rows = self.mode_rows(mode);
        let take = |f: &dyn Fn(&RunRow) -> f64| -> Vec<f64> { rows.iter().map(|r| f(r)).collect() };
        ModeAggregates {
            mode: mode.to_string(),
            rows: rows.len(),
            wall_time_ms: stats(&take(&|r| r.wall_time_ms as f64)),
            step_count: stats(&take(&|r| r.step_count as f64)),
            token_count: stats(&take(&|r| r.token_count as f64)),
            total_tokens: rows.iter().map(|r| r.token_count).sum(),
        }
    }

    pub fn any_aborted(&self) -> bool {
        self.rows.iter().any(RunRow::is_aborted)
    }

    /// Write rows as RFC-4180 CSV with a header line.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)
            .with_context(|| format!("writing {}", path.display()))?;
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Read rows back from a CSV written by [`RunReport::write_csv`].
    pub fn read_csv(path: &Path, config: DCoTConfig, seed: u64) -> Result<RunReport> {
        let mut r = csv::Reader::from_path(path)
            .with_context(|| format!("reading {}", path.display()))?;
        let rows: Vec<RunRow> = r.deserialize().collect::<std::result::Result<_, _>>()?;
        Ok(RunReport { rows, config, seed })
    }

    /// Plain-text comparison of per-mode maxima/means/medians for the three
    /// metrics, plus the config snapshot.
    pub fn comparison_text(&self) -> String {
        let modes = self.modes();
        let aggs: Vec<ModeAggregates> = modes.iter().map(|m| self.aggregates(m)).collect();
        let mut out = String::new();
        let _ = writeln!(out, "mode comparison");
        let _ = writeln!(out, "seed={}", self.seed);
        let pairs: Vec<String> = self
            .config
            .to_pairs()
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect();
        let _ = writeln!(out, "config: {}", pairs.join(" "));
        let _ = writeln!(out);
        let _ = write!(out, "{:<24}", "metric");
        for a in &aggs {
            let _ = write!(out, "{:>14}", a.mode);
        }
        let _ = writeln!(out);
        let metric = |name: &str, pick: &dyn Fn(&ModeAggregates) -> f64, out: &mut String| {
            let _ = write!(out, "{name:<24}");
            for a in &aggs {
                let _ = write!(out, "{:>14.3}", pick(a));
            }
            let _ = writeln!(out);
        };
        metric("max wall_time_ms", &|a| a.wall_time_ms.max, &mut out);
        metric("mean wall_time_ms", &|a| a.wall_time_ms.mean, &mut out);
        metric("median wall_time_ms", &|a| a.wall_time_ms.median, &mut out);
        metric("max step_count", &|a| a.step_count.max, &mut out);
        metric("mean step_count", &|a| a.step_count.mean, &mut out);
        metric("median step_count", &|a| a.step_count.median, &mut out);
        metric("max token_count", &|a| a.token_count.max, &mut out);
        metric("mean token_count", &|a| a.token_count.mean, &mut out);
        metric("median token_count", &|a| a.token_count.median, &mut out);
        metric("total token_count", &|a| a.total_tokens as f64, &mut out);
        let aborted = self.rows.iter().filter(|r| r.is_aborted()).count();
        let _ = writeln!(out);
        let _ = writeln!(out, "rows={} aborted={}", self.rows.len(), aborted);
        out
    }
}
