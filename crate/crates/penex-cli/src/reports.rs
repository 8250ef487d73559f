//! Report files: plot-ready CSVs and JSON summaries. All floats use the
//! shortest round-trip decimal form so identical runs produce identical
//! bytes; wall-clock time lives only in `summary.json`.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use penex_core::boost::RoundRecord;
use penex_core::metrics::{Histogram, MetricsReport};
use penex_core::model::Parameters;
use penex_core::train::{EpochRecord, RunReport, StepLog};

use crate::config::FileConfig;

pub const METRICS_HEADER: &str = "epoch,split,acc,ece,ce,brier,mean_margin,rho";
pub const RHO_HEADER: &str = "step,rho";
pub const MARGINS_HEADER: &str = "split,bin_lo,bin_hi,count";
pub const BOOST_HEADER: &str = "round,epsilon,eta,train_acc,mean_margin";

fn write_atomic(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)
            .with_context(|| format!("creating directory {}", parent.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn metric_row(epoch: usize, split: &str, m: &MetricsReport, rho: Option<f64>) -> String {
    format!(
        "{epoch},{split},{},{},{},{},{},{}",
        m.acc,
        m.ece,
        m.ce,
        m.brier,
        m.mean_margin,
        opt(rho)
    )
}

/// `metrics.csv`: two rows per recorded epoch, one per split. The rho
/// column is empty whenever the loss has no penalty weight.
pub fn write_metrics_csv(path: &Path, epochs: &[EpochRecord]) -> Result<()> {
    let mut text = String::from(METRICS_HEADER);
    text.push('\n');
    for rec in epochs {
        text.push_str(&metric_row(rec.epoch, "train", &rec.train, rec.rho));
        text.push('\n');
        text.push_str(&metric_row(rec.epoch, "val", &rec.val, rec.rho));
        text.push('\n');
    }
    write_atomic(path, &text)
}

/// `rho.csv`: the per-step penalty-weight trajectory.
pub fn write_rho_csv(path: &Path, steps: &[StepLog]) -> Result<()> {
    let mut text = String::from(RHO_HEADER);
    text.push('\n');
    for s in steps {
        if let Some(rho) = s.rho {
            text.push_str(&format!("{},{}\n", s.step, rho));
        }
    }
    write_atomic(path, &text)
}

fn histogram_rows(text: &mut String, split: &str, hist: &Histogram) {
    for (i, &count) in hist.counts.iter().enumerate() {
        let (lo, hi) = hist.bin_bounds(i);
        text.push_str(&format!("{split},{lo},{hi},{count}\n"));
    }
}

/// `margins.csv`: 50-bin margin histograms for both splits.
pub fn write_margins_csv(path: &Path, train: &Histogram, val: &Histogram) -> Result<()> {
    let mut text = String::from(MARGINS_HEADER);
    text.push('\n');
    histogram_rows(&mut text, "train", train);
    histogram_rows(&mut text, "val", val);
    write_atomic(path, &text)
}

/// Ensemble-margin histogram in the same format, under the split name
/// "ensemble", for side-by-side plots against a training run.
pub fn write_ensemble_margins_csv(path: &Path, hist: &Histogram) -> Result<()> {
    let mut text = String::from(MARGINS_HEADER);
    text.push('\n');
    histogram_rows(&mut text, "ensemble", hist);
    write_atomic(path, &text)
}

/// `boost.csv`: one row per accepted boosting round.
pub fn write_boost_csv(path: &Path, rounds: &[RoundRecord]) -> Result<()> {
    let mut text = String::from(BOOST_HEADER);
    text.push('\n');
    for r in rounds {
        text.push_str(&format!(
            "{},{},{},{},{}\n",
            r.round, r.epsilon, r.eta, r.train_acc, r.mean_margin
        ));
    }
    write_atomic(path, &text)
}

/// Everything `summary.json` holds about a finished run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Summary {
    pub name: String,
    /// Fully-resolved config; feeding it back reproduces the run.
    pub config: FileConfig,
    pub diverged: bool,
    pub truncation_epoch: Option<usize>,
    pub epochs_recorded: usize,
    pub final_train: MetricsReport,
    pub final_val: MetricsReport,
    pub final_rho: Option<f64>,
    pub rho_trajectory: Vec<(u64, f64)>,
    pub final_al_lambda: Option<f64>,
    pub mean_abs_logit_final: f64,
    /// True if any epoch's evaluation clamped a probability.
    pub ce_saturated_any: bool,
    pub wall_clock_secs: f64,
}

pub fn build_summary(name: &str, config: &FileConfig, report: &RunReport<f64>) -> Summary {
    let last = report.epochs.last().expect("a run records at least epoch 0");
    Summary {
        name: name.to_string(),
        config: config.clone(),
        diverged: report.diverged,
        truncation_epoch: report.truncation_epoch,
        epochs_recorded: report.epochs.len(),
        final_train: last.train,
        final_val: last.val,
        final_rho: last.rho,
        rho_trajectory: report
            .steps
            .iter()
            .filter_map(|s| s.rho.map(|r| (s.step, r)))
            .collect(),
        final_al_lambda: report.final_al_lambda,
        mean_abs_logit_final: last.mean_abs_logit,
        ce_saturated_any: report
            .epochs
            .iter()
            .any(|e| e.train.ce_saturated || e.val.ce_saturated),
        wall_clock_secs: report.wall_clock_secs,
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).context("serializing json")?;
    text.push('\n');
    write_atomic(path, &text)
}

pub fn read_params(path: &Path) -> Result<Parameters<f64>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading parameters {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Merged sweep table: the per-run metrics rows keyed by α.
pub fn write_sweep_csv(path: &Path, runs: &[(f64, Vec<EpochRecord>)]) -> Result<()> {
    let mut text = format!("alpha,{METRICS_HEADER}\n");
    for (alpha, epochs) in runs {
        for rec in epochs {
            text.push_str(&format!(
                "{alpha},{}\n",
                metric_row(rec.epoch, "train", &rec.train, rec.rho)
            ));
            text.push_str(&format!(
                "{alpha},{}\n",
                metric_row(rec.epoch, "val", &rec.val, rec.rho)
            ));
        }
    }
    write_atomic(path, &text)
}

/// Merged ablation table keyed by loss kind, with the per-epoch mean
/// absolute logit appended so breakdowns are visible in one file.
pub fn write_ablate_csv(path: &Path, runs: &[(String, Vec<EpochRecord>)]) -> Result<()> {
    let mut text = format!("loss,{METRICS_HEADER},mean_abs_logit\n");
    for (kind, epochs) in runs {
        for rec in epochs {
            text.push_str(&format!(
                "{kind},{},{}\n",
                metric_row(rec.epoch, "train", &rec.train, rec.rho),
                rec.mean_abs_logit
            ));
            text.push_str(&format!(
                "{kind},{},{}\n",
                metric_row(rec.epoch, "val", &rec.val, rec.rho),
                rec.mean_abs_logit
            ));
        }
    }
    write_atomic(path, &text)
}
