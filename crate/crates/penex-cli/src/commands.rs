//! Subcommand implementations. Sweeps and ablations fan out over a worker
//! pool with disjoint state and merge reports single-threaded afterwards.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use penex_core::boost::samme_train;
use penex_core::data::gen_blobs;
use penex_core::losses::{LossKind, RhoMode};
use penex_core::metrics::Histogram;
use penex_core::model::{forward_slices, init_model, ModelSpec};
use penex_core::penalty::{PenaltyConfig, PenaltyState};
use penex_core::train::{evaluate_split, train, RunReport, TrainConfig, MARGIN_HISTOGRAM_BINS};
use penex_core::verify;

use crate::config::{default_alpha_for, Experiment, FileConfig};
use crate::reports;

/// Writes the full report set for one training run into `dir`.
fn write_run_outputs(
    dir: &Path,
    name: &str,
    echo: &FileConfig,
    report: &RunReport<f64>,
) -> Result<()> {
    reports::write_metrics_csv(&dir.join("metrics.csv"), &report.epochs)?;
    reports::write_rho_csv(&dir.join("rho.csv"), &report.steps)?;
    let (train_hist, val_hist) = report.margin_histograms()?;
    reports::write_margins_csv(&dir.join("margins.csv"), &train_hist, &val_hist)?;
    reports::write_json(&dir.join("summary.json"), &reports::build_summary(name, echo, report))?;
    reports::write_json(&dir.join("params.json"), &report.final_params)?;
    Ok(())
}

pub fn cmd_train(exp: &Experiment) -> Result<RunReport<f64>> {
    let report = train::<f64>(&exp.train_config, &exp.train_data, &exp.val_data)?;
    write_run_outputs(&exp.output_dir, &exp.name, &exp.echo, &report)?;
    let last = report.epochs.last().expect("epoch 0 is always recorded");
    if report.diverged {
        eprintln!(
            "run diverged at epoch {}; partial reports written to {}",
            report.truncation_epoch.unwrap_or(0),
            exp.output_dir.display()
        );
    }
    println!(
        "{}: {} epochs, val acc {:.4}, val ece {:.4}{} -> {}",
        exp.name,
        report.epochs.len() - 1,
        last.val.acc,
        last.val.ece,
        last.rho.map(|r| format!(", rho {r:.4}")).unwrap_or_default(),
        exp.output_dir.display()
    );
    Ok(report)
}

/// Metrics of a stored parameter snapshot on both splits.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvalReport {
    pub params_path: PathBuf,
    pub train: penex_core::metrics::MetricsReport,
    pub val: penex_core::metrics::MetricsReport,
    pub mean_abs_logit: f64,
}

pub fn cmd_eval(exp: &Experiment) -> Result<()> {
    let params = reports::read_params(&exp.params_path)?;
    let cfg = &exp.train_config;
    let train_eval = evaluate_split::<f64>(&cfg.model, &params, &cfg.loss, &exp.train_data)?;
    let val_eval = evaluate_split::<f64>(&cfg.model, &params, &cfg.loss, &exp.val_data)?;
    let report = EvalReport {
        params_path: exp.params_path.clone(),
        train: train_eval.report,
        val: val_eval.report,
        mean_abs_logit: train_eval.mean_abs_logit,
    };
    reports::write_json(&exp.output_dir.join("eval.json"), &report)?;
    println!(
        "eval: train acc {:.4}, val acc {:.4}, val ce {:.4}",
        report.train.acc, report.val.acc, report.val.ce
    );
    Ok(())
}

/// Directory name for one sweep run. α is printed with `{}` so the name
/// is stable and unambiguous.
fn sweep_dir(base: &Path, alpha: f64) -> PathBuf {
    base.join(format!("alpha_{alpha}"))
}

pub fn cmd_sweep(exp: &Experiment) -> Result<()> {
    let configs: Vec<(f64, TrainConfig, FileConfig)> = exp
        .sweep
        .iter()
        .enumerate()
        .map(|(i, &alpha)| {
            let mut cfg = exp.train_config.clone();
            cfg.loss.alpha = alpha;
            cfg.seed = exp.train_config.seed.wrapping_add(i as u64);
            let mut echo = exp.echo.clone();
            echo.loss.alpha = Some(alpha);
            echo.seed = Some(cfg.seed);
            echo.output_dir = Some(sweep_dir(&exp.output_dir, alpha));
            (alpha, cfg, echo)
        })
        .collect();

    let runs: Vec<(f64, FileConfig, Result<RunReport<f64>>)> = configs
        .into_par_iter()
        .map(|(alpha, cfg, echo)| {
            let report =
                train::<f64>(&cfg, &exp.train_data, &exp.val_data).map_err(anyhow::Error::from);
            (alpha, echo, report)
        })
        .collect();

    let mut merged = Vec::new();
    for (alpha, echo, outcome) in &runs {
        match outcome {
            Ok(report) => {
                let dir = sweep_dir(&exp.output_dir, *alpha);
                write_run_outputs(&dir, &format!("{}_alpha_{alpha}", exp.name), echo, report)?;
                if report.diverged {
                    eprintln!("alpha {alpha}: diverged at epoch {:?}", report.truncation_epoch);
                }
                merged.push((*alpha, report.epochs.clone()));
            }
            Err(err) => eprintln!("alpha {alpha}: run failed: {err:#}"),
        }
    }
    reports::write_sweep_csv(&exp.output_dir.join("sweep.csv"), &merged)?;
    println!(
        "sweep over {} alphas -> {}",
        exp.sweep.len(),
        exp.output_dir.join("sweep.csv").display()
    );
    Ok(())
}

/// Per-kind entry in the ablation summary.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AblationEntry {
    pub loss: String,
    pub alpha: f64,
    pub diverged: bool,
    pub truncation_epoch: Option<usize>,
    pub final_val_acc: f64,
    pub final_mean_abs_logit: f64,
    /// Largest |Σ_j logit_j| seen across epoch snapshots; only checked for
    /// the structurally constrained head.
    pub max_zero_sum_deviation: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AblationSummary {
    pub entries: Vec<AblationEntry>,
    /// Informational comparison of the penalized loss against the
    /// quadratic-penalty ablation; logged, never asserted.
    pub penex_vs_sq_penalty_note: Option<String>,
}

/// Largest absolute logit row sum over all recorded snapshots, evaluated
/// on the validation split.
fn max_zero_sum_deviation(
    model: &ModelSpec,
    report: &RunReport<f64>,
    data: &penex_core::data::Dataset,
) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for (_, params) in &report.checkpoints {
        let logits = forward_slices(model, params, &data.features, data.len())?;
        for row in logits.chunks_exact(model.num_classes) {
            worst = worst.max(row.iter().sum::<f64>().abs());
        }
    }
    Ok(worst)
}

pub fn cmd_ablate(exp: &Experiment) -> Result<()> {
    let num_classes = exp.train_config.model.num_classes;
    let configs: Vec<(LossKind, TrainConfig, FileConfig)> = exp
        .ablations
        .iter()
        .map(|&kind| {
            let mut cfg = exp.train_config.clone();
            cfg.loss.kind = kind;
            if !exp.alpha_from_user {
                cfg.loss.alpha = default_alpha_for(kind, num_classes);
            }
            if kind != LossKind::Penex {
                cfg.loss.rho = match exp.train_config.loss.rho {
                    RhoMode::Fixed(v) => RhoMode::Fixed(v),
                    _ => RhoMode::Fixed(crate::config::DEFAULT_CONSTRAINT_RHO),
                };
            }
            cfg.model.conex_hard = kind == LossKind::ConexHard;
            // Snapshots feed the per-epoch constraint audit below.
            cfg.record_checkpoints = cfg.record_checkpoints || kind == LossKind::ConexHard;
            let mut echo = exp.echo.clone();
            echo.loss.kind = Some(kind);
            echo.loss.alpha = Some(cfg.loss.alpha);
            echo.loss.rho = Some(cfg.loss.rho);
            echo.model.conex_hard = Some(cfg.model.conex_hard);
            echo.train.record_checkpoints = Some(cfg.record_checkpoints);
            echo.output_dir = Some(exp.output_dir.join(kind.to_string()));
            (kind, cfg, echo)
        })
        .collect();

    let runs: Vec<(LossKind, TrainConfig, FileConfig, Result<RunReport<f64>>)> = configs
        .into_par_iter()
        .map(|(kind, cfg, echo)| {
            let report =
                train::<f64>(&cfg, &exp.train_data, &exp.val_data).map_err(anyhow::Error::from);
            (kind, cfg, echo, report)
        })
        .collect();

    let mut merged = Vec::new();
    let mut entries = Vec::new();
    for (kind, cfg, echo, outcome) in &runs {
        let report = match outcome {
            Ok(r) => r,
            Err(err) => {
                eprintln!("{kind}: run failed: {err:#}");
                continue;
            }
        };
        let dir = exp.output_dir.join(kind.to_string());
        write_run_outputs(&dir, &format!("{}_{kind}", exp.name), echo, report)?;
        let deviation = if *kind == LossKind::ConexHard {
            Some(max_zero_sum_deviation(&cfg.model, report, &exp.val_data)?)
        } else {
            None
        };
        let last = report.epochs.last().expect("epoch 0 is always recorded");
        entries.push(AblationEntry {
            loss: kind.to_string(),
            alpha: cfg.loss.alpha,
            diverged: report.diverged,
            truncation_epoch: report.truncation_epoch,
            final_val_acc: last.val.acc,
            final_mean_abs_logit: last.mean_abs_logit,
            max_zero_sum_deviation: deviation,
        });
        merged.push((kind.to_string(), report.epochs.clone()));
    }

    let acc_of = |k: LossKind| {
        entries.iter().find(|e| e.loss == k.to_string()).map(|e| e.final_val_acc)
    };
    let note = match (acc_of(LossKind::Penex), acc_of(LossKind::ConexSqPenalty)) {
        (Some(p), Some(c)) => {
            let note = format!(
                "penex final val acc {p:.4} vs conex_sq_penalty {c:.4} ({})",
                if p >= c { "penex ahead or tied" } else { "sq penalty ahead on this run" }
            );
            eprintln!("{note}");
            Some(note)
        }
        _ => None,
    };

    reports::write_ablate_csv(&exp.output_dir.join("ablate.csv"), &merged)?;
    reports::write_json(
        &exp.output_dir.join("ablate_summary.json"),
        &AblationSummary { entries, penex_vs_sq_penalty_note: note },
    )?;
    println!(
        "ablation over {} losses -> {}",
        exp.ablations.len(),
        exp.output_dir.join("ablate.csv").display()
    );
    Ok(())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BoostSummary {
    pub rounds_requested: usize,
    pub rounds_run: usize,
    /// Reason boosting stopped before the requested round count, if any.
    pub stopped_early: Option<String>,
    pub train_acc: f64,
    pub val_acc: f64,
    pub mean_train_margin: f64,
}

pub fn cmd_boost(exp: &Experiment) -> Result<()> {
    let report = samme_train(&exp.train_data, exp.rounds, exp.train_config.seed)?;
    reports::write_boost_csv(&exp.output_dir.join("boost.csv"), &report.rounds)?;

    let margins: Vec<f64> = (0..exp.train_data.len())
        .map(|i| report.ensemble.margin(exp.train_data.row(i), exp.train_data.labels[i]))
        .collect();
    let hist = Histogram::new(&margins, MARGIN_HISTOGRAM_BINS)?;
    reports::write_ensemble_margins_csv(&exp.output_dir.join("boost_margins.csv"), &hist)?;

    let acc_on = |data: &penex_core::data::Dataset| {
        let correct = (0..data.len())
            .filter(|&i| report.ensemble.predict(data.row(i)) == data.labels[i])
            .count();
        correct as f64 / data.len() as f64
    };
    let summary = BoostSummary {
        rounds_requested: exp.rounds,
        rounds_run: report.rounds.len(),
        stopped_early: report.stopped_early.clone(),
        train_acc: acc_on(&exp.train_data),
        val_acc: acc_on(&exp.val_data),
        mean_train_margin: margins.iter().sum::<f64>() / margins.len().max(1) as f64,
    };
    reports::write_json(&exp.output_dir.join("boost_summary.json"), &summary)?;
    println!(
        "boosting: {} rounds, train acc {:.4}, val acc {:.4} -> {}",
        summary.rounds_run,
        summary.train_acc,
        summary.val_acc,
        exp.output_dir.display()
    );
    Ok(())
}

/// One verification oracle's verdict.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    /// Search-based checks can fail to produce evidence either way; after
    /// the built-in reruns this still counts as not passed.
    pub inconclusive: bool,
    pub detail: String,
}

impl CheckResult {
    fn pass(name: &str, detail: String) -> Self {
        CheckResult { name: name.into(), passed: true, inconclusive: false, detail }
    }
    fn fail(name: &str, detail: String) -> Self {
        CheckResult { name: name.into(), passed: false, inconclusive: false, detail }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VerifyReport {
    pub all_passed: bool,
    pub checks: Vec<CheckResult>,
}

fn check_minimizer_agreement(seed: u64) -> CheckResult {
    let name = "closed_vs_numeric_minimizer";
    let mut worst: f64 = 0.0;
    for (i, probs) in verify::random_simplexes(100, 3, 1e-4, seed).iter().enumerate() {
        let alpha = 0.05 + 1.95 * (i as f64 / 99.0);
        let rho = 0.01 * 1.5f64.powi((i % 10) as i32);
        let closed = match verify::fisher_closed_form(probs, alpha, rho) {
            Ok(v) => v,
            Err(e) => return CheckResult::fail(name, e.to_string()),
        };
        let numeric = match verify::fisher_numeric(probs, alpha, rho, 1e-10) {
            Ok(v) => v,
            Err(e) => return CheckResult::fail(name, e.to_string()),
        };
        for (c, n) in closed.iter().zip(&numeric) {
            worst = worst.max((c - n).abs());
        }
    }
    if worst <= 1e-8 {
        CheckResult::pass(name, format!("max deviation {worst:.3e} over 100 simplexes"))
    } else {
        CheckResult::fail(name, format!("max deviation {worst:.3e} exceeds 1e-8"))
    }
}

fn check_minimizer_round_trip(seed: u64) -> CheckResult {
    let name = "minimizer_round_trip";
    let mut worst: f64 = 0.0;
    for (i, probs) in verify::random_simplexes(50, 4, 1e-4, seed ^ 0xA5A5).iter().enumerate() {
        let alpha = 0.1 + 0.5 * (i as f64 / 49.0);
        let f = match verify::fisher_closed_form(probs, alpha, 0.2) {
            Ok(v) => v,
            Err(e) => return CheckResult::fail(name, e.to_string()),
        };
        let scaled: Vec<f64> = f.iter().map(|&v| ((1.0 + alpha) * v).exp()).collect();
        let total: f64 = scaled.iter().sum();
        for (p, s) in probs.iter().zip(&scaled) {
            worst = worst.max((p - s / total).abs());
        }
    }
    if worst <= 1e-9 {
        CheckResult::pass(name, format!("max probability gap {worst:.3e}"))
    } else {
        CheckResult::fail(name, format!("max probability gap {worst:.3e} exceeds 1e-9"))
    }
}

fn check_entropy_penalty_inconsistency() -> CheckResult {
    let name = "entropy_penalty_inconsistency";
    let skewed = [0.8, 0.2];
    for lambda in [0.1, 0.5, 1.0] {
        let m = match verify::conf_penalty_minimizer(&skewed, lambda) {
            Ok(v) => v,
            Err(e) => return CheckResult::fail(name, e.to_string()),
        };
        let gap = (m[0] - skewed[0]).abs();
        if gap <= 0.01 {
            return CheckResult::fail(
                name,
                format!("minimizer moved only {gap:.4} at lambda {lambda}"),
            );
        }
    }
    let uniform = [0.25; 4];
    match verify::conf_penalty_minimizer(&uniform, 0.7) {
        Ok(m) => {
            let dev =
                m.iter().map(|&q| (q - 0.25).abs()).fold(0.0f64, f64::max);
            if dev > 1e-8 {
                return CheckResult::fail(name, format!("uniform drifted by {dev:.3e}"));
            }
        }
        Err(e) => return CheckResult::fail(name, e.to_string()),
    }
    CheckResult::pass(name, "skewed targets shift > 0.01, uniform is a fixed point".into())
}

fn check_optimal_penalty_formula(seed: u64) -> CheckResult {
    let name = "optimal_penalty_formula";
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0x5EED);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let ex = 0.1 + 5.0 * rng.gen::<f64>();
        let se = 0.1 + 5.0 * rng.gen::<f64>();
        let alpha = 0.05 + 2.0 * rng.gen::<f64>();
        let gamma = 2.0 * rng.gen::<f64>();
        let grid = match verify::optimal_rho_grid(ex, se, alpha, gamma) {
            Ok(v) => v,
            Err(e) => return CheckResult::fail(name, e.to_string()),
        };
        let formula = alpha * ex / se;
        worst = worst.max((grid - formula).abs() / formula);
    }
    if worst <= 1e-6 {
        CheckResult::pass(name, format!("max relative gap {worst:.3e} over 50 draws"))
    } else {
        CheckResult::fail(name, format!("max relative gap {worst:.3e} exceeds 1e-6"))
    }
}

fn check_margin_bound_on_trained_run(seed: u64) -> Result<CheckResult> {
    let name = "margin_bound_after_training";
    let data = gen_blobs(160, 3, 2, 1.0, seed)?;
    let (train_data, val_data) = penex_core::data::split(&data, 0.8, seed)?;
    let model = ModelSpec {
        input_dim: 2,
        hidden_dims: vec![8],
        num_classes: 3,
        dropout_p: 0.0,
        conex_hard: false,
    };
    let mut cfg = TrainConfig::new(
        penex_core::losses::LossSpec {
            alpha: 0.4,
            ..Default::default()
        },
        model.clone(),
    );
    cfg.optim = penex_core::optim::OptimSpec::adam(0.05);
    cfg.epochs = 25;
    cfg.batch_size = 32;
    cfg.seed = seed;
    let report = train::<f64>(&cfg, &train_data, &val_data)?;
    let last = report.epochs.last().expect("epoch 0 recorded");
    let rho = last.rho.unwrap_or(1.0);
    let gamma_grid = [0.0, 0.25, 0.5, 1.0, 2.0];
    // Both sides of the bound are evaluated on the held-out split.
    let check = verify::check_margin_bound(
        &model,
        &report.final_params,
        &val_data,
        cfg.loss.alpha,
        rho,
        &gamma_grid,
    )?;
    if check.all_hold() {
        Ok(CheckResult::pass(
            name,
            format!(
                "bound holds at all {} thresholds (loss value {:.4}, rho {:.4})",
                gamma_grid.len(),
                check.penex_value,
                rho
            ),
        ))
    } else {
        let broken: Vec<String> = check
            .gamma_grid
            .iter()
            .zip(check.holds.iter())
            .filter(|(_, &h)| !h)
            .map(|(g, _)| format!("{g}"))
            .collect();
        Ok(CheckResult::fail(name, format!("bound broken at gamma {}", broken.join(", "))))
    }
}

fn check_direction_once(seed: u64) -> Result<Vec<verify::DirectionCheck>> {
    let data = gen_blobs(32, 2, 2, 1.0, 19)?;
    let model = ModelSpec {
        input_dim: 2,
        hidden_dims: vec![],
        num_classes: 2,
        dropout_p: 0.0,
        conex_hard: false,
    };
    let params = init_model::<f64>(&model, 3)?;
    Ok(verify::check_weak_learner_direction(
        &model,
        &params,
        &data,
        0.5,
        &[1e-1, 1e-2, 1e-3],
        seed,
        verify::DEFAULT_DIRECTION_SAMPLES,
    )?)
}

fn check_weak_learner_direction(seed: u64) -> Result<CheckResult> {
    let name = "weak_learner_direction";
    // The dense search is randomized; an inconclusive outcome earns up to
    // two reruns with fresh seeds before it counts against the suite.
    for attempt in 0..3u64 {
        let checks = check_direction_once(seed.wrapping_add(attempt * 1000))?;
        if checks.iter().any(|c| c.inconclusive) {
            continue;
        }
        let non_decreasing =
            checks.windows(2).all(|w| w[1].cosine >= w[0].cosine - 1e-6);
        let last = checks.last().expect("three step sizes");
        let detail = format!(
            "cosines {} at eta {}",
            checks.iter().map(|c| format!("{:.4}", c.cosine)).collect::<Vec<_>>().join(", "),
            checks.iter().map(|c| format!("{}", c.eta)).collect::<Vec<_>>().join(", ")
        );
        return Ok(if last.cosine >= 0.95 && non_decreasing {
            CheckResult::pass(name, detail)
        } else {
            CheckResult::fail(name, detail)
        });
    }
    Ok(CheckResult {
        name: name.into(),
        passed: false,
        inconclusive: true,
        detail: "no conclusive direction search in 3 attempts".into(),
    })
}

fn check_controller_tracks_constant() -> CheckResult {
    let name = "controller_tracks_constant";
    let mut state = match PenaltyState::<f64>::new(PenaltyConfig::default()) {
        Ok(s) => s,
        Err(e) => return CheckResult::fail(name, e.to_string()),
    };
    let target = 0.37;
    let mut last = f64::NAN;
    for _ in 0..300 {
        match state.update(target) {
            Ok(v) => last = v,
            Err(e) => return CheckResult::fail(name, e.to_string()),
        }
    }
    if (last - target).abs() <= 1e-10 {
        CheckResult::pass(name, format!("weight settled at {last} for constant estimates"))
    } else {
        CheckResult::fail(name, format!("weight {last} never reached {target}"))
    }
}

pub fn run_verification_suite(seed: u64) -> Result<Vec<CheckResult>> {
    Ok(vec![
        check_minimizer_agreement(seed),
        check_minimizer_round_trip(seed),
        check_entropy_penalty_inconsistency(),
        check_optimal_penalty_formula(seed),
        check_margin_bound_on_trained_run(seed)?,
        check_weak_learner_direction(seed)?,
        check_controller_tracks_constant(),
    ])
}

/// Runs every oracle, writes `verify.json`, prints one verdict line per
/// check, and reports whether everything passed.
pub fn cmd_verify(out_dir: &Path, seed: u64) -> Result<bool> {
    let checks = run_verification_suite(seed)?;
    let all_passed = checks.iter().all(|c| c.passed);
    for c in &checks {
        let verdict = if c.passed {
            "PASS"
        } else if c.inconclusive {
            "INCONCLUSIVE"
        } else {
            "FAIL"
        };
        println!("{verdict} {} - {}", c.name, c.detail);
    }
    let report = VerifyReport { all_passed, checks };
    reports::write_json(&out_dir.join("verify.json"), &report)
        .context("writing verify.json")?;
    println!(
        "verification {} -> {}",
        if all_passed { "passed" } else { "FAILED" },
        out_dir.join("verify.json").display()
    );
    Ok(all_passed)
}
