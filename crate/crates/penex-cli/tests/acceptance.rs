//! Acceptance gate: one test per shipping criterion. Every test prints a
//! single verdict line and asserts it, so the suite doubles as a checklist.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use penex_core::boost::{samme_eta, samme_round, samme_train, RoundOutcome};
use penex_core::data::{gen_blobs, gen_categorical_single_x, split, Dataset};
use penex_core::losses::{
    conex_aug_lagrangian_loss, conex_sq_penalty_loss, confidence_penalty_loss, cross_entropy,
    ex_loss, focal_loss, label_smoothing_loss, penex_loss, softmax_probs_scaled, LossKind,
    LossSpec, RhoMode,
};
use penex_core::metrics::{accuracy, brier, ece, eval_ce};
use penex_core::model::{forward_graph, forward_slices, init_model, ModelSpec, Parameters};
use penex_core::penalty::{PenaltyConfig, PenaltyState};
use penex_core::tape::{Tape, Tensor};
use penex_core::train::{evaluate_split, train, TrainConfig};
use penex_core::verify::{
    check_margin_bound, check_weak_learner_direction, conf_penalty_minimizer, fd_gradient,
    fisher_closed_form, fisher_numeric, optimal_rho_grid, random_simplexes,
    DEFAULT_DIRECTION_SAMPLES,
};

fn report(num: u32, name: &str, passed: bool, detail: &str) {
    let verdict = if passed { "PASS" } else { "FAIL" };
    println!("criterion {num:02} {verdict} {name} - {detail}");
    assert!(passed, "criterion {num:02} {name}: {detail}");
}

// --- criterion 1: analytic gradients match central finite differences ----

#[derive(Clone, Copy)]
enum Loss {
    Ex,
    Penex,
    Ce,
    Smoothing,
    ConfPenalty,
    Focal,
    SqPenalty,
    SqPenaltyConventional,
    AugLagrangian,
    HardConstraint,
}

const ALL_LOSSES: [Loss; 10] = [
    Loss::Ex,
    Loss::Penex,
    Loss::Ce,
    Loss::Smoothing,
    Loss::ConfPenalty,
    Loss::Focal,
    Loss::SqPenalty,
    Loss::SqPenaltyConventional,
    Loss::AugLagrangian,
    Loss::HardConstraint,
];

fn loss_graph(loss: Loss, logits: &Tensor<f64>, labels: &[usize]) -> Tensor<f64> {
    match loss {
        Loss::Ex | Loss::HardConstraint => ex_loss(logits, labels, 0.4).unwrap(),
        Loss::Penex => penex_loss(logits, labels, 0.4, 0.07).unwrap(),
        Loss::Ce => cross_entropy(logits, labels).unwrap(),
        Loss::Smoothing => label_smoothing_loss(logits, labels, 0.1).unwrap(),
        Loss::ConfPenalty => confidence_penalty_loss(logits, labels, 0.3).unwrap(),
        Loss::Focal => focal_loss(logits, labels, 2.0).unwrap(),
        Loss::SqPenalty => conex_sq_penalty_loss(logits, labels, 0.5, 0.5, false).unwrap(),
        Loss::SqPenaltyConventional => {
            conex_sq_penalty_loss(logits, labels, 0.5, 0.5, true).unwrap()
        }
        Loss::AugLagrangian => {
            conex_aug_lagrangian_loss(logits, labels, 0.5, 0.5, 0.2, false).unwrap()
        }
    }
}

fn grad_model(loss: Loss) -> ModelSpec {
    ModelSpec {
        input_dim: 2,
        hidden_dims: vec![4],
        num_classes: 3,
        dropout_p: 0.0,
        conex_hard: matches!(loss, Loss::HardConstraint),
    }
}

fn loss_value_at(
    loss: Loss,
    spec: &ModelSpec,
    params: &Parameters<f64>,
    batch: &[f64],
    labels: &[usize],
    n: usize,
) -> f64 {
    let tape = Tape::new();
    let (logits, _) = forward_graph(spec, params, &tape, batch, n, None).unwrap();
    loss_graph(loss, &logits, labels).value().unwrap()
}

#[test]
fn criterion_01_gradients_match_finite_differences() {
    let started = Instant::now();
    let n = 5;
    let mut rng = ChaCha8Rng::seed_from_u64(4321);
    let batch: Vec<f64> = (0..n * 2).map(|_| 2.0 * rng.gen::<f64>() - 1.0).collect();
    let labels = vec![0, 1, 2, 1, 0];

    let mut worst: f64 = 0.0;
    for loss in ALL_LOSSES {
        let spec = grad_model(loss);
        for point in 0..100 {
            let mut params = init_model::<f64>(&spec, point as u64).unwrap();
            for layer in &mut params.layers {
                for v in layer.weight.iter_mut().chain(layer.bias.iter_mut()) {
                    *v += rng.gen::<f64>() - 0.5;
                }
            }

            let tape = Tape::new();
            let (logits, leaves) =
                forward_graph(&spec, &params, &tape, &batch, n, None).unwrap();
            loss_graph(loss, &logits, &labels).backward().unwrap();
            let analytic: Vec<f64> = leaves.iter().flat_map(|l| l.grad().unwrap()).collect();
            let numeric = fd_gradient(&params, 1e-6, |p| {
                Ok(loss_value_at(loss, &spec, p, &batch, &labels, n))
            })
            .unwrap();

            for (a, f) in analytic.iter().zip(&numeric) {
                worst = worst.max((a - f).abs() / a.abs().max(f.abs()).max(1e-4));
            }
        }
    }
    let elapsed = started.elapsed().as_secs_f64();
    report(
        1,
        "gradients_match_finite_differences",
        worst < 1e-4 && elapsed < 30.0,
        &format!("worst relative error {worst:.3e} across 10 losses x 100 points in {elapsed:.1}s"),
    );
}

// --- criterion 2: the minimizer recovers the class distribution ----------

#[test]
fn criterion_02_fisher_consistency() {
    let started = Instant::now();

    let mut worst: f64 = 0.0;
    for (i, probs) in random_simplexes(100, 3, 1e-4, 2).iter().enumerate() {
        let alpha = 0.05 + 1.95 * (i as f64 / 99.0);
        let rho = 0.01 * 1.5f64.powi((i % 10) as i32);
        let closed = fisher_closed_form(probs, alpha, rho).unwrap();
        let numeric = fisher_numeric(probs, alpha, rho, 1e-10).unwrap();
        for (c, n) in closed.iter().zip(&numeric) {
            worst = worst.max((c - n).abs());
        }
    }

    let data = gen_categorical_single_x(&[0.8, 0.2], 50_000, 11).unwrap();
    let model = ModelSpec {
        input_dim: 1,
        hidden_dims: vec![],
        num_classes: 2,
        dropout_p: 0.0,
        conex_hard: false,
    };
    let loss = LossSpec {
        kind: LossKind::Penex,
        alpha: 0.1,
        rho: RhoMode::adaptive(),
        ..Default::default()
    };
    let mut cfg = TrainConfig::new(loss.clone(), model.clone());
    cfg.optim = penex_core::optim::OptimSpec::adam(0.05);
    cfg.epochs = 15;
    cfg.batch_size = 1024;
    cfg.seed = 11;
    let run = train::<f64>(&cfg, &data, &data).unwrap();
    let logits = forward_slices(&model, &run.final_params, &[1.0], 1).unwrap();
    let probs = softmax_probs_scaled(&logits, 2, 1.0 + loss.alpha);
    let gap = (probs[0] - 0.8).abs().max((probs[1] - 0.2).abs());

    let elapsed = started.elapsed().as_secs_f64();
    report(
        2,
        "fisher_consistency",
        worst <= 1e-8 && gap <= 0.02 && elapsed < 120.0,
        &format!(
            "closed vs numeric gap {worst:.3e}; recovered probs ({:.4}, {:.4}) in {elapsed:.1}s",
            probs[0], probs[1]
        ),
    );
}

// --- criterion 3: the entropy-penalized minimizer misses skewed targets --

#[test]
fn criterion_03_confidence_penalty_inconsistency() {
    let target = [0.8, 0.2];
    let mut min_shift = f64::INFINITY;
    for lambda in [0.1, 0.5, 1.0] {
        let m = conf_penalty_minimizer(&target, lambda).unwrap();
        let shift =
            m.iter().zip(&target).map(|(a, b)| (a - b).abs()).fold(0.0f64, f64::max);
        min_shift = min_shift.min(shift);
    }

    let mut max_uniform_gap: f64 = 0.0;
    for k in [2usize, 4] {
        let uniform = vec![1.0 / k as f64; k];
        let m = conf_penalty_minimizer(&uniform, 0.7).unwrap();
        for (a, b) in m.iter().zip(&uniform) {
            max_uniform_gap = max_uniform_gap.max((a - b).abs());
        }
    }

    report(
        3,
        "confidence_penalty_inconsistency",
        min_shift > 0.01 && max_uniform_gap <= 1e-8,
        &format!(
            "skewed minimizer shift >= {min_shift:.4}; uniform fixed-point gap {max_uniform_gap:.3e}"
        ),
    );
}

// --- criterion 4: the margin bound holds on every checkpoint -------------

#[test]
fn criterion_04_margin_bound_on_every_checkpoint() {
    let data = gen_blobs(400, 3, 2, 0.9, 21).unwrap();
    let (train_data, val_data) = split(&data, 0.8, 21).unwrap();
    let model = ModelSpec {
        input_dim: 2,
        hidden_dims: vec![16],
        num_classes: 3,
        dropout_p: 0.0,
        conex_hard: false,
    };
    let loss = LossSpec {
        kind: LossKind::Penex,
        alpha: 0.1,
        rho: RhoMode::adaptive(),
        ..Default::default()
    };
    let mut cfg = TrainConfig::new(loss, model.clone());
    cfg.optim = penex_core::optim::OptimSpec::adam(0.05);
    cfg.epochs = 200;
    cfg.batch_size = 64;
    cfg.seed = 21;
    cfg.record_checkpoints = true;
    let run = train::<f64>(&cfg, &train_data, &val_data).unwrap();
    assert_eq!(run.checkpoints.len(), 201, "one snapshot per epoch");

    let gamma_grid = [0.0, 0.5, 1.0, 2.0];
    let mut checked = 0usize;
    let mut broken = Vec::new();
    for (epoch, params) in &run.checkpoints {
        let rho = run
            .epochs
            .iter()
            .find(|e| e.epoch == *epoch)
            .and_then(|e| e.rho)
            .unwrap_or(1.0);
        let check =
            check_margin_bound(&model, params, &train_data, cfg.loss.alpha, rho, &gamma_grid)
                .unwrap();
        checked += 1;
        if !check.all_hold() {
            broken.push(*epoch);
        }
    }

    report(
        4,
        "margin_bound_on_every_checkpoint",
        broken.is_empty(),
        &format!(
            "bound held at {checked} checkpoints x {} thresholds{}",
            gamma_grid.len(),
            if broken.is_empty() {
                String::new()
            } else {
                format!("; broken at epochs {broken:?}")
            }
        ),
    );
}

// --- criterion 5: grid search recovers the closed-form penalty weight ----

#[test]
fn criterion_05_optimal_rho_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5EED);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let ex = 0.05 + 3.0 * rng.gen::<f64>();
        let se = 0.05 + 3.0 * rng.gen::<f64>();
        let alpha = 0.05 + 2.0 * rng.gen::<f64>();
        let gamma = 2.0 * rng.gen::<f64>();
        let grid = optimal_rho_grid(ex, se, alpha, gamma).unwrap();
        let formula = alpha * ex / se;
        worst = worst.max((grid - formula).abs() / formula);
    }
    report(
        5,
        "optimal_rho_formula",
        worst <= 1e-6,
        &format!("worst relative gap {worst:.3e} over 50 draws"),
    );
}

// --- criterion 6: controller stays in range and tracks constants ---------

#[test]
fn criterion_06_controller_range_and_decay() {
    // Range on a real adaptive run.
    let data = gen_blobs(128, 3, 2, 0.9, 6).unwrap();
    let (train_data, val_data) = split(&data, 0.8, 6).unwrap();
    let model = ModelSpec {
        input_dim: 2,
        hidden_dims: vec![8],
        num_classes: 3,
        dropout_p: 0.0,
        conex_hard: false,
    };
    let loss = LossSpec {
        kind: LossKind::Penex,
        alpha: 0.1,
        rho: RhoMode::adaptive(),
        ..Default::default()
    };
    let mut cfg = TrainConfig::new(loss, model);
    cfg.optim = penex_core::optim::OptimSpec::adam(0.05);
    cfg.epochs = 40;
    cfg.batch_size = 32;
    cfg.seed = 6;
    let run = train::<f64>(&cfg, &train_data, &val_data).unwrap();
    let rhos: Vec<f64> = run.steps.iter().filter_map(|s| s.rho).collect();
    let in_range = !rhos.is_empty() && rhos.iter().all(|&r| (1e-6..=100.0).contains(&r));

    // Geometric decay toward an injected constant.
    let config = PenaltyConfig::default();
    let beta = config.beta;
    let mut state = PenaltyState::<f64>::new(config).unwrap();
    for _ in 0..50 {
        state.update(5.0).unwrap();
    }
    let target = 0.37;
    let mut gap = (state.rho().unwrap() - target).abs();
    let mut rate_ok = true;
    let mut settled_at = None;
    for step in 1..=300 {
        let rho = state.update(target).unwrap();
        let next_gap = (rho - target).abs();
        // Each update scales the gap by (1 - beta), up to the rounding
        // floor of the blend arithmetic.
        if (next_gap - (1.0 - beta) * gap).abs() > 1e-12 * gap + 1e-15 {
            rate_ok = false;
        }
        gap = next_gap;
        if gap <= 1e-10 && settled_at.is_none() {
            settled_at = Some(step);
        }
    }

    report(
        6,
        "controller_range_and_decay",
        in_range && rate_ok && settled_at.is_some(),
        &format!(
            "{} step weights in [1e-6, 100]; gap decayed at rate (1 - beta), below 1e-10 at step {:?}",
            rhos.len(),
            settled_at
        ),
    );
}

// --- criterion 7: trained models place the boundary farther from data ----

/// First-order distance to the decision boundary per row: the logit gap to
/// the runner-up class over the input-gradient norm of that gap, by central
/// differences. Invariant to logit rescaling; clamped so the rare flat
/// gradient cannot dominate a mean.
fn geometric_margins(model: &ModelSpec, params: &Parameters<f64>, data: &Dataset) -> Vec<f64> {
    let k = model.num_classes;
    let h = 1e-4;
    let mut out = Vec::with_capacity(data.len());
    for i in 0..data.len() {
        let x = data.row(i);
        let y = data.labels[i];
        let logits = forward_slices(model, params, x, 1).unwrap();
        let rival = (0..k)
            .filter(|&j| j != y)
            .max_by(|&a, &b| logits[a].total_cmp(&logits[b]))
            .unwrap();
        let gap = logits[y] - logits[rival];
        let mut grad_sq = 0.0;
        for d in 0..x.len() {
            let mut plus = x.to_vec();
            plus[d] += h;
            let mut minus = x.to_vec();
            minus[d] -= h;
            let lp = forward_slices(model, params, &plus, 1).unwrap();
            let lm = forward_slices(model, params, &minus, 1).unwrap();
            let g = ((lp[y] - lp[rival]) - (lm[y] - lm[rival])) / (2.0 * h);
            grad_sq += g * g;
        }
        out.push((gap / grad_sq.sqrt().max(1e-12)).clamp(-10.0, 10.0));
    }
    out
}

#[test]
fn criterion_07_margins_beat_cross_entropy() {
    let started = Instant::now();
    // Two clusters 4 apart: at this spread the nearest-center classifier
    // errs on about 5% of draws.
    let spread = 1.2159;
    let model = ModelSpec {
        input_dim: 2,
        hidden_dims: vec![16],
        num_classes: 2,
        dropout_p: 0.0,
        conex_hard: false,
    };

    let mut penex_sum = 0.0;
    let mut ce_sum = 0.0;
    for seed in 100..105u64 {
        let data = gen_blobs(200, 2, 2, spread, seed).unwrap();
        let (train_data, val_data) = split(&data, 0.5, seed).unwrap();
        let mean_margin = |loss: LossSpec| -> f64 {
            let mut cfg = TrainConfig::new(loss, model.clone());
            cfg.optim = penex_core::optim::OptimSpec::sgd(0.1);
            cfg.epochs = 2000;
            cfg.batch_size = 32;
            cfg.seed = seed;
            let run = train::<f64>(&cfg, &train_data, &val_data).unwrap();
            let margins = geometric_margins(&model, &run.final_params, &val_data);
            margins.iter().sum::<f64>() / margins.len() as f64
        };
        penex_sum += mean_margin(LossSpec {
            kind: LossKind::Penex,
            alpha: 0.1,
            rho: RhoMode::adaptive(),
            ..Default::default()
        });
        ce_sum += mean_margin(LossSpec { kind: LossKind::Ce, ..Default::default() });
    }
    let penex_mean = penex_sum / 5.0;
    let ce_mean = ce_sum / 5.0;

    let elapsed = started.elapsed().as_secs_f64();
    report(
        7,
        "margins_beat_cross_entropy",
        penex_mean > ce_mean && elapsed < 120.0,
        &format!(
            "seed-averaged mean test margin {penex_mean:.4} vs {ce_mean:.4} for cross-entropy in {elapsed:.1}s"
        ),
    );
}

// --- criterion 8: the unpenalized loss blows up, the penalized one does not

#[test]
fn criterion_08_raw_exponential_breaks_down() {
    let data = gen_blobs(400, 3, 2, 0.9, 21).unwrap();
    let (train_data, val_data) = split(&data, 0.8, 21).unwrap();
    let model = ModelSpec {
        input_dim: 2,
        hidden_dims: vec![16],
        num_classes: 3,
        dropout_p: 0.0,
        conex_hard: false,
    };
    let run_with = |loss: LossSpec| {
        let mut cfg = TrainConfig::new(loss.clone(), model.clone());
        cfg.optim = penex_core::optim::OptimSpec::adam(0.1);
        cfg.epochs = 200;
        cfg.batch_size = 64;
        cfg.seed = 21;
        cfg.halt_on_divergence = false;
        let run = train::<f64>(&cfg, &train_data, &val_data).unwrap();
        let eval = evaluate_split::<f64>(&model, &run.final_params, &loss, &val_data).unwrap();
        (run, eval)
    };

    let (ex_run, ex_eval) = run_with(LossSpec {
        kind: LossKind::Ex,
        alpha: 0.1,
        rho: RhoMode::Fixed(0.5),
        ..Default::default()
    });
    let ex_broke = ex_run.diverged || ex_eval.mean_abs_logit > 50.0;

    let (penex_run, penex_eval) = run_with(LossSpec {
        kind: LossKind::Penex,
        alpha: 0.1,
        rho: RhoMode::adaptive(),
        ..Default::default()
    });
    let penex_ok = !penex_run.diverged
        && penex_eval.mean_abs_logit.is_finite()
        && penex_eval.report.acc >= 0.9;

    report(
        8,
        "raw_exponential_breaks_down",
        ex_broke && penex_ok,
        &format!(
            "raw mean |logit| {:.1} (diverged {}); penalized mean |logit| {:.1} with val acc {:.4}",
            ex_eval.mean_abs_logit, ex_run.diverged, penex_eval.mean_abs_logit,
            penex_eval.report.acc
        ),
    );
}

// --- criterion 9: boosting fixture, monotone ensemble, simplex weights ---

#[test]
fn criterion_09_samme_rounds() {
    let eta = samme_eta(0.3, 10);
    let eta_ok = (eta - 3.044522).abs() <= 1e-6;

    let data = gen_blobs(200, 3, 2, 0.9, 33).unwrap();
    let trained = samme_train(&data, 50, 0).unwrap();
    let first_acc = trained.rounds.first().map(|r| r.train_acc).unwrap_or(0.0);
    let last_acc = trained.rounds.last().map(|r| r.train_acc).unwrap_or(0.0);

    // Re-run the same schedule step by step to inspect each weight vector.
    let n = data.len();
    let mut weights = vec![1.0 / n as f64; n];
    let mut simplex_ok = true;
    let mut accepted = 0;
    for _ in 0..50 {
        match samme_round(&data, &weights).unwrap() {
            RoundOutcome::Accepted(round) => {
                let sum: f64 = round.weights.iter().sum();
                if (sum - 1.0).abs() > 1e-12 || round.weights.iter().any(|&w| w < 0.0) {
                    simplex_ok = false;
                }
                weights = round.weights;
                accepted += 1;
            }
            RoundOutcome::Rejected { .. } => break,
        }
    }

    report(
        9,
        "samme_rounds",
        eta_ok && last_acc >= first_acc && simplex_ok && accepted == trained.rounds.len(),
        &format!(
            "eta(0.3, 10) = {eta:.6}; ensemble acc {first_acc:.4} -> {last_acc:.4} over {accepted} rounds; weights on the simplex to 1e-12"
        ),
    );
}

// --- criterion 10: metrics agree with naive re-implementations -----------

fn naive_metrics(probs: &[f64], k: usize, labels: &[usize]) -> (f64, f64, f64, f64) {
    let n = labels.len();
    let mut correct = 0usize;
    let mut brier_total = 0.0;
    let mut ce_total = 0.0;
    let bins = 15;
    let mut bin_count = vec![0usize; bins];
    let mut bin_conf = vec![0.0f64; bins];
    let mut bin_correct = vec![0usize; bins];
    for (row, &y) in probs.chunks_exact(k).zip(labels) {
        let mut pred = 0;
        for j in 1..k {
            if row[j] > row[pred] {
                pred = j;
            }
        }
        if pred == y {
            correct += 1;
        }
        for (j, &p) in row.iter().enumerate() {
            let t = if j == y { 1.0 } else { 0.0 };
            brier_total += (p - t) * (p - t);
        }
        ce_total += -row[y].ln();
        let conf = row[pred];
        let bin = ((conf * bins as f64).ceil() as usize).clamp(1, bins) - 1;
        bin_count[bin] += 1;
        bin_conf[bin] += conf;
        if pred == y {
            bin_correct[bin] += 1;
        }
    }
    let mut ece_total = 0.0;
    for m in 0..bins {
        if bin_count[m] == 0 {
            continue;
        }
        let acc = bin_correct[m] as f64 / bin_count[m] as f64;
        let conf = bin_conf[m] / bin_count[m] as f64;
        ece_total += (bin_count[m] as f64 / n as f64) * (acc - conf).abs();
    }
    (correct as f64 / n as f64, ece_total, ce_total / n as f64, brier_total / n as f64)
}

#[test]
fn criterion_10_metrics_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let k = 2 + (rng.gen::<u64>() % 4) as usize;
        let n = 1 + (rng.gen::<u64>() % 20) as usize;
        let mut probs = Vec::with_capacity(n * k);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let raw: Vec<f64> = (0..k).map(|_| 0.05 + rng.gen::<f64>()).collect();
            let total: f64 = raw.iter().sum();
            probs.extend(raw.iter().map(|v| v / total));
            labels.push((rng.gen::<u64>() % k as u64) as usize);
        }
        let (acc_n, ece_n, ce_n, brier_n) = naive_metrics(&probs, k, &labels);
        worst = worst.max((accuracy(&probs, k, &labels).unwrap() - acc_n).abs());
        worst = worst.max((ece(&probs, k, &labels, 15).unwrap() - ece_n).abs());
        worst = worst.max((eval_ce(&probs, k, &labels).unwrap().value - ce_n).abs());
        worst = worst.max((brier(&probs, k, &labels).unwrap() - brier_n).abs());
    }

    // Two rows at confidence 0.9, one correct: |0.5 - 0.9| = 0.4 exactly.
    let fixture = ece(&[0.9, 0.1, 0.9, 0.1], 2, &[0, 1], 15).unwrap();

    report(
        10,
        "metrics_match_brute_force",
        worst <= 1e-12 && fixture == 0.4,
        &format!("worst deviation {worst:.3e} over 1000 cases; two-sample fixture = {fixture}"),
    );
}

// --- criterion 11: the constrained search tracks the loss gradient -------

#[test]
fn criterion_11_weak_learner_direction() {
    let data = gen_blobs(32, 2, 2, 1.0, 19).unwrap();
    let model = ModelSpec {
        input_dim: 2,
        hidden_dims: vec![],
        num_classes: 2,
        dropout_p: 0.0,
        conex_hard: false,
    };
    let params = init_model::<f64>(&model, 3).unwrap();
    let etas = [1e-1, 1e-2, 1e-3];

    // Inconclusive searches rerun with a fresh seed at most twice.
    let mut outcome = None;
    for attempt in 0..3u64 {
        let checks = check_weak_learner_direction(
            &model,
            &params,
            &data,
            0.5,
            &etas,
            7 + 1000 * attempt,
            DEFAULT_DIRECTION_SAMPLES,
        )
        .unwrap();
        if checks.iter().any(|c| c.inconclusive) {
            continue;
        }
        outcome = Some(checks);
        break;
    }

    let (passed, detail) = match outcome {
        Some(checks) => {
            let cosines: Vec<f64> = checks.iter().map(|c| c.cosine).collect();
            let non_decreasing = cosines.windows(2).all(|w| w[1] >= w[0] - 1e-6);
            let floor = *cosines.last().unwrap() >= 0.95;
            (
                non_decreasing && floor,
                format!(
                    "cosines {:.4}, {:.4}, {:.4} at eta 0.1, 0.01, 0.001",
                    cosines[0], cosines[1], cosines[2]
                ),
            )
        }
        None => (false, "search stayed inconclusive after three seeds".into()),
    };
    report(11, "weak_learner_direction", passed, &detail);
}

// --- criterion 12: training twice writes identical metrics ---------------

#[test]
fn criterion_12_train_is_deterministic() {
    let tmp = tempfile::TempDir::new().unwrap();
    let config_path = tmp.path().join("run.toml");
    std::fs::write(
        &config_path,
        r#"
name = "determinism"
seed = 5

[dataset]
kind = "blobs"
n = 96
classes = 3
features = 2
spread = 0.9

[model]
hidden_dims = [8]

[train]
epochs = 5
batch_size = 32
"#,
    )
    .unwrap();

    let run = |out: &std::path::Path| {
        let status = std::process::Command::new(env!("CARGO_BIN_EXE_penex"))
            .args(["train", "--config"])
            .arg(&config_path)
            .arg("--out")
            .arg(out)
            .env_remove("PENEX_OUT")
            .env_remove("PENEX_SEED")
            .status()
            .unwrap();
        assert!(status.success());
    };
    let out_a = tmp.path().join("a");
    let out_b = tmp.path().join("b");
    run(&out_a);
    run(&out_b);

    let bytes_a = std::fs::read(out_a.join("metrics.csv")).unwrap();
    let bytes_b = std::fs::read(out_b.join("metrics.csv")).unwrap();
    report(
        12,
        "train_is_deterministic",
        bytes_a == bytes_b,
        &format!("metrics.csv identical across runs ({} bytes)", bytes_a.len()),
    );
}
