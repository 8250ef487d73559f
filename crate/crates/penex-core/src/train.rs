//! Training loop: shuffled mini-batches, per-step loss and gradient
//! computation, adaptive penalty updates, optimizer application, per-epoch
//! evaluation on both splits, and divergence handling.
//!
//! Runs are bit-reproducible given the config: model initialization draws
//! from the run seed, while batch order and dropout masks draw from a
//! derived stream so the two never interleave.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{CoreError, Result};
use crate::losses::{
    self, LossKind, LossSpec, al_dual_update, conex_aug_lagrangian_loss, conex_sq_penalty_loss,
    confidence_penalty_loss, cross_entropy, ex_loss, focal_loss, label_smoothing_loss,
    penex_loss, sum_exp_mean,
};
use crate::metrics::{Histogram, MetricsReport, metrics_report};
use crate::model::{ModelSpec, Parameters, batch_to_scalar, forward_graph, forward_slices, init_model};
use crate::optim::{OptimSpec, Optimizer};
use crate::penalty::{PenaltyConfig, PenaltyState, estimate_rho_batch};
use crate::scalar::Scalar;
use crate::tape::Tape;

/// Offset separating the batch-order stream from the init stream.
const SHUFFLE_STREAM_SALT: u64 = 0x9E37_79B9_7F4A_7C15;

/// Number of bins in the exported margin histograms.
pub const MARGIN_HISTOGRAM_BINS: usize = 50;

/// Full description of a training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub loss: LossSpec,
    pub model: ModelSpec,
    pub optim: OptimSpec,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    #[serde(default)]
    pub penalty: PenaltyConfig,
    /// Stop training (but keep the report) when a step goes non-finite;
    /// when false, later epochs still evaluate with frozen parameters.
    #[serde(default = "default_true")]
    pub halt_on_divergence: bool,
    /// Keep a parameter snapshot per epoch.
    #[serde(default)]
    pub record_checkpoints: bool,
}

fn default_true() -> bool {
    true
}

impl TrainConfig {
    /// Workbench defaults: Adam at 1e-4, batch 64, 200 epochs.
    pub fn new(loss: LossSpec, model: ModelSpec) -> Self {
        TrainConfig {
            loss,
            model,
            optim: OptimSpec::adam(1e-4),
            epochs: 200,
            batch_size: 64,
            seed: 0,
            penalty: PenaltyConfig::default(),
            halt_on_divergence: true,
            record_checkpoints: false,
        }
    }

    pub fn validate(&self, train_len: usize) -> Result<()> {
        self.loss.validate()?;
        self.model.validate()?;
        self.optim.validate()?;
        self.penalty.validate()?;
        if self.batch_size == 0 || self.batch_size > train_len {
            return Err(CoreError::Parameter(format!(
                "batch_size must lie in [1, {train_len}], got {}",
                self.batch_size
            )));
        }
        if self.loss.kind == LossKind::ConexHard && !self.model.conex_hard {
            return Err(CoreError::Parameter(
                "the hard-constraint loss requires a model with conex_hard enabled".into(),
            ));
        }
        Ok(())
    }
}

/// What one optimizer step produced.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    /// Batch loss value; NaN when the step went non-finite.
    pub loss: f64,
    /// Penalty weight used by this step, when the loss has one.
    pub rho: Option<f64>,
    /// Pre-clip global L2 gradient norm (0 when the step was aborted).
    pub grad_norm: f64,
    /// False when the loss or a gradient was non-finite and the update
    /// was skipped.
    pub finite: bool,
}

/// Per-step log line.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub step: u64,
    pub loss: f64,
    pub rho: Option<f64>,
    pub grad_norm: f64,
}

/// Per-epoch evaluation of both splits.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train: MetricsReport,
    pub val: MetricsReport,
    /// Controller (or fixed) penalty weight after this epoch's steps.
    pub rho: Option<f64>,
    /// Mean absolute raw logit on the training split.
    pub mean_abs_logit: f64,
    /// Mean finite batch loss over this epoch; absent for epoch 0.
    pub mean_train_loss: Option<f64>,
}

/// Everything a finished run reports.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport<S> {
    pub epochs: Vec<EpochRecord>,
    pub steps: Vec<StepLog>,
    pub diverged: bool,
    /// Epoch at which the first non-finite step occurred.
    pub truncation_epoch: Option<usize>,
    pub final_params: Parameters<S>,
    /// (epoch, snapshot) pairs when checkpoint recording is on.
    pub checkpoints: Vec<(usize, Parameters<S>)>,
    /// Final dual variable of the augmented-Lagrangian loss.
    pub final_al_lambda: Option<f64>,
    /// Margins on the training split at the final evaluation.
    pub train_margins: Vec<f64>,
    /// Margins on the validation split at the final evaluation.
    pub val_margins: Vec<f64>,
    pub wall_clock_secs: f64,
}

impl<S: Scalar> RunReport<S> {
    /// Margin histograms ready for export.
    pub fn margin_histograms(&self) -> Result<(Histogram, Histogram)> {
        Ok((
            Histogram::new(&self.train_margins, MARGIN_HISTOGRAM_BINS)?,
            Histogram::new(&self.val_margins, MARGIN_HISTOGRAM_BINS)?,
        ))
    }
}

/// Logit multiplier applied before the inference softmax. The penalized
/// exponential loss trains logits that live at 1/(1+α) of the scale its
/// probability estimates need; every other loss reads logits as they are.
pub fn inference_scale(loss: &LossSpec) -> f64 {
    if loss.kind == LossKind::Penex {
        1.0 + loss.alpha
    } else {
        1.0
    }
}

/// Metrics plus the raw-logit summary for one split.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalOutcome {
    pub report: MetricsReport,
    pub mean_abs_logit: f64,
    pub margins: Vec<f64>,
}

/// Evaluates a parameter snapshot on a dataset with dropout disabled,
/// using the loss-appropriate inference scaling.
pub fn evaluate_split<S: Scalar>(
    model: &ModelSpec,
    params: &Parameters<S>,
    loss: &LossSpec,
    data: &Dataset,
) -> Result<EvalOutcome> {
    if data.is_empty() {
        return Err(CoreError::Contract("cannot evaluate an empty split".into()));
    }
    let batch = batch_to_scalar::<S>(&data.features);
    let logits = forward_slices(model, params, &batch, data.len())?;
    let k = model.num_classes;
    let scale = S::from_f64_lossy(inference_scale(loss));
    let scaled: Vec<S> = logits.iter().map(|&v| v * scale).collect();
    let probs = losses::softmax_probs_scaled(&logits, k, scale);
    let margins: Vec<f64> = losses::margin(&scaled, k, &data.labels)?
        .into_iter()
        .map(|m| m.to_f64_lossy())
        .collect();
    let report = metrics_report(&probs, k, &data.labels, &margins)?;
    let mean_abs_logit = logits.iter().map(|v| v.to_f64_lossy().abs()).sum::<f64>()
        / logits.len() as f64;
    Ok(EvalOutcome { report, mean_abs_logit, margins })
}

/// Builds the loss graph for one batch. Adaptive penalty handling lives in
/// [`train_step`]; this covers every fixed-form loss.
fn fixed_loss_graph<S: Scalar>(
    spec: &LossSpec,
    logits: &crate::tape::Tensor<S>,
    labels: &[usize],
    al_lambda: f64,
) -> Result<crate::tape::Tensor<S>> {
    let alpha = S::from_f64_lossy(spec.alpha);
    match spec.kind {
        LossKind::Ex | LossKind::ConexHard => ex_loss(logits, labels, alpha),
        LossKind::Penex => {
            let rho = spec.rho.fixed_value().ok_or_else(|| {
                CoreError::Contract("adaptive penalty reached the fixed-loss path".into())
            })?;
            penex_loss(logits, labels, alpha, S::from_f64_lossy(rho))
        }
        LossKind::Ce => cross_entropy(logits, labels),
        LossKind::LabelSmoothing => {
            label_smoothing_loss(logits, labels, S::from_f64_lossy(spec.smooth_eps))
        }
        LossKind::ConfidencePenalty => {
            confidence_penalty_loss(logits, labels, S::from_f64_lossy(spec.conf_lambda))
        }
        LossKind::Focal => focal_loss(logits, labels, S::from_f64_lossy(spec.focal_gamma)),
        LossKind::ConexSqPenalty => {
            let rho = spec.rho.fixed_value().expect("validated fixed rho");
            conex_sq_penalty_loss(
                logits,
                labels,
                S::from_f64_lossy(rho),
                alpha,
                spec.sq_penalty_conventional,
            )
        }
        LossKind::ConexAugLagrangian => {
            let rho = spec.rho.fixed_value().expect("validated fixed rho");
            conex_aug_lagrangian_loss(
                logits,
                labels,
                S::from_f64_lossy(rho),
                alpha,
                S::from_f64_lossy(al_lambda),
                spec.sq_penalty_conventional,
            )
        }
    }
}

/// Runs one optimizer step on a batch: forward, penalty update when the
/// loss is adaptive, backward, clip, apply. A non-finite loss or gradient
/// aborts the step with parameters unchanged.
#[allow(clippy::too_many_arguments)]
pub fn train_step<S: Scalar>(
    model: &ModelSpec,
    loss_spec: &LossSpec,
    params: &mut Parameters<S>,
    optimizer: &mut Optimizer<S>,
    mut penalty: Option<&mut PenaltyState<S>>,
    al_lambda: f64,
    features: &[f64],
    labels: &[usize],
    dropout_rng: Option<&mut ChaCha8Rng>,
) -> Result<StepOutcome> {
    if labels.is_empty() {
        return Err(CoreError::Contract("empty training batch".into()));
    }
    let n = labels.len();
    let tape = Tape::new();
    let batch = batch_to_scalar::<S>(features);
    let (logits, leaves) = forward_graph(model, params, &tape, &batch, n, dropout_rng)?;

    let adaptive = loss_spec.kind == LossKind::Penex && loss_spec.rho.is_adaptive();
    let (loss, rho_used) = if adaptive {
        let state = penalty
            .as_deref_mut()
            .ok_or_else(|| CoreError::Contract("adaptive penalty needs a controller".into()))?;
        let alpha = S::from_f64_lossy(loss_spec.alpha);
        let ex = ex_loss(&logits, labels, alpha)?;
        let se = sum_exp_mean(&logits)?;
        let (ex_v, se_v) = (ex.value()?, se.value()?);
        if !ex_v.is_finite() || !se_v.is_finite() {
            return Ok(StepOutcome { loss: f64::NAN, rho: None, grad_norm: 0.0, finite: false });
        }
        let eps = S::from_f64_lossy(state.config().eps_guard);
        let rho_t = state.update(estimate_rho_batch(ex_v, se_v, alpha, eps)?)?;
        (ex.add(&se.scale(rho_t))?, Some(rho_t.to_f64_lossy()))
    } else {
        let rho = loss_spec.rho.fixed_value().filter(|_| loss_spec.kind.uses_rho());
        (fixed_loss_graph(loss_spec, &logits, labels, al_lambda)?, rho)
    };

    let loss_v = loss.value()?.to_f64_lossy();
    if !loss_v.is_finite() {
        return Ok(StepOutcome { loss: loss_v, rho: rho_used, grad_norm: 0.0, finite: false });
    }
    loss.backward()?;
    let mut grads: Vec<Vec<S>> = Vec::with_capacity(leaves.len());
    for leaf in &leaves {
        let g = leaf
            .grad()
            .ok_or_else(|| CoreError::Contract("parameter leaf missing its gradient".into()))?;
        if g.iter().any(|v| !v.is_finite()) {
            return Ok(StepOutcome {
                loss: loss_v,
                rho: rho_used,
                grad_norm: f64::NAN,
                finite: false,
            });
        }
        grads.push(g);
    }
    let grad_norm = optimizer.clip_gradients(&mut grads);
    optimizer.apply(&mut params.tensors_mut(), &grads)?;
    Ok(StepOutcome { loss: loss_v, rho: rho_used, grad_norm, finite: true })
}

/// Mean squared row-sum of the logits over a whole dataset, for the dual
/// update of the augmented-Lagrangian loss.
fn dataset_constraint_mean_sq<S: Scalar>(
    model: &ModelSpec,
    params: &Parameters<S>,
    data: &Dataset,
) -> Result<f64> {
    let batch = batch_to_scalar::<S>(&data.features);
    let logits = forward_slices(model, params, &batch, data.len())?;
    let k = model.num_classes;
    let mut total = 0.0;
    for row in logits.chunks_exact(k) {
        let h: f64 = row.iter().map(|v| v.to_f64_lossy()).sum();
        total += h * h;
    }
    Ok(total / data.len() as f64)
}

/// Trains a model from scratch and reports every epoch, every step, and
/// the final parameters. Bit-reproducible for a fixed config.
pub fn train<S: Scalar>(
    config: &TrainConfig,
    train_data: &Dataset,
    val_data: &Dataset,
) -> Result<RunReport<S>> {
    config.validate(train_data.len())?;
    if train_data.num_features != config.model.input_dim
        || train_data.num_classes > config.model.num_classes
    {
        return Err(CoreError::Dimension(format!(
            "dataset is {}-feature {}-class but the model expects {} features and {} classes",
            train_data.num_features,
            train_data.num_classes,
            config.model.input_dim,
            config.model.num_classes
        )));
    }
    let started = std::time::Instant::now();
    let mut params = init_model::<S>(&config.model, config.seed)?;
    let mut optimizer = Optimizer::new(config.optim)?;
    let mut penalty: Option<PenaltyState<S>> =
        if config.loss.kind == LossKind::Penex && config.loss.rho.is_adaptive() {
            Some(PenaltyState::new(config.penalty)?)
        } else {
            None
        };
    let mut run_rng = ChaCha8Rng::seed_from_u64(config.seed ^ SHUFFLE_STREAM_SALT);
    let uses_al = config.loss.kind == LossKind::ConexAugLagrangian;
    let mut al_lambda = 0.0f64;

    let mut epochs = Vec::with_capacity(config.epochs + 1);
    let mut steps: Vec<StepLog> = Vec::new();
    let mut checkpoints = Vec::new();
    let mut diverged = false;
    let mut truncation_epoch = None;
    let mut last_train_eval;
    let mut last_val_eval;

    let record_epoch = |epoch: usize,
                        params: &Parameters<S>,
                        rho: Option<f64>,
                        mean_train_loss: Option<f64>|
     -> Result<(EvalOutcome, EvalOutcome, EpochRecord)> {
        let train_eval = evaluate_split(&config.model, params, &config.loss, train_data)?;
        let val_eval = evaluate_split(&config.model, params, &config.loss, val_data)?;
        let record = EpochRecord {
            epoch,
            train: train_eval.report,
            val: val_eval.report,
            rho,
            mean_abs_logit: train_eval.mean_abs_logit,
            mean_train_loss,
        };
        Ok((train_eval, val_eval, record))
    };

    let fixed_rho = config.loss.rho.fixed_value().filter(|_| config.loss.kind.uses_rho());
    let (t, v, record) = record_epoch(0, &params, fixed_rho, None)?;
    last_train_eval = t;
    last_val_eval = v;
    epochs.push(record);
    if config.record_checkpoints {
        checkpoints.push((0, params.clone()));
    }

    let n = train_data.len();
    for epoch in 1..=config.epochs {
        let mut loss_sum = 0.0;
        let mut loss_count = 0usize;
        if !diverged {
            let mut indices: Vec<usize> = (0..n).collect();
            for i in 0..n.saturating_sub(1) {
                let j = i + run_rng.gen_range(0..n - i);
                indices.swap(i, j);
            }
            for chunk in indices.chunks(config.batch_size) {
                let mut features = Vec::with_capacity(chunk.len() * train_data.num_features);
                let mut labels = Vec::with_capacity(chunk.len());
                for &i in chunk {
                    features.extend_from_slice(train_data.row(i));
                    labels.push(train_data.labels[i]);
                }
                let dropout_rng =
                    (config.model.dropout_p > 0.0).then_some(&mut run_rng);
                let outcome = train_step(
                    &config.model,
                    &config.loss,
                    &mut params,
                    &mut optimizer,
                    penalty.as_mut(),
                    al_lambda,
                    &features,
                    &labels,
                    dropout_rng,
                )?;
                steps.push(StepLog {
                    step: steps.len() as u64 + 1,
                    loss: outcome.loss,
                    rho: outcome.rho,
                    grad_norm: outcome.grad_norm,
                });
                if outcome.finite {
                    loss_sum += outcome.loss;
                    loss_count += 1;
                } else {
                    diverged = true;
                    truncation_epoch = Some(epoch);
                    break;
                }
            }
            if uses_al && !diverged {
                let mean_h_sq = dataset_constraint_mean_sq(&config.model, &params, train_data)?;
                let rho = config.loss.rho.fixed_value().expect("validated fixed rho");
                al_lambda = al_dual_update(al_lambda, rho, config.loss.nu, mean_h_sq)?;
            }
        }
        let rho_now = match (&penalty, fixed_rho) {
            (Some(state), _) => state.rho().map(|r| r.to_f64_lossy()),
            (None, fixed) => fixed,
        };
        let mean_loss = (loss_count > 0).then(|| loss_sum / loss_count as f64);
        let (t, v, record) = record_epoch(epoch, &params, rho_now, mean_loss)?;
        last_train_eval = t;
        last_val_eval = v;
        epochs.push(record);
        if config.record_checkpoints {
            checkpoints.push((epoch, params.clone()));
        }
        if diverged && config.halt_on_divergence {
            break;
        }
    }

    Ok(RunReport {
        epochs,
        steps,
        diverged,
        truncation_epoch,
        final_params: params,
        checkpoints,
        final_al_lambda: uses_al.then_some(al_lambda),
        train_margins: last_train_eval.margins,
        val_margins: last_val_eval.margins,
        wall_clock_secs: started.elapsed().as_secs_f64(),
    })
}
