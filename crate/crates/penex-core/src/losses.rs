//! Differentiable loss functions over logits plus margin and inference
//! transforms.
//!
//! The family centers on the exponential loss `EX(f; α) = mean exp(−α·f_y)`
//! and its penalized form `PENEX = EX + ρ·mean SumExp` where
//! `SumExp(x) = Σⱼ exp(f_j(x))`. Baselines (cross-entropy, label smoothing,
//! confidence penalty, focal) and two constrained-EX ablation objectives
//! (quadratic penalty and augmented Lagrangian on the zero-sum constraint
//! `h(x) = Σⱼ f_j(x) = 0`) share the same tensor interface.
//!
//! SumExp is computed as `exp(log_sum_exp)` per row. For extreme logits the
//! result overflows to `+inf`; callers treat non-finite loss values as a
//! divergence signal and record it rather than crash, which the unpenalized
//! EX ablation is expected to trigger.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::scalar::Scalar;
use crate::tape::Tensor;

/// Loss selector stored in configs and reports.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// Unpenalized exponential loss.
    Ex,
    /// Exponential loss plus ρ·mean SumExp.
    Penex,
    /// Softmax cross-entropy.
    Ce,
    /// Cross-entropy against a smoothed target distribution.
    LabelSmoothing,
    /// Cross-entropy minus λ times the mean softmax entropy.
    ConfidencePenalty,
    /// Focal loss (1−p_y)^γ·(−ln p_y).
    Focal,
    /// Exponential loss plus a quadratic penalty on the zero-sum constraint.
    ConexSqPenalty,
    /// Quadratic penalty plus a dual variable updated between epochs.
    ConexAugLagrangian,
    /// Exponential loss on a model that emits zero-sum logits structurally.
    ConexHard,
}

impl LossKind {
    /// Kinds whose evaluation consults α.
    pub fn uses_alpha(self) -> bool {
        matches!(
            self,
            LossKind::Ex
                | LossKind::Penex
                | LossKind::ConexSqPenalty
                | LossKind::ConexAugLagrangian
                | LossKind::ConexHard
        )
    }

    /// Kinds whose evaluation consults ρ.
    pub fn uses_rho(self) -> bool {
        matches!(
            self,
            LossKind::Penex | LossKind::ConexSqPenalty | LossKind::ConexAugLagrangian
        )
    }
}

impl std::fmt::Display for LossKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            LossKind::Ex => "ex",
            LossKind::Penex => "penex",
            LossKind::Ce => "ce",
            LossKind::LabelSmoothing => "label_smoothing",
            LossKind::ConfidencePenalty => "confidence_penalty",
            LossKind::Focal => "focal",
            LossKind::ConexSqPenalty => "conex_sq_penalty",
            LossKind::ConexAugLagrangian => "conex_aug_lagrangian",
            LossKind::ConexHard => "conex_hard",
        };
        f.write_str(name)
    }
}

/// Penalty weight: a fixed value or the adaptive controller.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RhoMode {
    /// The string "adaptive": ρ comes from the penalty controller each step.
    Adaptive(AdaptiveTag),
    /// A fixed positive value.
    Fixed(f64),
}

/// Marker for the literal string "adaptive" in configs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdaptiveTag {
    Adaptive,
}

impl RhoMode {
    pub fn adaptive() -> Self {
        RhoMode::Adaptive(AdaptiveTag::Adaptive)
    }

    pub fn is_adaptive(&self) -> bool {
        matches!(self, RhoMode::Adaptive(_))
    }

    pub fn fixed_value(&self) -> Option<f64> {
        match self {
            RhoMode::Fixed(v) => Some(*v),
            RhoMode::Adaptive(_) => None,
        }
    }
}

/// Fully resolved loss configuration. Only the fields relevant to `kind` are
/// consulted; the rest are ignored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    pub kind: LossKind,
    /// Sensitivity of the exponential loss; must be positive where used.
    pub alpha: f64,
    /// Penalty weight for PENEX and the constrained ablations.
    pub rho: RhoMode,
    /// Label-smoothing mixture weight in [0, 1].
    pub smooth_eps: f64,
    /// Confidence-penalty entropy weight, nonnegative.
    pub conf_lambda: f64,
    /// Focal-loss exponent, nonnegative.
    pub focal_gamma: f64,
    /// Inverse scaling of the augmented-Lagrangian dual step.
    pub nu: f64,
    /// Replace the squared mean-of-squares penalty `(ρ/2)·(mean h²)²` with
    /// the conventional `(ρ/2)·mean h²`. Defaults to false.
    pub sq_penalty_conventional: bool,
}

impl Default for LossSpec {
    fn default() -> Self {
        LossSpec {
            kind: LossKind::Penex,
            alpha: 0.1,
            rho: RhoMode::adaptive(),
            smooth_eps: 0.1,
            conf_lambda: 0.1,
            focal_gamma: 2.0,
            nu: 10.0,
            sq_penalty_conventional: false,
        }
    }
}

impl LossSpec {
    /// Validates the fields consulted by `kind`.
    pub fn validate(&self) -> Result<()> {
        if self.kind.uses_alpha() && self.alpha <= 0.0 {
            return Err(CoreError::Parameter(format!(
                "alpha must be positive for {}, got {}",
                self.kind, self.alpha
            )));
        }
        if self.kind.uses_rho() {
            match self.rho.fixed_value() {
                Some(v) if v <= 0.0 => {
                    return Err(CoreError::Parameter(format!(
                        "rho must be positive for {}, got {v}",
                        self.kind
                    )));
                }
                None if self.kind != LossKind::Penex => {
                    return Err(CoreError::Parameter(format!(
                        "adaptive rho is only defined for penex, not {}",
                        self.kind
                    )));
                }
                _ => {}
            }
        }
        if self.kind == LossKind::LabelSmoothing && !(0.0..=1.0).contains(&self.smooth_eps) {
            return Err(CoreError::Parameter(format!(
                "smooth_eps must lie in [0, 1], got {}",
                self.smooth_eps
            )));
        }
        if self.kind == LossKind::ConfidencePenalty && self.conf_lambda < 0.0 {
            return Err(CoreError::Parameter(format!(
                "conf_lambda must be nonnegative, got {}",
                self.conf_lambda
            )));
        }
        if self.kind == LossKind::Focal && self.focal_gamma < 0.0 {
            return Err(CoreError::Parameter(format!(
                "focal_gamma must be nonnegative, got {}",
                self.focal_gamma
            )));
        }
        if self.kind == LossKind::ConexAugLagrangian && self.nu <= 0.0 {
            return Err(CoreError::Parameter(format!(
                "nu must be positive, got {}",
                self.nu
            )));
        }
        Ok(())
    }
}

fn check_alpha<S: Scalar>(alpha: S) -> Result<()> {
    if alpha <= S::zero() {
        return Err(CoreError::Parameter(format!(
            "alpha must be positive, got {alpha}"
        )));
    }
    Ok(())
}

fn check_rho<S: Scalar>(rho: S) -> Result<()> {
    if rho <= S::zero() {
        return Err(CoreError::Parameter(format!("rho must be positive, got {rho}")));
    }
    Ok(())
}

/// Exponential loss: `mean exp(−α·logits[i, yᵢ])`.
pub fn ex_loss<S: Scalar>(logits: &Tensor<S>, labels: &[usize], alpha: S) -> Result<Tensor<S>> {
    check_alpha(alpha)?;
    let picked = logits.gather_labels(labels)?;
    Ok(picked.scale(-alpha).exp().mean())
}

/// Mean per-sample SumExp: `mean Σⱼ exp(logits[i,j])`, computed per row as
/// `exp(log_sum_exp)` so the inner sum cannot overflow prematurely.
pub fn sum_exp_mean<S: Scalar>(logits: &Tensor<S>) -> Result<Tensor<S>> {
    if logits.shape().rows == 0 {
        return Err(CoreError::Dimension("sum_exp_mean needs at least one row".into()));
    }
    Ok(logits.log_sum_exp()?.exp().mean())
}

/// Penalized exponential loss: `ex_loss + ρ·sum_exp_mean`.
pub fn penex_loss<S: Scalar>(
    logits: &Tensor<S>,
    labels: &[usize],
    alpha: S,
    rho: S,
) -> Result<Tensor<S>> {
    check_alpha(alpha)?;
    check_rho(rho)?;
    let ex = ex_loss(logits, labels, alpha)?;
    let se = sum_exp_mean(logits)?;
    ex.add(&se.scale(rho))
}

/// Softmax cross-entropy: `mean(log_sum_exp(row) − logits[i, yᵢ])`.
pub fn cross_entropy<S: Scalar>(logits: &Tensor<S>, labels: &[usize]) -> Result<Tensor<S>> {
    let lse = logits.log_sum_exp()?;
    let picked = logits.gather_labels(labels)?;
    Ok(lse.sub(&picked)?.mean())
}

/// Cross-entropy against the mixture target `(1−ε)·onehot + ε/K`, with the
/// uniform share spread over all K classes including the true one.
pub fn label_smoothing_loss<S: Scalar>(
    logits: &Tensor<S>,
    labels: &[usize],
    eps: S,
) -> Result<Tensor<S>> {
    if eps < S::zero() || eps > S::one() {
        return Err(CoreError::Parameter(format!(
            "smoothing eps must lie in [0, 1], got {eps}"
        )));
    }
    let shape = logits.shape();
    let n = S::from_f64_lossy(shape.rows as f64);
    let k = S::from_f64_lossy(shape.cols as f64);
    let lse_mean = logits.log_sum_exp()?.mean();
    let picked_mean = logits.gather_labels(labels)?.mean();
    // mean_i [lse_i − (1−ε)·f_{i,y} − (ε/K)·Σ_j f_{i,j}]
    let true_term = picked_mean.scale(-(S::one() - eps));
    let uniform_term = logits.sum().scale(-eps / (k * n));
    lse_mean.add(&true_term)?.add(&uniform_term)
}

/// Cross-entropy minus λ times the mean Shannon entropy of the softmax rows.
pub fn confidence_penalty_loss<S: Scalar>(
    logits: &Tensor<S>,
    labels: &[usize],
    lambda: S,
) -> Result<Tensor<S>> {
    if lambda < S::zero() {
        return Err(CoreError::Parameter(format!(
            "penalty weight must be nonnegative, got {lambda}"
        )));
    }
    let ce = cross_entropy(logits, labels)?;
    let n = S::from_f64_lossy(logits.shape().rows as f64);
    let lse = logits.log_sum_exp()?;
    let log_probs = logits.sub_col(&lse)?;
    let probs = log_probs.exp();
    // mean entropy = −(1/n)·Σ_{i,j} p·ln p; subtracting λ·entropy adds λ/n·Σ p·ln p.
    let plogp_sum = probs.mul(&log_probs)?.sum();
    ce.add(&plogp_sum.scale(lambda / n))
}

/// Focal loss: `mean (1−p_y)^γ·(−ln p_y)` with p the softmax probability of
/// the true class. Unweighted multi-class form.
pub fn focal_loss<S: Scalar>(logits: &Tensor<S>, labels: &[usize], gamma: S) -> Result<Tensor<S>> {
    if gamma < S::zero() {
        return Err(CoreError::Parameter(format!(
            "focal exponent must be nonnegative, got {gamma}"
        )));
    }
    let p_true = logits.softmax()?.gather_labels(labels)?;
    let damp = p_true.affine(-S::one(), S::one()).powf(gamma);
    let nll = p_true.log().scale(-S::one());
    Ok(damp.mul(&nll)?.mean())
}

/// Per-sample constraint value `h(x) = Σⱼ logits[i,j]` as an n×1 tensor.
fn row_sums<S: Scalar>(logits: &Tensor<S>) -> Result<Tensor<S>> {
    // Realized as logits · 1_K so gradients flow through a single matmul.
    let k = logits.shape().cols;
    let tape = logits.tape_handle();
    let ones = tape.constant(vec![S::one(); k], k, 1)?;
    logits.matmul(&ones)
}

/// Quadratic-penalty objective on the zero-sum constraint:
/// `ex_loss(α) + (ρ/2)·(mean h²)²` in its literal form, or
/// `ex_loss(α) + (ρ/2)·mean h²` when `conventional` is set.
pub fn conex_sq_penalty_loss<S: Scalar>(
    logits: &Tensor<S>,
    labels: &[usize],
    rho: S,
    alpha: S,
    conventional: bool,
) -> Result<Tensor<S>> {
    check_rho(rho)?;
    let ex = ex_loss(logits, labels, alpha)?;
    let mean_h_sq = constraint_mean_sq(logits)?;
    let half_rho = rho / S::from_f64_lossy(2.0);
    let penalty = if conventional {
        mean_h_sq.scale(half_rho)
    } else {
        mean_h_sq.mul(&mean_h_sq)?.scale(half_rho)
    };
    ex.add(&penalty)
}

/// Mean squared constraint value `mean h²` as a differentiable scalar.
pub fn constraint_mean_sq<S: Scalar>(logits: &Tensor<S>) -> Result<Tensor<S>> {
    let h = row_sums(logits)?;
    Ok(h.mul(&h)?.mean())
}

/// Augmented-Lagrangian objective: the quadratic-penalty objective plus
/// `λ·mean h²` with a dual variable held fixed during the primal step.
pub fn conex_aug_lagrangian_loss<S: Scalar>(
    logits: &Tensor<S>,
    labels: &[usize],
    rho: S,
    alpha: S,
    lambda: S,
    conventional: bool,
) -> Result<Tensor<S>> {
    let base = conex_sq_penalty_loss(logits, labels, rho, alpha, conventional)?;
    let mean_h_sq = constraint_mean_sq(logits)?;
    base.add(&mean_h_sq.scale(lambda))
}

/// Dual ascent step for the augmented Lagrangian:
/// `λ ← λ + (ρ/ν)·mean h²`.
pub fn al_dual_update(lambda_prev: f64, rho: f64, nu: f64, mean_h_sq: f64) -> Result<f64> {
    if rho <= 0.0 || nu <= 0.0 {
        return Err(CoreError::Parameter(format!(
            "rho and nu must be positive, got rho={rho}, nu={nu}"
        )));
    }
    if mean_h_sq < 0.0 {
        return Err(CoreError::Parameter(format!(
            "mean squared constraint cannot be negative, got {mean_h_sq}"
        )));
    }
    Ok(lambda_prev + (rho / nu) * mean_h_sq)
}

/// Classification margin per sample: true-class logit minus the largest
/// other-class logit. Not differentiable; used for diagnostics and reports.
pub fn margin<S: Scalar>(logits: &[S], num_classes: usize, labels: &[usize]) -> Result<Vec<S>> {
    if num_classes < 2 {
        return Err(CoreError::Contract(
            "margin is undefined for fewer than two classes".into(),
        ));
    }
    let n = labels.len();
    if logits.len() != n * num_classes {
        return Err(CoreError::Dimension(format!(
            "expected {} logit entries, got {}",
            n * num_classes,
            logits.len()
        )));
    }
    let mut out = Vec::with_capacity(n);
    for (i, &y) in labels.iter().enumerate() {
        if y >= num_classes {
            return Err(CoreError::Index(format!(
                "label {y} at position {i} is out of range for {num_classes} classes"
            )));
        }
        let row = &logits[i * num_classes..(i + 1) * num_classes];
        let mut best_other = S::neg_infinity();
        for (j, &v) in row.iter().enumerate() {
            if j != y && v > best_other {
                best_other = v;
            }
        }
        out.push(row[y] - best_other);
    }
    Ok(out)
}

/// Inference rescaling for models trained with the penalized exponential
/// loss: row-wise softmax of `(1+α)·logits`. Rows sum to 1.
pub fn penex_inference_probs<S: Scalar>(logits: &Tensor<S>, alpha: S) -> Result<Tensor<S>> {
    check_alpha(alpha)?;
    logits.scale(S::one() + alpha).softmax()
}

/// Slice variant of [`penex_inference_probs`] for evaluation paths that do
/// not need gradients. `scale` is 1 for plain softmax, 1+α for rescaling.
pub fn softmax_probs_scaled<S: Scalar>(logits: &[S], num_classes: usize, scale: S) -> Vec<S> {
    let k = num_classes;
    let mut out = vec![S::zero(); logits.len()];
    for (row_idx, row) in logits.chunks_exact(k).enumerate() {
        let mut m = S::neg_infinity();
        for &v in row {
            m = m.max(scale * v);
        }
        let mut z = S::zero();
        for (j, &v) in row.iter().enumerate() {
            let e = (scale * v - m).exp();
            out[row_idx * k + j] = e;
            z = z + e;
        }
        for j in 0..k {
            out[row_idx * k + j] = out[row_idx * k + j] / z;
        }
    }
    out
}
