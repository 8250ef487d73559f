//! Adaptive penalty-weight controller.
//!
//! Each optimizer step produces a per-batch estimate of the penalty weight
//! that balances the two halves of the penalized exponential loss:
//! `ρ′ = α·mean(EX) / (mean(SumExp) + ε)`. The controller smooths successive
//! estimates with an exponential moving average and clips the result into
//! `[rho_min, rho_max]`. The very first update seeds the average with the
//! estimate itself, so the first smoothed value equals the first estimate
//! (after clipping). The smoothed ρ is a detached statistic: gradients never
//! flow through it.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::scalar::Scalar;

/// Fixed controller parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PenaltyConfig {
    /// EMA factor in (0, 1]; the new estimate gets weight `beta`.
    pub beta: f64,
    /// Lower clip bound, positive.
    pub rho_min: f64,
    /// Upper clip bound, strictly above `rho_min`.
    pub rho_max: f64,
    /// Additive guard on the SumExp denominator of the batch estimate.
    pub eps_guard: f64,
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        PenaltyConfig { beta: 0.1, rho_min: 1e-6, rho_max: 100.0, eps_guard: 1e-12 }
    }
}

impl PenaltyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.beta && self.beta <= 1.0) {
            return Err(CoreError::Parameter(format!(
                "beta must lie in (0, 1], got {}",
                self.beta
            )));
        }
        if !(0.0 < self.rho_min && self.rho_min < self.rho_max) {
            return Err(CoreError::Parameter(format!(
                "clip bounds must satisfy 0 < rho_min < rho_max, got [{}, {}]",
                self.rho_min, self.rho_max
            )));
        }
        if self.eps_guard <= 0.0 {
            return Err(CoreError::Parameter(format!(
                "eps_guard must be positive, got {}",
                self.eps_guard
            )));
        }
        Ok(())
    }
}

/// Running state of the controller.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PenaltyState<S: Scalar> {
    config: PenaltyConfig,
    rho: Option<S>,
    step: u64,
}

impl<S: Scalar> PenaltyState<S> {
    pub fn new(config: PenaltyConfig) -> Result<Self> {
        config.validate()?;
        Ok(PenaltyState { config, rho: None, step: 0 })
    }

    pub fn config(&self) -> PenaltyConfig {
        self.config
    }

    /// Current smoothed ρ; undefined before the first update.
    pub fn rho(&self) -> Option<S> {
        self.rho
    }

    /// Updates completed so far.
    pub fn step(&self) -> u64 {
        self.step
    }

    /// Folds a fresh batch estimate into the smoothed value and clips it.
    /// Returns the ρ to use for the step that follows.
    pub fn update(&mut self, rho_prime: S) -> Result<S> {
        if rho_prime < S::zero() || !rho_prime.is_finite() {
            return Err(CoreError::Contract(format!(
                "batch estimate must be finite and nonnegative, got {rho_prime}"
            )));
        }
        let beta = S::from_f64_lossy(self.config.beta);
        let prev = self.rho.unwrap_or(rho_prime);
        let blended = (S::one() - beta) * prev + beta * rho_prime;
        let clipped = blended
            .max(S::from_f64_lossy(self.config.rho_min))
            .min(S::from_f64_lossy(self.config.rho_max));
        self.rho = Some(clipped);
        self.step += 1;
        Ok(clipped)
    }
}

/// Per-batch optimal-penalty estimate `α·ex_mean / (se_mean + eps_guard)`.
pub fn estimate_rho_batch<S: Scalar>(
    ex_batch_mean: S,
    se_batch_mean: S,
    alpha: S,
    eps_guard: S,
) -> Result<S> {
    if alpha <= S::zero() {
        return Err(CoreError::Parameter(format!(
            "alpha must be positive, got {alpha}"
        )));
    }
    if ex_batch_mean < S::zero() || se_batch_mean < S::zero() {
        return Err(CoreError::Contract(format!(
            "batch means cannot be negative, got ex={ex_batch_mean}, se={se_batch_mean}"
        )));
    }
    Ok(alpha * ex_batch_mean / (se_batch_mean + eps_guard))
}
