//! First-order optimizers (SGD and Adam) with gradient clipping, operating
//! on flat parameter vectors in a fixed layer order.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimKind {
    Sgd,
    Adam,
}

/// How [`OptimSpec::grad_clip_value`] is interpreted.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClipMode {
    /// Clamp each gradient component to ±value.
    Value,
    /// Rescale the whole gradient when its L2 norm exceeds the value.
    GlobalNorm,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimSpec {
    pub kind: OptimKind,
    pub learning_rate: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_adam_eps")]
    pub adam_eps: f64,
    /// None disables clipping.
    #[serde(default)]
    pub grad_clip_value: Option<f64>,
    #[serde(default = "default_clip_mode")]
    pub clip_mode: ClipMode,
}

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_adam_eps() -> f64 {
    1e-8
}
fn default_clip_mode() -> ClipMode {
    ClipMode::Value
}

impl OptimSpec {
    pub fn sgd(learning_rate: f64) -> Self {
        OptimSpec { kind: OptimKind::Sgd, learning_rate, ..Self::adam(learning_rate) }
    }

    pub fn adam(learning_rate: f64) -> Self {
        OptimSpec {
            kind: OptimKind::Adam,
            learning_rate,
            beta1: default_beta1(),
            beta2: default_beta2(),
            adam_eps: default_adam_eps(),
            grad_clip_value: None,
            clip_mode: default_clip_mode(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(CoreError::Parameter(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(CoreError::Parameter(format!(
                "Adam betas must lie in [0, 1), got {} and {}",
                self.beta1, self.beta2
            )));
        }
        if !(self.adam_eps > 0.0) {
            return Err(CoreError::Parameter("adam_eps must be positive".into()));
        }
        if let Some(c) = self.grad_clip_value {
            if !(c > 0.0) {
                return Err(CoreError::Parameter(format!(
                    "grad_clip_value must be positive, got {c}"
                )));
            }
        }
        Ok(())
    }
}

/// Optimizer state; moment buffers are lazily shaped on the first step.
#[derive(Clone, Debug)]
pub struct Optimizer<S> {
    pub spec: OptimSpec,
    m: Vec<Vec<S>>,
    v: Vec<Vec<S>>,
    step: u64,
}

impl<S: Scalar> Optimizer<S> {
    pub fn new(spec: OptimSpec) -> Result<Self> {
        spec.validate()?;
        Ok(Optimizer { spec, m: Vec::new(), v: Vec::new(), step: 0 })
    }

    /// Number of completed update steps.
    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Clips `grads` in place per the configured mode and returns the
    /// pre-clip global L2 norm.
    pub fn clip_gradients(&self, grads: &mut [Vec<S>]) -> f64 {
        let mut sq = 0.0f64;
        for g in grads.iter() {
            for &v in g {
                let v = v.to_f64_lossy();
                sq += v * v;
            }
        }
        let norm = sq.sqrt();
        if let Some(c) = self.spec.grad_clip_value {
            match self.spec.clip_mode {
                ClipMode::Value => {
                    let bound = S::from_f64_lossy(c);
                    for g in grads.iter_mut() {
                        for v in g.iter_mut() {
                            if *v > bound {
                                *v = bound;
                            } else if *v < -bound {
                                *v = -bound;
                            }
                        }
                    }
                }
                ClipMode::GlobalNorm => {
                    if norm > c {
                        let f = S::from_f64_lossy(c / norm);
                        for g in grads.iter_mut() {
                            for v in g.iter_mut() {
                                *v = *v * f;
                            }
                        }
                    }
                }
            }
        }
        norm
    }

    /// Applies one update. `params` and `grads` pair up elementwise in the
    /// fixed tensor order.
    pub fn apply(&mut self, params: &mut [&mut Vec<S>], grads: &[Vec<S>]) -> Result<()> {
        if params.len() != grads.len()
            || params.iter().zip(grads).any(|(p, g)| p.len() != g.len())
        {
            return Err(CoreError::Dimension(
                "parameter and gradient tensors do not pair up".into(),
            ));
        }
        match self.spec.kind {
            OptimKind::Sgd => {
                let lr = S::from_f64_lossy(self.spec.learning_rate);
                for (p, g) in params.iter_mut().zip(grads) {
                    for (pv, &gv) in p.iter_mut().zip(g) {
                        *pv = *pv - lr * gv;
                    }
                }
            }
            OptimKind::Adam => {
                if self.m.is_empty() {
                    self.m = grads.iter().map(|g| vec![S::zero(); g.len()]).collect();
                    self.v = self.m.clone();
                }
                let t = (self.step + 1) as i32;
                let lr = S::from_f64_lossy(self.spec.learning_rate);
                let b1 = S::from_f64_lossy(self.spec.beta1);
                let b2 = S::from_f64_lossy(self.spec.beta2);
                let eps = S::from_f64_lossy(self.spec.adam_eps);
                let bc1 = S::one() - b1.powi(t);
                let bc2 = S::one() - b2.powi(t);
                for ((p, g), (m, v)) in
                    params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut()))
                {
                    for i in 0..g.len() {
                        m[i] = b1 * m[i] + (S::one() - b1) * g[i];
                        v[i] = b2 * v[i] + (S::one() - b2) * g[i] * g[i];
                        let m_hat = m[i] / bc1;
                        let v_hat = v[i] / bc2;
                        p[i] = p[i] - lr * m_hat / (v_hat.sqrt() + eps);
                    }
                }
            }
        }
        self.step += 1;
        Ok(())
    }
}
