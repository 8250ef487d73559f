//! Feed-forward classifier definitions: linear models and ReLU MLPs with
//! optional dropout and an optional zero-sum output head.
//!
//! Parameters live outside the autodiff tape and are bound as leaf tensors
//! for each forward pass, so a fresh graph is built per step. A slice-based
//! forward (no tape) mirrors the graph arithmetic operation for operation
//! and is used wherever gradients are not needed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::scalar::Scalar;
use crate::tape::{Tape, Tensor};

/// Architecture of a feed-forward classifier.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub input_dim: usize,
    /// Hidden layer widths; empty means a linear model.
    #[serde(default)]
    pub hidden_dims: Vec<usize>,
    pub num_classes: usize,
    /// Probability of dropping each hidden activation during training.
    #[serde(default)]
    pub dropout_p: f64,
    /// Emit `K−1` free logits and derive the last as their negative sum,
    /// so every output row sums to zero.
    #[serde(default)]
    pub conex_hard: bool,
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(CoreError::Parameter("input_dim must be positive".into()));
        }
        if self.num_classes < 2 {
            return Err(CoreError::Parameter(format!(
                "need at least two classes, got {}",
                self.num_classes
            )));
        }
        if self.hidden_dims.iter().any(|&h| h == 0) {
            return Err(CoreError::Parameter("hidden layer widths must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(CoreError::Parameter(format!(
                "dropout_p must lie in [0, 1), got {}",
                self.dropout_p
            )));
        }
        Ok(())
    }

    /// Width of the final weight layer's output.
    fn head_width(&self) -> usize {
        if self.conex_hard {
            self.num_classes - 1
        } else {
            self.num_classes
        }
    }

    /// Layer input/output widths from features to head.
    fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut widths = vec![self.input_dim];
        widths.extend_from_slice(&self.hidden_dims);
        widths.push(self.head_width());
        widths.windows(2).map(|w| (w[0], w[1])).collect()
    }

    /// Total number of scalar parameters.
    pub fn param_count(&self) -> usize {
        self.layer_dims().iter().map(|&(i, o)| i * o + o).sum()
    }
}

/// One dense layer, weight stored row-major as in×out.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer<S> {
    pub weight: Vec<S>,
    pub bias: Vec<S>,
    pub in_dim: usize,
    pub out_dim: usize,
}

/// All trainable parameters of a model, in layer order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Parameters<S> {
    pub layers: Vec<Layer<S>>,
}

impl<S: Scalar> Parameters<S> {
    /// Flat views in the fixed order weight₀, bias₀, weight₁, bias₁, …
    /// matching the leaf order bound by the graph forward.
    pub fn tensors_mut(&mut self) -> Vec<&mut Vec<S>> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }

    pub fn count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    /// True when every parameter is a finite number.
    pub fn all_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.iter().chain(&l.bias).all(|v| v.is_finite()))
    }
}

/// Draws weights from a fan-in-scaled uniform distribution `±1/√fan_in` and
/// zeros the biases. Draws are made in f64 so every scalar type sees the
/// same underlying values.
pub fn init_model<S: Scalar>(spec: &ModelSpec, seed: u64) -> Result<Parameters<S>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layers = Vec::new();
    for (in_dim, out_dim) in spec.layer_dims() {
        let bound = 1.0 / (in_dim as f64).sqrt();
        let weight = (0..in_dim * out_dim)
            .map(|_| S::from_f64_lossy((2.0 * rng.gen::<f64>() - 1.0) * bound))
            .collect();
        layers.push(Layer { weight, bias: vec![S::zero(); out_dim], in_dim, out_dim });
    }
    Ok(Parameters { layers })
}

/// The constant head matrix mapping `K−1` free logits to `K` zero-sum
/// logits: identity on the free logits, negative sum in the last column.
fn zero_sum_head<S: Scalar>(num_classes: usize) -> Vec<S> {
    let k = num_classes;
    let mut m = vec![S::zero(); (k - 1) * k];
    for j in 0..k - 1 {
        m[j * k + j] = S::one();
        m[j * k + (k - 1)] = -S::one();
    }
    m
}

/// Inverted-dropout mask entries: 0 with probability p, else 1/(1−p).
fn dropout_mask<S: Scalar>(len: usize, p: f64, rng: &mut ChaCha8Rng) -> Vec<S> {
    let keep = S::from_f64_lossy(1.0 / (1.0 - p));
    (0..len)
        .map(|_| if rng.gen::<f64>() < p { S::zero() } else { keep })
        .collect()
}

/// Builds the forward graph for a batch, binding parameters as leaves.
///
/// Returns the n×K logits and the parameter leaves in the order
/// weight₀, bias₀, weight₁, bias₁, … so gradients can be read back after
/// `backward`. Dropout is applied only when a mask rng is supplied.
pub fn forward_graph<S: Scalar>(
    spec: &ModelSpec,
    params: &Parameters<S>,
    tape: &Tape<S>,
    batch: &[S],
    n: usize,
    mut dropout_rng: Option<&mut ChaCha8Rng>,
) -> Result<(Tensor<S>, Vec<Tensor<S>>)> {
    if batch.len() != n * spec.input_dim {
        return Err(CoreError::Dimension(format!(
            "batch has {} values, expected {}x{}",
            batch.len(),
            n,
            spec.input_dim
        )));
    }
    let mut x = tape.constant(batch.to_vec(), n, spec.input_dim)?;
    let mut leaves = Vec::with_capacity(params.layers.len() * 2);
    let last = params.layers.len() - 1;
    for (idx, layer) in params.layers.iter().enumerate() {
        let w = tape.param(layer.weight.clone(), layer.in_dim, layer.out_dim)?;
        let b = tape.param(layer.bias.clone(), 1, layer.out_dim)?;
        x = x.matmul(&w)?.add_row_bias(&b)?;
        leaves.push(w);
        leaves.push(b);
        if idx < last {
            x = x.relu();
            if spec.dropout_p > 0.0 {
                if let Some(rng) = dropout_rng.as_deref_mut() {
                    let mask = dropout_mask::<S>(n * layer.out_dim, spec.dropout_p, rng);
                    let mask = tape.constant(mask, n, layer.out_dim)?;
                    x = x.mul(&mask)?;
                }
            }
        }
    }
    if spec.conex_hard {
        let head = tape.constant(
            zero_sum_head::<S>(spec.num_classes),
            spec.num_classes - 1,
            spec.num_classes,
        )?;
        x = x.matmul(&head)?;
    }
    Ok((x, leaves))
}

/// Tape-free forward pass for evaluation. Replays the graph arithmetic in
/// the same order (matmul accumulates over the inner index innermost), so
/// the logits are bit-identical to [`forward_graph`] without dropout.
pub fn forward_slices<S: Scalar>(
    spec: &ModelSpec,
    params: &Parameters<S>,
    batch: &[S],
    n: usize,
) -> Result<Vec<S>> {
    if batch.len() != n * spec.input_dim {
        return Err(CoreError::Dimension(format!(
            "batch has {} values, expected {}x{}",
            batch.len(),
            n,
            spec.input_dim
        )));
    }
    let mut x = batch.to_vec();
    let mut width = spec.input_dim;
    let last = params.layers.len() - 1;
    for (idx, layer) in params.layers.iter().enumerate() {
        let mut out = vec![S::zero(); n * layer.out_dim];
        for i in 0..n {
            for p in 0..width {
                let xip = x[i * width + p];
                for j in 0..layer.out_dim {
                    out[i * layer.out_dim + j] =
                        out[i * layer.out_dim + j] + xip * layer.weight[p * layer.out_dim + j];
                }
            }
        }
        for (pos, v) in out.iter_mut().enumerate() {
            *v = *v + layer.bias[pos % layer.out_dim];
        }
        if idx < last {
            for v in out.iter_mut() {
                if *v < S::zero() {
                    *v = S::zero();
                }
            }
        }
        width = layer.out_dim;
        x = out;
    }
    if spec.conex_hard {
        let k = spec.num_classes;
        let head = zero_sum_head::<S>(k);
        let mut out = vec![S::zero(); n * k];
        for i in 0..n {
            for p in 0..width {
                let xip = x[i * width + p];
                for j in 0..k {
                    out[i * k + j] = out[i * k + j] + xip * head[p * k + j];
                }
            }
        }
        x = out;
    }
    Ok(x)
}

/// Converts an f64 feature block to the training scalar type.
pub fn batch_to_scalar<S: Scalar>(features: &[f64]) -> Vec<S> {
    features.iter().map(|&v| S::from_f64_lossy(v)).collect()
}
