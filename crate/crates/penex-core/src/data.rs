//! Synthetic dataset generators, label-noise injection, CSV ingestion,
//! and deterministic splits.
//!
//! Every generator is a pure function of its arguments including the seed;
//! regeneration with the same seed is bit-identical. Features are stored
//! row-major as `f64` regardless of the scalar type used for training.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// Radius of the circle on which blob centers are placed.
pub const BLOB_CIRCLE_RADIUS: f64 = 2.0;

/// Blob spread for which two diametrically opposed clusters overlap at
/// roughly 5% Bayes error: the midpoint sits `Φ⁻¹(0.95) ≈ 1.6449` standard
/// deviations from each center, so σ = 2/1.6449.
pub const BLOB_SPREAD_BAYES_5PCT: f64 = 1.2159136638235384;

/// How a dataset came to be.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Blobs,
    Rings,
    CategoricalSingleX,
    Csv,
}

/// A labeled dataset with row-major features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    /// Flat n×d feature matrix.
    pub features: Vec<f64>,
    /// Class labels, each in `[0, num_classes)`.
    pub labels: Vec<usize>,
    pub num_features: usize,
    pub num_classes: usize,
    pub provenance: Provenance,
    /// Seed the dataset was generated from (0 for loaded files).
    pub seed: u64,
}

impl Dataset {
    /// Validates shapes and label ranges before construction.
    pub fn new(
        features: Vec<f64>,
        labels: Vec<usize>,
        num_features: usize,
        num_classes: usize,
        provenance: Provenance,
        seed: u64,
    ) -> Result<Self> {
        if num_features == 0 || num_classes == 0 {
            return Err(CoreError::Parameter(
                "dataset needs at least one feature and one class".into(),
            ));
        }
        if features.len() != labels.len() * num_features {
            return Err(CoreError::Dimension(format!(
                "{} feature values do not form {}x{num_features}",
                features.len(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(CoreError::Index(format!(
                "label {bad} out of range for {num_classes} classes"
            )));
        }
        Ok(Dataset { features, labels, num_features, num_classes, provenance, seed })
    }

    /// Number of samples.
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Feature row of sample `i`.
    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.num_features..(i + 1) * self.num_features]
    }

    /// New dataset holding the given rows in the given order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut features = Vec::with_capacity(indices.len() * self.num_features);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Dataset { features, labels, ..self.clone() }
    }

    /// Z-scores each feature column in place using the population standard
    /// deviation. Constant columns are centered only.
    pub fn standardize_columns(&mut self) {
        let n = self.len();
        if n == 0 {
            return;
        }
        for j in 0..self.num_features {
            let mut mean = 0.0;
            for i in 0..n {
                mean += self.features[i * self.num_features + j];
            }
            mean /= n as f64;
            let mut var = 0.0;
            for i in 0..n {
                let d = self.features[i * self.num_features + j] - mean;
                var += d * d;
            }
            let std = (var / n as f64).sqrt();
            for i in 0..n {
                let v = &mut self.features[i * self.num_features + j];
                *v -= mean;
                if std > 0.0 {
                    *v /= std;
                }
            }
        }
    }

    /// Writes the dataset as CSV with header `f0,...,f{d−1},label`.
    /// Floats use the shortest representation that parses back bit-identically.
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for j in 0..self.num_features {
            let _ = write!(out, "f{j},");
        }
        out.push_str("label\n");
        for i in 0..self.len() {
            for &v in self.row(i) {
                let _ = write!(out, "{v},");
            }
            let _ = writeln!(out, "{}", self.labels[i]);
        }
        std::fs::write(path, out)?;
        Ok(())
    }
}

/// Balanced per-class counts: the first `n % K` classes get one extra sample.
fn balanced_counts(n: usize, num_classes: usize) -> Vec<usize> {
    (0..num_classes).map(|k| n / num_classes + usize::from(k < n % num_classes)).collect()
}

/// One standard normal draw via the Box–Muller transform.
fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Isotropic Gaussian clusters centered at `num_classes` equally spaced
/// angles on a circle of radius [`BLOB_CIRCLE_RADIUS`]. Dimensions beyond
/// the first two carry zero-centered noise. Class counts are balanced and
/// rows are grouped by class.
pub fn gen_blobs(
    n: usize,
    num_classes: usize,
    num_features: usize,
    spread: f64,
    seed: u64,
) -> Result<Dataset> {
    if num_classes == 0 || n < num_classes {
        return Err(CoreError::Parameter(format!(
            "need at least one sample per class, got n={n}, K={num_classes}"
        )));
    }
    if num_features == 0 {
        return Err(CoreError::Parameter("blobs need at least one feature".into()));
    }
    if !(spread >= 0.0) {
        return Err(CoreError::Parameter(format!("spread must be nonnegative, got {spread}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut features = Vec::with_capacity(n * num_features);
    let mut labels = Vec::with_capacity(n);
    for (k, &count) in balanced_counts(n, num_classes).iter().enumerate() {
        let angle = std::f64::consts::TAU * k as f64 / num_classes as f64;
        let center = [BLOB_CIRCLE_RADIUS * angle.cos(), BLOB_CIRCLE_RADIUS * angle.sin()];
        for _ in 0..count {
            for j in 0..num_features {
                let c = if j < 2 { center[j] } else { 0.0 };
                features.push(c + spread * standard_normal(&mut rng));
            }
            labels.push(k);
        }
    }
    Dataset::new(features, labels, num_features, num_classes, Provenance::Blobs, seed)
}

/// Concentric rings: class `k` sits at radius `k + 1` with Gaussian radial
/// noise and uniform angles. Always two-dimensional.
pub fn gen_rings(n: usize, num_classes: usize, noise: f64, seed: u64) -> Result<Dataset> {
    if num_classes == 0 || n < num_classes {
        return Err(CoreError::Parameter(format!(
            "need at least one sample per class, got n={n}, K={num_classes}"
        )));
    }
    if !(noise >= 0.0) {
        return Err(CoreError::Parameter(format!("noise must be nonnegative, got {noise}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut features = Vec::with_capacity(n * 2);
    let mut labels = Vec::with_capacity(n);
    for (k, &count) in balanced_counts(n, num_classes).iter().enumerate() {
        let base_radius = (k + 1) as f64;
        for _ in 0..count {
            let angle = std::f64::consts::TAU * rng.gen::<f64>();
            let radius = base_radius + noise * standard_normal(&mut rng);
            features.push(radius * angle.cos());
            features.push(radius * angle.sin());
            labels.push(k);
        }
    }
    Dataset::new(features, labels, 2, num_classes, Provenance::Rings, seed)
}

/// Single-feature dataset where every input is the constant 1 and labels are
/// drawn i.i.d. from `probs` by inverse CDF.
pub fn gen_categorical_single_x(probs: &[f64], n: usize, seed: u64) -> Result<Dataset> {
    if probs.is_empty() {
        return Err(CoreError::Parameter("class distribution is empty".into()));
    }
    if probs.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
        return Err(CoreError::Parameter("class probabilities must lie in [0, 1]".into()));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(CoreError::Parameter(format!(
            "class probabilities sum to {total}, expected 1"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut label = probs.len() - 1;
        for (k, &p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                label = k;
                break;
            }
        }
        labels.push(label);
    }
    Dataset::new(vec![1.0; n], labels, 1, probs.len(), Provenance::CategoricalSingleX, seed)
}

/// Flips `⌊fraction·n⌋` labels chosen without replacement, each resampled
/// uniformly from the other `K−1` classes so no flip is a no-op.
pub fn flip_labels(data: &Dataset, fraction: f64, seed: u64) -> Result<Dataset> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(CoreError::Parameter(format!(
            "flip fraction must lie in [0, 1], got {fraction}"
        )));
    }
    let n = data.len();
    let count = (fraction * n as f64).floor() as usize;
    if count > 0 && data.num_classes < 2 {
        return Err(CoreError::Parameter(
            "cannot flip labels with fewer than two classes".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut indices: Vec<usize> = (0..n).collect();
    for i in 0..count {
        let j = i + rng.gen_range(0..n - i);
        indices.swap(i, j);
    }
    let mut out = data.clone();
    for &i in &indices[..count] {
        let original = out.labels[i];
        let r = rng.gen_range(0..data.num_classes - 1);
        out.labels[i] = r + usize::from(r >= original);
    }
    Ok(out)
}

/// Splits into (train, validation) by a seeded permutation followed by a
/// prefix cut of size `⌈train_ratio·n⌉`.
pub fn split(data: &Dataset, train_ratio: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(train_ratio > 0.0 && train_ratio < 1.0) {
        return Err(CoreError::Parameter(format!(
            "train ratio must lie in (0, 1), got {train_ratio}"
        )));
    }
    let n = data.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut indices: Vec<usize> = (0..n).collect();
    for i in 0..n.saturating_sub(1) {
        let j = i + rng.gen_range(0..n - i);
        indices.swap(i, j);
    }
    let cut = (train_ratio * n as f64).ceil() as usize;
    Ok((data.subset(&indices[..cut]), data.subset(&indices[cut..])))
}

/// Loads a dataset from CSV with header `f0,...,f{d−1},label`.
///
/// Returns the dataset together with human-readable warnings; the only
/// current warning fires when the observed labels skip a class, in which
/// case `num_classes` is set to the maximum label plus one.
pub fn load_csv(path: &Path) -> Result<(Dataset, Vec<String>)> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| CoreError::Parse { line: 1, msg: "empty file".into() })?;
    let columns: Vec<&str> = header.split(',').collect();
    if columns.len() < 2 || columns[columns.len() - 1] != "label" {
        return Err(CoreError::Parse {
            line: 1,
            msg: format!("expected header `f0,...,label`, got `{header}`"),
        });
    }
    let d = columns.len() - 1;
    for (j, &c) in columns[..d].iter().enumerate() {
        if c != format!("f{j}") {
            return Err(CoreError::Parse {
                line: 1,
                msg: format!("expected feature column `f{j}`, got `{c}`"),
            });
        }
    }

    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (idx, row) in lines {
        let line = idx + 1;
        if row.is_empty() {
            continue;
        }
        let fields: Vec<&str> = row.split(',').collect();
        if fields.len() != d + 1 {
            return Err(CoreError::Parse {
                line,
                msg: format!("expected {} fields, got {}", d + 1, fields.len()),
            });
        }
        for &f in &fields[..d] {
            let v: f64 = f.parse().map_err(|_| CoreError::Parse {
                line,
                msg: format!("invalid feature value `{f}`"),
            })?;
            features.push(v);
        }
        let label: usize = fields[d].parse().map_err(|_| CoreError::Parse {
            line,
            msg: format!("invalid label `{}`", fields[d]),
        })?;
        labels.push(label);
    }

    let max_label = labels.iter().copied().max().unwrap_or(0);
    let num_classes = max_label + 1;
    let mut warnings = Vec::new();
    let mut seen = vec![false; num_classes];
    for &l in &labels {
        seen[l] = true;
    }
    if seen.iter().any(|&s| !s) {
        warnings.push(format!(
            "labels skip at least one class below {max_label}; num_classes set to {num_classes}"
        ));
    }
    let data = Dataset::new(features, labels, d, num_classes, Provenance::Csv, 0)?;
    Ok((data, warnings))
}
