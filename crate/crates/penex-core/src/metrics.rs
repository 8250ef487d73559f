//! Evaluation metrics: accuracy, expected calibration error, Brier score,
//! evaluation cross-entropy, and margin-distribution summaries.
//!
//! All metrics are positive-oriented as stored; any sign flipping for
//! "larger is better" comparison tables happens at presentation time only.
//! Probability inputs are flat row-major n×K matrices whose rows are
//! expected to sum to 1 (±1e-6); argmax ties always break toward the lowest
//! class index.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::scalar::Scalar;

/// Default number of calibration bins.
pub const DEFAULT_ECE_BINS: usize = 15;

/// True-class probabilities below this floor are clamped and flagged.
pub const CE_CLAMP: f64 = 1e-12;

fn check_probs<S: Scalar>(probs: &[S], num_classes: usize, labels: &[usize]) -> Result<()> {
    let n = labels.len();
    if num_classes == 0 || probs.len() != n * num_classes {
        return Err(CoreError::Dimension(format!(
            "expected {n}x{num_classes} probability matrix, got {} entries",
            probs.len()
        )));
    }
    if let Some((i, &bad)) = labels.iter().enumerate().find(|(_, &l)| l >= num_classes) {
        return Err(CoreError::Index(format!(
            "label {bad} at position {i} is out of range for {num_classes} classes"
        )));
    }
    let tol = S::from_f64_lossy(1e-6);
    for (i, row) in probs.chunks_exact(num_classes).enumerate() {
        let sum = row.iter().fold(S::zero(), |acc, &v| acc + v);
        if (sum - S::one()).abs() > tol {
            return Err(CoreError::Contract(format!(
                "probability row {i} sums to {sum}, expected 1"
            )));
        }
    }
    Ok(())
}

/// Index of the row maximum, ties broken by lowest class index.
pub fn argmax_row<S: Scalar>(row: &[S]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = j;
        }
    }
    best
}

/// Fraction of rows whose argmax equals the label.
pub fn accuracy<S: Scalar>(probs: &[S], num_classes: usize, labels: &[usize]) -> Result<f64> {
    check_probs(probs, num_classes, labels)?;
    let correct = probs
        .chunks_exact(num_classes)
        .zip(labels)
        .filter(|(row, &y)| argmax_row(row) == y)
        .count();
    Ok(correct as f64 / labels.len() as f64)
}

/// Expected calibration error over `bins` left-open intervals
/// `((m−1)/M, m/M]` of the confidence (max predicted probability).
/// A confidence of exactly 0 is assigned to the first bin.
pub fn ece<S: Scalar>(
    probs: &[S],
    num_classes: usize,
    labels: &[usize],
    bins: usize,
) -> Result<f64> {
    check_probs(probs, num_classes, labels)?;
    if bins == 0 {
        return Err(CoreError::Parameter("ece needs at least one bin".into()));
    }
    let n = labels.len();
    let mut count = vec![0usize; bins];
    let mut conf_sum = vec![0.0f64; bins];
    let mut correct = vec![0usize; bins];
    for (row, &y) in probs.chunks_exact(num_classes).zip(labels) {
        let pred = argmax_row(row);
        let conf = row[pred].to_f64_lossy();
        // Smallest m with conf <= m/M; exact zeros land in bin 1.
        let bin = ((conf * bins as f64).ceil() as usize).clamp(1, bins) - 1;
        count[bin] += 1;
        conf_sum[bin] += conf;
        if pred == y {
            correct[bin] += 1;
        }
    }
    let mut total = 0.0;
    for m in 0..bins {
        if count[m] == 0 {
            continue;
        }
        let acc = correct[m] as f64 / count[m] as f64;
        let conf = conf_sum[m] / count[m] as f64;
        total += (count[m] as f64 / n as f64) * (acc - conf).abs();
    }
    Ok(total)
}

/// Brier score: mean squared distance between each probability row and the
/// one-hot encoding of its label. Lies in [0, 2].
pub fn brier<S: Scalar>(probs: &[S], num_classes: usize, labels: &[usize]) -> Result<f64> {
    check_probs(probs, num_classes, labels)?;
    let mut total = 0.0;
    for (row, &y) in probs.chunks_exact(num_classes).zip(labels) {
        for (j, &p) in row.iter().enumerate() {
            let target = if j == y { 1.0 } else { 0.0 };
            let d = p.to_f64_lossy() - target;
            total += d * d;
        }
    }
    Ok(total / labels.len() as f64)
}

/// Evaluation cross-entropy with its clamp indicator.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalCe {
    /// Mean negative log probability of the true class.
    pub value: f64,
    /// True if any true-class probability was clamped up to the floor.
    pub saturated: bool,
}

/// Mean `−ln probs[i, yᵢ]`. True-class probabilities at or below zero are
/// clamped to [`CE_CLAMP`] and the saturation flag is raised.
pub fn eval_ce<S: Scalar>(probs: &[S], num_classes: usize, labels: &[usize]) -> Result<EvalCe> {
    check_probs(probs, num_classes, labels)?;
    let mut total = 0.0;
    let mut saturated = false;
    for (row, &y) in probs.chunks_exact(num_classes).zip(labels) {
        let mut p = row[y].to_f64_lossy();
        if p < CE_CLAMP {
            p = CE_CLAMP;
            saturated = true;
        }
        total -= p.ln();
    }
    Ok(EvalCe { value: total / labels.len() as f64, saturated })
}

/// Five-point margin summary.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarginQuantiles {
    pub p05: f64,
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
    pub p95: f64,
}

/// Linear-interpolation quantile of an unsorted sample.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = q * (n - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    let frac = h - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Per-split metric bundle as it appears in run reports.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub acc: f64,
    pub ece: f64,
    pub ce: f64,
    pub brier: f64,
    pub mean_margin: f64,
    pub margin_quantiles: MarginQuantiles,
    /// Number of evaluated samples.
    pub n: usize,
    /// True if the evaluation cross-entropy clamped any probability.
    pub ce_saturated: bool,
}

/// Computes the full metric bundle from probabilities and margins.
pub fn metrics_report<S: Scalar>(
    probs: &[S],
    num_classes: usize,
    labels: &[usize],
    margins: &[f64],
) -> Result<MetricsReport> {
    if margins.len() != labels.len() {
        return Err(CoreError::Dimension(format!(
            "expected {} margins, got {}",
            labels.len(),
            margins.len()
        )));
    }
    let acc = accuracy(probs, num_classes, labels)?;
    let ece_v = ece(probs, num_classes, labels, DEFAULT_ECE_BINS)?;
    let brier_v = brier(probs, num_classes, labels)?;
    let ce = eval_ce(probs, num_classes, labels)?;
    let mut sorted = margins.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("margins must be comparable"));
    let mean_margin = margins.iter().sum::<f64>() / margins.len() as f64;
    Ok(MetricsReport {
        acc,
        ece: ece_v,
        ce: ce.value,
        brier: brier_v,
        mean_margin,
        margin_quantiles: MarginQuantiles {
            p05: quantile(&sorted, 0.05),
            p25: quantile(&sorted, 0.25),
            p50: quantile(&sorted, 0.50),
            p75: quantile(&sorted, 0.75),
            p95: quantile(&sorted, 0.95),
        },
        n: labels.len(),
        ce_saturated: ce.saturated,
    })
}

/// Fixed-width histogram with `bins` uniform bins over the observed range.
/// A degenerate range widens to ±0.5 around the single observed value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn new(values: &[f64], bins: usize) -> Result<Self> {
        if bins == 0 {
            return Err(CoreError::Parameter("histogram needs at least one bin".into()));
        }
        if values.is_empty() {
            return Err(CoreError::Contract("histogram of an empty sample".into()));
        }
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &v in values {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if lo == hi {
            lo -= 0.5;
            hi += 0.5;
        }
        let width = (hi - lo) / bins as f64;
        let mut counts = vec![0usize; bins];
        for &v in values {
            let idx = (((v - lo) / width) as usize).min(bins - 1);
            counts[idx] += 1;
        }
        Ok(Histogram { lo, hi, counts })
    }

    /// Inclusive-exclusive bounds of bin `i` (the last bin is inclusive).
    pub fn bin_bounds(&self, i: usize) -> (f64, f64) {
        let width = (self.hi - self.lo) / self.counts.len() as f64;
        (self.lo + i as f64 * width, self.lo + (i + 1) as f64 * width)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(actual: f64, expected: f64, tol: f64) {
        assert!(
            (actual - expected).abs() <= tol,
            "got {actual}, expected {expected} (tol {tol})"
        );
    }

    #[test]
    fn accuracy_values() {
        let probs = vec![1.0, 0.0, 0.0, 1.0];
        assert_close(accuracy(&probs, 2, &[0, 1]).unwrap(), 1.0, 0.0);

        // Uniform rows tie-break to class 0.
        let probs = vec![0.5, 0.5, 0.5, 0.5];
        assert_close(accuracy(&probs, 2, &[0, 0]).unwrap(), 1.0, 0.0);
        assert_close(accuracy(&probs, 2, &[1, 1]).unwrap(), 0.0, 0.0);

        let probs = vec![0.6, 0.4, 0.3, 0.7];
        assert_close(accuracy(&probs, 2, &[1, 1]).unwrap(), 0.5, 0.0);
    }

    #[test]
    fn ece_values() {
        // Perfectly confident and correct: zero calibration error.
        let probs = vec![1.0, 0.0, 1.0, 0.0];
        assert_close(ece(&probs, 2, &[0, 0], 15).unwrap(), 0.0, 0.0);

        // Two samples at confidence 0.9, one correct: |0.5 - 0.9| = 0.4,
        // and the arithmetic is exact in f64.
        let probs = vec![0.9, 0.1, 0.9, 0.1];
        let v = ece(&probs, 2, &[0, 1], 15).unwrap();
        assert_eq!(v, 0.4);
    }

    #[test]
    fn ece_bin_boundaries_are_left_open() {
        // Confidence exactly at a boundary m/M belongs to bin m, and an
        // exact zero is pulled up into the first bin.
        let bins = 15usize;
        let bin_of = |conf: f64| ((conf * bins as f64).ceil() as usize).clamp(1, bins) - 1;
        assert_eq!(bin_of(0.0), 0);
        assert_eq!(bin_of(1.0 / 15.0), 0);
        assert_eq!(bin_of(1.0 / 15.0 + 1e-9), 1);
        assert_eq!(bin_of(1.0), bins - 1);
    }

    #[test]
    fn ece_single_bin_equals_acc_conf_gap() {
        let probs = vec![0.7, 0.3, 0.55, 0.45, 0.9, 0.1];
        let labels = [0, 1, 0];
        let acc = accuracy(&probs, 2, &labels).unwrap();
        let mean_conf = (0.7 + 0.55 + 0.9) / 3.0;
        let v = ece(&probs, 2, &labels, 1).unwrap();
        assert_close(v, (acc - mean_conf).abs(), 1e-15);
    }

    #[test]
    fn brier_values() {
        let probs = vec![1.0, 0.0];
        assert_close(brier(&probs, 2, &[0]).unwrap(), 0.0, 0.0);

        let probs = vec![0.8, 0.2];
        assert_close(brier(&probs, 2, &[0]).unwrap(), 0.08, 1e-15);

        for y in [0usize, 1] {
            let probs = vec![0.5, 0.5];
            assert_close(brier(&probs, 2, &[y]).unwrap(), 0.5, 1e-15);
        }

        // Full mass on a wrong class attains the upper bound 2.
        let probs = vec![0.0, 1.0];
        assert_close(brier(&probs, 2, &[0]).unwrap(), 2.0, 0.0);
    }

    #[test]
    fn eval_ce_values_and_clamping() {
        let probs = vec![1.0, 0.0, 1.0, 0.0];
        let r = eval_ce(&probs, 2, &[0, 0]).unwrap();
        assert_close(r.value, 0.0, 0.0);
        assert!(!r.saturated);

        let p = 1.0 / std::f64::consts::E;
        let probs = vec![p, 1.0 - p];
        let r = eval_ce(&probs, 2, &[0]).unwrap();
        assert_close(r.value, 1.0, 1e-15);

        let probs = vec![0.5, 0.5];
        let r = eval_ce(&probs, 2, &[0]).unwrap();
        assert_close(r.value, 2.0f64.ln(), 1e-15);

        let probs = vec![0.0, 1.0];
        let r = eval_ce(&probs, 2, &[0]).unwrap();
        assert!(r.saturated);
        assert_close(r.value, -(CE_CLAMP.ln()), 1e-12);
    }

    #[test]
    fn rejects_invalid_rows() {
        let probs = vec![0.9, 0.3];
        assert!(matches!(
            accuracy(&probs, 2, &[0]),
            Err(CoreError::Contract(_))
        ));
        let probs = vec![0.9, 0.1];
        assert!(matches!(
            accuracy(&probs, 2, &[2]),
            Err(CoreError::Index(_))
        ));
    }

    #[test]
    fn histogram_bins_cover_range() {
        let values = vec![0.0, 0.1, 0.5, 1.0, 1.0];
        let h = Histogram::new(&values, 4).unwrap();
        assert_eq!(h.counts.iter().sum::<usize>(), values.len());
        assert_close(h.lo, 0.0, 0.0);
        assert_close(h.hi, 1.0, 0.0);
        // Maximum lands in the last bin.
        assert_eq!(*h.counts.last().unwrap(), 2);

        let degenerate = vec![3.0, 3.0];
        let h = Histogram::new(&degenerate, 50).unwrap();
        assert_close(h.lo, 2.5, 0.0);
        assert_close(h.hi, 3.5, 0.0);
        assert_eq!(h.counts.iter().sum::<usize>(), 2);
    }

    #[test]
    fn quantiles_interpolate() {
        let margins: Vec<f64> = (0..=100).map(|i| i as f64 / 100.0).collect();
        let probs: Vec<f64> = margins.iter().flat_map(|_| [1.0, 0.0]).collect();
        let labels = vec![0usize; margins.len()];
        let r = metrics_report(&probs, 2, &labels, &margins).unwrap();
        assert_close(r.margin_quantiles.p05, 0.05, 1e-12);
        assert_close(r.margin_quantiles.p50, 0.50, 1e-12);
        assert_close(r.margin_quantiles.p95, 0.95, 1e-12);
        assert_close(r.mean_margin, 0.5, 1e-12);
        assert_eq!(r.n, 101);
    }
}
