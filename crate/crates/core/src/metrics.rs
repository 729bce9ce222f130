//! Accuracy, function-space disagreement, Brier score, ECE and the
//! two-proportion confidence interval used to test for covariate shift.

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prediction::{argmax, argmax_rows, PredictionTensor};

pub const DEFAULT_ECE_BINS: usize = 10;

fn check_labels(probs: &ArrayView2<f64>, labels: &[usize]) -> Result<()> {
    if probs.nrows() != labels.len() {
        return Err(Error::Shape(format!(
            "{} prediction rows for {} labels",
            probs.nrows(),
            labels.len()
        )));
    }
    if let Some(&y) = labels.iter().find(|&&y| y >= probs.ncols()) {
        return Err(Error::Validation(format!(
            "label {y} outside {} classes",
            probs.ncols()
        )));
    }
    Ok(())
}

pub fn accuracy(predicted: &[usize], labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let hits = predicted.iter().zip(labels).filter(|(p, y)| p == y).count();
    hits as f64 / labels.len() as f64
}

/// Accuracy restricted to each true class; classes absent from `labels`
/// report 0.
pub fn per_class_accuracy(predicted: &[usize], labels: &[usize], classes: usize) -> Vec<f64> {
    let mut hits = vec![0usize; classes];
    let mut totals = vec![0usize; classes];
    for (&p, &y) in predicted.iter().zip(labels) {
        totals[y] += 1;
        if p == y {
            hits[y] += 1;
        }
    }
    hits.iter()
        .zip(&totals)
        .map(|(&h, &t)| if t == 0 { 0.0 } else { h as f64 / t as f64 })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Disagreement {
    /// `(1/N) Σ_i Σ_j #{n : label_i(n) ≠ label_j(n)}` over ordered pairs.
    pub raw: f64,
    /// `raw / (M (M − 1))`, in `[0, 1]`.
    pub normalized: f64,
}

pub fn disagreement(preds: &PredictionTensor) -> Result<Disagreement> {
    let m = preds.m();
    if m < 2 {
        return Err(Error::Validation(format!(
            "disagreement needs at least two hypotheses, got {m}"
        )));
    }
    let labels: Vec<Vec<usize>> = (0..m).map(|i| preds.labels(i)).collect();
    let mut count = 0usize;
    for i in 0..m {
        for j in i + 1..m {
            count += labels[i]
                .iter()
                .zip(&labels[j])
                .filter(|(a, b)| a != b)
                .count();
        }
    }
    // Ordered pairs count every unordered pair twice.
    let raw = 2.0 * count as f64 / preds.n() as f64;
    Ok(Disagreement {
        raw,
        normalized: raw / (m * (m - 1)) as f64,
    })
}

/// Multiclass Brier score `mean_n Σ_c (p_nc − 1[y_n = c])²`, in `[0, 2]`.
pub fn brier(probs: ArrayView2<f64>, labels: &[usize]) -> Result<f64> {
    check_labels(&probs, labels)?;
    if labels.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = probs
        .outer_iter()
        .zip(labels)
        .map(|(row, &y)| {
            row.iter()
                .enumerate()
                .map(|(c, &p)| {
                    let t = if c == y { 1.0 } else { 0.0 };
                    (p - t) * (p - t)
                })
                .sum::<f64>()
        })
        .sum();
    Ok(total / labels.len() as f64)
}

/// One equal-width confidence bin `(lower, upper]` (the first bin also holds 0).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    pub accuracy: f64,
    pub confidence: f64,
}

fn bin_of(confidence: f64, bins: usize) -> usize {
    let mut b = ((confidence * bins as f64).ceil() as usize).clamp(1, bins) - 1;
    // Settle floating-point disagreements with the explicit edges.
    while b > 0 && confidence <= b as f64 / bins as f64 {
        b -= 1;
    }
    while b + 1 < bins && confidence > (b + 1) as f64 / bins as f64 {
        b += 1;
    }
    b
}

pub fn reliability_bins(
    probs: ArrayView2<f64>,
    labels: &[usize],
    bins: usize,
) -> Result<Vec<ReliabilityBin>> {
    if bins == 0 {
        return Err(Error::Config("ECE needs at least one bin".into()));
    }
    check_labels(&probs, labels)?;
    let mut counts = vec![0usize; bins];
    let mut correct = vec![0usize; bins];
    let mut conf_sum = vec![0.0; bins];
    for (row, &y) in probs.outer_iter().zip(labels) {
        let pred = argmax(row);
        let conf = row[pred];
        let b = bin_of(conf, bins);
        counts[b] += 1;
        conf_sum[b] += conf;
        if pred == y {
            correct[b] += 1;
        }
    }
    Ok((0..bins)
        .map(|b| {
            let n = counts[b];
            ReliabilityBin {
                lower: b as f64 / bins as f64,
                upper: (b + 1) as f64 / bins as f64,
                count: n,
                accuracy: if n == 0 { 0.0 } else { correct[b] as f64 / n as f64 },
                confidence: if n == 0 { 0.0 } else { conf_sum[b] / n as f64 },
            }
        })
        .collect())
}

/// Expected calibration error over equal-width max-probability bins.
pub fn ece(probs: ArrayView2<f64>, labels: &[usize], bins: usize) -> Result<f64> {
    let table = reliability_bins(probs, labels, bins)?;
    let n = labels.len();
    if n == 0 {
        return Ok(0.0);
    }
    Ok(table
        .iter()
        .filter(|b| b.count > 0)
        .map(|b| b.count as f64 / n as f64 * (b.accuracy - b.confidence).abs())
        .sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CiResult {
    pub p_diff: f64,
    pub se_diff: f64,
    pub lo: f64,
    pub hi: f64,
    pub overlaps_zero: bool,
}

/// Interval `p₁ − p₂ ± z · sqrt(SE₁² + SE₂²)` with `SE = sqrt(p(1−p)/n)`.
pub fn ci_difference(acc1: f64, n1: usize, acc2: f64, n2: usize, z: f64) -> Result<CiResult> {
    if n1 == 0 || n2 == 0 {
        return Err(Error::Validation("sample counts must be positive".into()));
    }
    for acc in [acc1, acc2] {
        if !(0.0..=1.0).contains(&acc) {
            return Err(Error::Validation(format!("accuracy {acc} outside [0, 1]")));
        }
    }
    if !(z.is_finite() && z >= 0.0) {
        return Err(Error::Config(format!("z must be a finite non-negative number, got {z}")));
    }
    let se1 = acc1 * (1.0 - acc1) / n1 as f64;
    let se2 = acc2 * (1.0 - acc2) / n2 as f64;
    let p_diff = acc1 - acc2;
    let se_diff = (se1 + se2).sqrt();
    let lo = p_diff - z * se_diff;
    let hi = p_diff + z * se_diff;
    Ok(CiResult {
        p_diff,
        se_diff,
        lo,
        hi,
        overlaps_zero: lo <= 0.0 && 0.0 <= hi,
    })
}

/// Summary of an ensemble's predictions against known labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub brier: f64,
    pub ece: f64,
    /// Raw ordered-pair disagreement; 0 for a single hypothesis.
    pub disagreement: f64,
    pub disagreement_normalized: f64,
    pub per_class_accuracy: Vec<f64>,
    pub member_accuracy: Vec<f64>,
}

impl EvalReport {
    /// Scores the uniform average of `preds` against `labels`.
    pub fn evaluate(preds: &PredictionTensor, labels: &[usize], bins: usize) -> Result<Self> {
        let mean = preds.mean();
        check_labels(&mean.view(), labels)?;
        let predicted = argmax_rows(mean.view());
        let dis = if preds.m() >= 2 {
            disagreement(preds)?
        } else {
            Disagreement {
                raw: 0.0,
                normalized: 0.0,
            }
        };
        Ok(EvalReport {
            accuracy: accuracy(&predicted, labels),
            brier: brier(mean.view(), labels)?,
            ece: ece(mean.view(), labels, bins)?,
            disagreement: dis.raw,
            disagreement_normalized: dis.normalized,
            per_class_accuracy: per_class_accuracy(&predicted, labels, preds.c()),
            member_accuracy: (0..preds.m())
                .map(|i| accuracy(&preds.labels(i), labels))
                .collect(),
        })
    }
}
