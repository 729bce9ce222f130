use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prediction::argmax_rows;

/// Proportion assigned to classes no pseudo-label landed in.
pub const EMPTY_CLASS_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProportionSource {
    Pseudo,
    /// Supplied from outside (true labels or a fixed vector).
    Given,
    Uniform,
}

/// Estimated target class proportions `W`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassProportion {
    pub weights: Vec<f64>,
    pub source: ProportionSource,
}

impl ClassProportion {
    pub fn uniform(classes: usize) -> Self {
        ClassProportion {
            weights: vec![1.0 / classes as f64; classes],
            source: ProportionSource::Uniform,
        }
    }

    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        let p = ClassProportion {
            weights,
            source: ProportionSource::Given,
        };
        p.validate()?;
        Ok(p)
    }

    /// `w_c = n_c / Σ_j n_j`.
    pub fn from_counts(counts: &[usize]) -> Result<Self> {
        let total: usize = counts.iter().sum();
        if total == 0 {
            return Err(Error::Validation("cannot form proportions from zero counts".into()));
        }
        Self::from_weights(counts.iter().map(|&c| c as f64 / total as f64).collect())
    }

    pub fn validate(&self) -> Result<()> {
        if self.weights.is_empty() {
            return Err(Error::Validation("empty class proportion".into()));
        }
        if self.weights.iter().any(|&w| !(w >= 0.0)) {
            return Err(Error::Validation("class proportions must be non-negative".into()));
        }
        let s: f64 = self.weights.iter().sum();
        if (s - 1.0).abs() > 1e-12 {
            return Err(Error::Validation(format!("class proportions sum to {s}, not 1")));
        }
        Ok(())
    }

    /// Total-variation distance to another proportion vector.
    pub fn total_variation(&self, other: &[f64]) -> f64 {
        0.5 * self
            .weights
            .iter()
            .zip(other)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
    }
}

/// Argmax pseudo-labels of averaged ensemble rows and the class proportions
/// they imply. Empty classes get [`EMPTY_CLASS_FLOOR`] before renormalizing.
pub fn pseudo_labels(mean_preds: ArrayView2<f64>) -> Result<(Vec<usize>, ClassProportion)> {
    let (n, c) = mean_preds.dim();
    if n == 0 || c == 0 {
        return Err(Error::Shape("pseudo-labeling needs a non-empty prediction matrix".into()));
    }
    let labels = argmax_rows(mean_preds);
    let mut counts = vec![0usize; c];
    for &y in &labels {
        counts[y] += 1;
    }
    let mut weights: Vec<f64> = counts
        .iter()
        .map(|&k| (k as f64 / n as f64).max(EMPTY_CLASS_FLOOR))
        .collect();
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    Ok((
        labels,
        ClassProportion {
            weights,
            source: ProportionSource::Pseudo,
        },
    ))
}
