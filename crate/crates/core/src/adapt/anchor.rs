use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::diffcore::softmax;
use crate::error::{Error, Result};
use crate::prediction::PredictionTensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnchorStrategy {
    /// A configured member, for the whole run.
    Fixed,
    /// A member drawn once per run from the seeded anchor stream.
    Random,
    /// Uniform average of all members.
    Ensemble,
    /// Average weighted by each member's agreement with the others.
    Whp,
}

impl AnchorStrategy {
    pub const ALL: [AnchorStrategy; 4] = [
        AnchorStrategy::Fixed,
        AnchorStrategy::Random,
        AnchorStrategy::Ensemble,
        AnchorStrategy::Whp,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AnchorStrategy::Fixed => "fixed",
            AnchorStrategy::Random => "random",
            AnchorStrategy::Ensemble => "ensemble",
            AnchorStrategy::Whp => "whp",
        }
    }

    /// Single-member anchors leave the anchor member out of the disparity sum.
    pub fn is_member_anchor(self) -> bool {
        matches!(self, AnchorStrategy::Fixed | AnchorStrategy::Random)
    }
}

impl std::fmt::Display for AnchorStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for AnchorStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AnchorStrategy::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown anchor strategy `{s}`")))
    }
}

/// How member-to-member cosine similarity is aggregated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CosineMode {
    /// Cosine between the two probability rows of each sample, averaged.
    #[default]
    PerSample,
    /// One cosine between the flattened `N·C` prediction matrices.
    Flattened,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorWeights {
    /// Mean cosine similarity of each member to the others.
    pub raw: Vec<f64>,
    /// `softmax(raw)`.
    pub normalized: Vec<f64>,
}

fn cosine(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.dot(&b) / (a.dot(&a).sqrt() * b.dot(&b).sqrt())
}

fn pair_similarity(preds: &PredictionTensor, i: usize, j: usize, mode: CosineMode) -> f64 {
    let (a, b) = (preds.member(i), preds.member(j));
    match mode {
        CosineMode::PerSample => {
            let total: f64 = a
                .outer_iter()
                .zip(b.outer_iter())
                .map(|(x, y)| cosine(x, y))
                .sum();
            total / preds.n() as f64
        }
        CosineMode::Flattened => {
            let fa = a.iter().copied().collect::<ndarray::Array1<f64>>();
            let fb = b.iter().copied().collect::<ndarray::Array1<f64>>();
            cosine(fa.view(), fb.view())
        }
    }
}

/// Weak-hypothesis penalization weights: a member that agrees less with the
/// rest gets a smaller share of the anchor.
pub fn anchor_weights(preds: &PredictionTensor, mode: CosineMode) -> Result<AnchorWeights> {
    let m = preds.m();
    if m < 2 {
        return Err(Error::Config(format!("anchor weights need at least two members, got {m}")));
    }
    let mut total = vec![0.0; m];
    for i in 0..m {
        for j in i + 1..m {
            let s = pair_similarity(preds, i, j, mode);
            total[i] += s;
            total[j] += s;
        }
    }
    let raw: Vec<f64> = total.iter().map(|t| t / (m - 1) as f64).collect();
    let normalized = softmax(&raw);
    Ok(AnchorWeights { raw, normalized })
}

/// The anchor distribution for the disparity term.
pub fn build_anchor(
    preds: &PredictionTensor,
    strategy: AnchorStrategy,
    weights: Option<&AnchorWeights>,
    index: Option<usize>,
) -> Result<Array2<f64>> {
    match strategy {
        AnchorStrategy::Fixed | AnchorStrategy::Random => {
            let i = index.ok_or_else(|| {
                Error::Config(format!("{strategy} anchor needs a member index"))
            })?;
            if i >= preds.m() {
                return Err(Error::Config(format!(
                    "anchor index {i} out of range for {} members",
                    preds.m()
                )));
            }
            Ok(preds.member(i).to_owned())
        }
        AnchorStrategy::Ensemble => Ok(preds.mean()),
        AnchorStrategy::Whp => {
            let w = weights
                .ok_or_else(|| Error::Config("whp anchor needs anchor weights".into()))?;
            if w.normalized.len() != preds.m() {
                return Err(Error::Shape(format!(
                    "{} anchor weights for {} members",
                    w.normalized.len(),
                    preds.m()
                )));
            }
            let mut acc = Array2::zeros((preds.n(), preds.c()));
            for (i, &wi) in w.normalized.iter().enumerate() {
                acc.scaled_add(wi, &preds.member(i));
            }
            Ok(acc)
        }
    }
}
