use ndarray::{Array2, ArrayView1, ArrayView2};

use crate::diffcore::PROB_FLOOR;
use crate::error::{Error, Result};

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

pub fn argmax_rows(probs: ArrayView2<f64>) -> Vec<usize> {
    probs.outer_iter().map(argmax).collect()
}

/// Softmax rows of every ensemble member on a common sample set (`M × N × C`).
/// Entries are clamped to at least [`PROB_FLOOR`].
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionTensor {
    members: Vec<Array2<f64>>,
}

impl PredictionTensor {
    pub fn new(members: Vec<Array2<f64>>) -> Result<Self> {
        let first = members
            .first()
            .ok_or_else(|| Error::Shape("prediction tensor needs at least one member".into()))?;
        let dim = first.dim();
        for (i, m) in members.iter().enumerate() {
            if m.dim() != dim {
                return Err(Error::Shape(format!(
                    "member {i} has shape {:?}, member 0 has {dim:?}",
                    m.dim()
                )));
            }
            for (r, row) in m.outer_iter().enumerate() {
                let s = row.sum();
                if (s - 1.0).abs() > 1e-9 || row.iter().any(|&p| !(p >= 0.0)) {
                    return Err(Error::Validation(format!(
                        "member {i} row {r} is not a probability vector (sum {s})"
                    )));
                }
            }
        }
        let members = members
            .into_iter()
            .map(|m| m.mapv(|p| p.max(PROB_FLOOR)))
            .collect();
        Ok(PredictionTensor { members })
    }

    /// Number of members.
    pub fn m(&self) -> usize {
        self.members.len()
    }

    pub fn n(&self) -> usize {
        self.members[0].nrows()
    }

    pub fn c(&self) -> usize {
        self.members[0].ncols()
    }

    pub fn member(&self, i: usize) -> ArrayView2<'_, f64> {
        self.members[i].view()
    }

    pub fn members(&self) -> &[Array2<f64>] {
        &self.members
    }

    /// Uniform average over members.
    pub fn mean(&self) -> Array2<f64> {
        let mut acc = Array2::zeros(self.members[0].raw_dim());
        for m in &self.members {
            acc += m;
        }
        acc / self.m() as f64
    }

    pub fn labels(&self, i: usize) -> Vec<usize> {
        argmax_rows(self.member(i))
    }

    /// Same tensor with members reordered as `order`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        PredictionTensor {
            members: order.iter().map(|&i| self.members[i].clone()).collect(),
        }
    }
}
