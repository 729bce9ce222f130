//! Scalar objectives over softmax outputs and their derivatives with respect
//! to the probabilities. Chained with [`softmax_backward`] they give logit
//! gradients; every log goes through the [`PROB_FLOOR`] clamp, and the
//! derivative of the clamp is taken literally (zero below the floor).

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};

/// Probabilities are clamped to `[PROB_FLOOR, 1]` before any logarithm.
pub const PROB_FLOOR: f64 = 1e-12;

#[inline]
pub fn clamped_ln(p: f64) -> f64 {
    p.max(PROB_FLOOR).ln()
}

#[inline]
fn d_clamped_ln(p: f64) -> f64 {
    if p > PROB_FLOOR {
        1.0 / p
    } else {
        0.0
    }
}

/// d/dp of `p · clamped_ln(p)`.
#[inline]
fn d_xlnx(p: f64) -> f64 {
    if p > PROB_FLOOR {
        p.ln() + 1.0
    } else {
        PROB_FLOOR.ln()
    }
}

/// Numerically stable softmax (max-subtracted).
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

pub fn softmax_rows(logits: ArrayView2<f64>) -> Array2<f64> {
    let mut out = logits.to_owned();
    for mut row in out.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|z| (z - max).exp());
        let total = row.sum();
        row /= total;
    }
    out
}

/// Chains dL/dp through the softmax: `dz = p ⊙ (g − Σ_k p_k g_k)` per row.
pub fn softmax_backward(probs: ArrayView2<f64>, grad_probs: ArrayView2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros(probs.raw_dim());
    for ((p, g), mut dz) in probs
        .outer_iter()
        .zip(grad_probs.outer_iter())
        .zip(out.outer_iter_mut())
    {
        let inner = p.dot(&g);
        for c in 0..p.len() {
            dz[c] = p[c] * (g[c] - inner);
        }
    }
    out
}

/// How the class-marginal of the mutual-information objective is formed.
#[derive(Debug, Clone, Copy)]
pub enum Marginal<'a> {
    /// Mean over the rows being differentiated.
    Batch,
    /// `(detached_sum + Σ_batch rows) / total`: a dataset-wide marginal whose
    /// out-of-batch part is held constant.
    Pooled { detached_sum: &'a [f64], total: usize },
}

#[derive(Debug, Clone, Copy)]
pub enum Loss<'a> {
    /// Mean cross entropy against integer targets.
    CrossEntropy { targets: &'a [usize] },
    /// Negative class-weighted mutual information, `−I_W`.
    WeightedMi {
        class_weights: &'a [f64],
        marginal: Marginal<'a>,
    },
    /// Mean cross entropy from a detached anchor distribution to the rows.
    HdToAnchor { anchor: ArrayView2<'a, f64> },
    /// `alpha · mi_scale · (−I_W) + beta · hd_scale · HD`, the per-member
    /// slice of the ensemble adaptation objective.
    Composite {
        alpha: f64,
        beta: f64,
        class_weights: &'a [f64],
        marginal: Marginal<'a>,
        anchor: Option<ArrayView2<'a, f64>>,
        mi_scale: f64,
        hd_scale: f64,
    },
}

impl Loss<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            Loss::CrossEntropy { .. } => "cross_entropy_hard",
            Loss::WeightedMi { .. } => "weighted_mi",
            Loss::HdToAnchor { .. } => "hd_to_anchor",
            Loss::Composite { .. } => "composite",
        }
    }
}

/// Shannon entropy (nats) of one probability row.
pub fn entropy(row: &[f64]) -> f64 {
    -row.iter().map(|&p| p * clamped_ln(p)).sum::<f64>()
}

fn marginal_of(probs: &ArrayView2<f64>, marginal: Marginal) -> Result<(Array1<f64>, f64)> {
    let n = probs.nrows() as f64;
    match marginal {
        Marginal::Batch => Ok((probs.sum_axis(Axis(0)) / n, n)),
        Marginal::Pooled {
            detached_sum,
            total,
        } => {
            if detached_sum.len() != probs.ncols() {
                return Err(Error::Shape(format!(
                    "pooled marginal has {} classes, rows have {}",
                    detached_sum.len(),
                    probs.ncols()
                )));
            }
            let total = total as f64;
            let sum = probs.sum_axis(Axis(0)) + &Array1::from(detached_sum.to_vec());
            Ok((sum / total, total))
        }
    }
}

/// Value and dI_W/dP of the class-weighted mutual information
/// `−Σ_c W_c p̄_c ln p̄_c − mean_n H(P_n)`.
pub fn weighted_mi_with_grad(
    probs: ArrayView2<f64>,
    class_weights: &[f64],
    marginal: Marginal,
) -> Result<(f64, Array2<f64>)> {
    let (n, c) = probs.dim();
    if class_weights.len() != c {
        return Err(Error::Shape(format!(
            "{} class weights for {c} classes",
            class_weights.len()
        )));
    }
    if n == 0 {
        return Err(Error::Shape("empty batch".into()));
    }
    let (mean, denom) = marginal_of(&probs, marginal)?;
    let marginal_term: f64 = -(0..c)
        .map(|k| class_weights[k] * mean[k] * clamped_ln(mean[k]))
        .sum::<f64>();
    let conditional: f64 = probs
        .outer_iter()
        .map(|row| -row.iter().map(|&p| p * clamped_ln(p)).sum::<f64>())
        .sum::<f64>()
        / n as f64;

    let marginal_grad: Vec<f64> = (0..c)
        .map(|k| -class_weights[k] * d_xlnx(mean[k]) / denom)
        .collect();
    let mut grad = Array2::zeros((n, c));
    for ((i, k), g) in grad.indexed_iter_mut() {
        *g = marginal_grad[k] + d_xlnx(probs[[i, k]]) / n as f64;
    }
    Ok((marginal_term - conditional, grad))
}

/// Value and gradient of `mean_n −Σ_c a_nc ln p_nc`.
pub fn anchor_ce_with_grad(
    probs: ArrayView2<f64>,
    anchor: ArrayView2<f64>,
) -> Result<(f64, Array2<f64>)> {
    if probs.dim() != anchor.dim() {
        return Err(Error::Shape(format!(
            "anchor {:?} vs predictions {:?}",
            anchor.dim(),
            probs.dim()
        )));
    }
    let n = probs.nrows() as f64;
    let mut value = 0.0;
    let mut grad = Array2::zeros(probs.raw_dim());
    for ((idx, &p), g) in probs.indexed_iter().zip(grad.iter_mut()) {
        let a = anchor[idx];
        value -= a * clamped_ln(p);
        *g = -a * d_clamped_ln(p) / n;
    }
    Ok((value / n, grad))
}

fn hard_ce_with_grad(probs: ArrayView2<f64>, targets: &[usize]) -> Result<(f64, Array2<f64>)> {
    let (n, c) = probs.dim();
    if targets.len() != n {
        return Err(Error::Shape(format!("{} targets for {n} rows", targets.len())));
    }
    let mut value = 0.0;
    let mut grad = Array2::zeros((n, c));
    for (i, &y) in targets.iter().enumerate() {
        if y >= c {
            return Err(Error::Validation(format!("target {y} outside {c} classes")));
        }
        let p = probs[[i, y]];
        value -= clamped_ln(p);
        grad[[i, y]] = -d_clamped_ln(p) / n as f64;
    }
    Ok((value / n as f64, grad))
}

/// Loss value and dL/dP for a matrix of softmax rows.
pub fn loss_with_prob_grad(probs: ArrayView2<f64>, loss: &Loss) -> Result<(f64, Array2<f64>)> {
    match *loss {
        Loss::CrossEntropy { targets } => hard_ce_with_grad(probs, targets),
        Loss::WeightedMi {
            class_weights,
            marginal,
        } => {
            let (mi, grad) = weighted_mi_with_grad(probs, class_weights, marginal)?;
            Ok((-mi, -grad))
        }
        Loss::HdToAnchor { anchor } => anchor_ce_with_grad(probs, anchor),
        Loss::Composite {
            alpha,
            beta,
            class_weights,
            marginal,
            anchor,
            mi_scale,
            hd_scale,
        } => {
            let mut value = 0.0;
            let mut grad = Array2::zeros(probs.raw_dim());
            let mi_coef = alpha * mi_scale;
            if mi_coef != 0.0 {
                let (mi, g) = weighted_mi_with_grad(probs, class_weights, marginal)?;
                value -= mi_coef * mi;
                grad.scaled_add(-mi_coef, &g);
            }
            let hd_coef = beta * hd_scale;
            if hd_coef != 0.0 {
                let anchor = anchor.ok_or_else(|| {
                    Error::Config("composite loss with beta > 0 needs anchor rows".into())
                })?;
                let (hd, g) = anchor_ce_with_grad(probs, anchor)?;
                value += hd_coef * hd;
                grad.scaled_add(hd_coef, &g);
            }
            Ok((value, grad))
        }
    }
}
