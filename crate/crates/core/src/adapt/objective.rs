use ndarray::ArrayView2;

use super::ClassProportion;
use crate::diffcore::{anchor_ce_with_grad, weighted_mi_with_grad, Marginal};
use crate::error::{Error, Result};
use crate::prediction::PredictionTensor;

fn check_stochastic(preds: &ArrayView2<f64>) -> Result<()> {
    if preds.nrows() == 0 {
        return Err(Error::Shape("need at least one prediction row".into()));
    }
    for (r, row) in preds.outer_iter().enumerate() {
        let s = row.sum();
        if (s - 1.0).abs() > 1e-9 || row.iter().any(|&p| !(p >= 0.0)) {
            return Err(Error::Validation(format!("row {r} is not a probability vector")));
        }
    }
    Ok(())
}

/// `I(X; Ŷ) = H(mean row) − mean row entropy`, in nats.
pub fn mutual_information(preds: ArrayView2<f64>) -> Result<f64> {
    check_stochastic(&preds)?;
    let ones = vec![1.0; preds.ncols()];
    Ok(weighted_mi_with_grad(preds, &ones, Marginal::Batch)?.0)
}

/// `I_W = −Σ_c W_c p̄_c ln p̄_c − mean_n H(P_n)`: the marginal-entropy term is
/// weighted per class by the estimated proportions, the conditional term is
/// not.
pub fn weighted_mutual_information(preds: ArrayView2<f64>, w: &ClassProportion) -> Result<f64> {
    check_stochastic(&preds)?;
    w.validate()?;
    if w.weights.len() != preds.ncols() {
        return Err(Error::Shape(format!(
            "{} class proportions for {} classes",
            w.weights.len(),
            preds.ncols()
        )));
    }
    Ok(weighted_mi_with_grad(preds, &w.weights, Marginal::Batch)?.0)
}

/// Mean over members and samples of `CE(anchor ‖ member) = −Σ_c a_c ln h_c`.
pub fn hypothesis_disparity(preds: &PredictionTensor, anchor: ArrayView2<f64>) -> Result<f64> {
    hypothesis_disparity_over(preds, anchor, None)
}

/// As [`hypothesis_disparity`], leaving member `skip` out of the mean.
pub fn hypothesis_disparity_over(
    preds: &PredictionTensor,
    anchor: ArrayView2<f64>,
    skip: Option<usize>,
) -> Result<f64> {
    let included: Vec<usize> = (0..preds.m()).filter(|&i| Some(i) != skip).collect();
    if included.is_empty() {
        return Err(Error::Config("no members left for hypothesis disparity".into()));
    }
    let mut total = 0.0;
    for &i in &included {
        total += anchor_ce_with_grad(preds.member(i), anchor)?.0;
    }
    Ok(total / included.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn uniform_rows_have_zero_mi() {
        let p = ndarray::Array2::from_elem((4, 3), 1.0 / 3.0);
        assert!(mutual_information(p.view()).unwrap().abs() < 1e-15);
    }

    #[test]
    fn split_one_hot_rows_have_ln2() {
        let p = array![[1.0, 0.0], [0.0, 1.0], [1.0, 0.0], [0.0, 1.0]];
        assert!((mutual_information(p.view()).unwrap() - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn weighted_mi_examples() {
        let p = array![[1.0, 0.0], [0.0, 1.0]];
        let w = ClassProportion::from_weights(vec![0.75, 0.25]).unwrap();
        let v = weighted_mutual_information(p.view(), &w).unwrap();
        assert!((v - 0.5 * 2f64.ln()).abs() < 1e-12);
        assert!((v - 0.346_573_590_279_972_6).abs() < 1e-12);
    }

    #[test]
    fn weighted_mi_uniform_scales_marginal() {
        let p = array![[0.7, 0.2, 0.1], [0.1, 0.3, 0.6], [0.25, 0.5, 0.25]];
        let w = ClassProportion::uniform(3);
        let mean = [0.35, 1.0 / 3.0, 0.95 / 3.0];
        let h_marg: f64 = -mean.iter().map(|&q: &f64| q * q.ln()).sum::<f64>();
        let h_cond: f64 = p
            .outer_iter()
            .map(|r| -r.iter().map(|&q: &f64| q * q.ln()).sum::<f64>())
            .sum::<f64>()
            / 3.0;
        let v = weighted_mutual_information(p.view(), &w).unwrap();
        assert!((v - (h_marg / 3.0 - h_cond)).abs() < 1e-12);
    }

    #[test]
    fn weighted_mi_rejects_bad_weights() {
        let p = array![[0.5, 0.5]];
        let w = ClassProportion {
            weights: vec![0.6, 0.6],
            source: super::super::ProportionSource::Given,
        };
        assert!(matches!(weighted_mutual_information(p.view(), &w), Err(Error::Validation(_))));
        let w3 = ClassProportion::uniform(3);
        assert!(matches!(weighted_mutual_information(p.view(), &w3), Err(Error::Shape(_))));
    }

    #[test]
    fn hd_closed_forms() {
        let half = array![[0.5, 0.5]];
        let t = PredictionTensor::new(vec![half.clone()]).unwrap();
        assert!((hypothesis_disparity(&t, half.view()).unwrap() - 2f64.ln()).abs() < 1e-15);
        let onehot = array![[1.0, 0.0]];
        assert!((hypothesis_disparity(&t, onehot.view()).unwrap() - 2f64.ln()).abs() < 1e-15);
    }
}
