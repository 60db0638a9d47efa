use crate::error::{Error, Result};
use crate::tensor::Scalar;

/// Smallest probability fed to the logarithm.
pub const PROB_FLOOR: f64 = 1e-7;

/// Index of the single 1.0 entry, or an error if `truth` is not one-hot.
pub fn one_hot_index<T: Scalar>(truth: &[T]) -> Result<usize> {
    let mut hot = None;
    for (i, &v) in truth.iter().enumerate() {
        let v = v.to_f64();
        if v == 1.0 && hot.is_none() {
            hot = Some(i);
        } else if v != 0.0 {
            return Err(Error::invalid(format!("label is not one-hot: {truth:?}")));
        }
    }
    hot.ok_or_else(|| Error::invalid(format!("label is not one-hot: {truth:?}")))
}

/// `−Σ truth·ln(pred)` with predictions clamped to `[PROB_FLOOR, 1]`.
pub fn cross_entropy<T: Scalar>(pred: &[T], truth: &[T]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::Dimension {
            op: "cross_entropy",
            left: vec![pred.len()],
            right: vec![truth.len()],
        });
    }
    let c = one_hot_index(truth)?;
    Ok(-pred[c].to_f64().clamp(PROB_FLOOR, 1.0).ln())
}

/// Gradient of [`cross_entropy`] with respect to `pred`; below the floor the
/// derivative is taken at the floor so saturated mistakes still get a signal.
pub fn cross_entropy_grad<T: Scalar>(pred: &[T], truth: &[T]) -> Result<Vec<T>> {
    if pred.len() != truth.len() {
        return Err(Error::Dimension {
            op: "cross_entropy_grad",
            left: vec![pred.len()],
            right: vec![truth.len()],
        });
    }
    let c = one_hot_index(truth)?;
    let mut g = vec![T::ZERO; pred.len()];
    g[c] = T::from_f64(-1.0 / pred[c].to_f64().clamp(PROB_FLOOR, 1.0));
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_prediction_has_zero_loss() {
        let t = [1.0f32, 0.0, 0.0, 0.0, 0.0];
        assert!(cross_entropy(&t, &t).unwrap() <= 1e-6);
    }

    #[test]
    fn analytic_values() {
        let uniform = [0.2f64; 5];
        let t = [0.0, 0.0, 1.0, 0.0, 0.0];
        assert!((cross_entropy(&uniform, &t).unwrap() - 5f64.ln()).abs() < 1e-12);
        assert!((cross_entropy(&uniform, &t).unwrap() - 1.6094).abs() < 1e-4);
        let half = [0.5f64, 0.5, 0.0, 0.0, 0.0];
        let t2 = [0.0, 1.0, 0.0, 0.0, 0.0];
        assert!((cross_entropy(&half, &t2).unwrap() - 0.6931).abs() < 1e-4);
    }

    #[test]
    fn zero_probability_is_clamped() {
        let pred = [1.0f64, 0.0];
        let loss = cross_entropy(&pred, &[0.0, 1.0]).unwrap();
        assert!((loss - (-PROB_FLOOR.ln())).abs() < 1e-12);
        assert!(cross_entropy_grad(&pred, &[0.0, 1.0]).unwrap()[1].is_finite());
    }

    #[test]
    fn rejects_non_one_hot_truth() {
        let p = [0.5f64, 0.5];
        assert!(cross_entropy(&p, &[0.5, 0.5]).is_err());
        assert!(cross_entropy(&p, &[1.0, 1.0]).is_err());
        assert!(cross_entropy(&p, &[0.0, 0.0]).is_err());
        assert!(cross_entropy(&p, &[1.0]).is_err());
    }
}
