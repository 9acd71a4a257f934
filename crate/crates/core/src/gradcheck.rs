//! Central finite-difference check of analytic gradients.

use crate::error::{Error, Result};
use crate::tensor::DenseMatrix;

/// Compares analytic gradients against central differences.
///
/// `loss_fn` maps a parameter list to `(loss, gradients)` with gradients in
/// the same order and shapes as the parameters. Returns the maximum over all
/// entries of `|analytic − numeric| / max(1, |numeric|)`.
pub fn grad_check<F>(mut loss_fn: F, params: &[DenseMatrix], h: f64) -> Result<f64>
where
    F: FnMut(&[DenseMatrix]) -> Result<(f64, Vec<DenseMatrix>)>,
{
    if !(1e-6..=1e-4).contains(&h) {
        return Err(Error::param(format!("step {h} outside [1e-6, 1e-4]")));
    }
    let (base, analytic) = loss_fn(params)?;
    if !base.is_finite() {
        return Err(Error::NonFinite("grad_check base loss".into()));
    }
    if analytic.len() != params.len() {
        return Err(Error::param(format!(
            "loss_fn returned {} gradients for {} parameters",
            analytic.len(),
            params.len()
        )));
    }
    for (g, p) in analytic.iter().zip(params) {
        if g.shape() != p.shape() {
            return Err(Error::dim("grad_check", g.shape(), p.shape()));
        }
    }

    let mut work = params.to_vec();
    let mut worst = 0.0f64;
    for t in 0..params.len() {
        for e in 0..params[t].data().len() {
            let orig = params[t].data()[e];
            work[t].data_mut()[e] = orig + h;
            let plus = loss_fn(&work)?.0;
            work[t].data_mut()[e] = orig - h;
            let minus = loss_fn(&work)?.0;
            work[t].data_mut()[e] = orig;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::NonFinite(format!("grad_check probe of tensor {t}")));
            }
            let numeric = (plus - minus) / (2.0 * h);
            let err = (analytic[t].data()[e] - numeric).abs() / numeric.abs().max(1.0);
            worst = worst.max(err);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sum_of_squares(p: &[DenseMatrix]) -> Result<(f64, Vec<DenseMatrix>)> {
        let loss = p.iter().map(DenseMatrix::frobenius_sq).sum();
        Ok((loss, p.iter().map(|m| m.scale(2.0)).collect()))
    }

    #[test]
    fn quadratic_is_exact() {
        let p = vec![
            DenseMatrix::from_rows(&[[1.0, -2.0, 3.5]]),
            DenseMatrix::from_rows(&[[0.25], [-7.0]]),
        ];
        let err = grad_check(sum_of_squares, &p, 1e-5).unwrap();
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn wrong_gradient_is_detected() {
        let p = vec![DenseMatrix::from_rows(&[[1.0, 2.0]])];
        let f = |p: &[DenseMatrix]| Ok((p[0].frobenius_sq(), vec![p[0].scale(3.0)]));
        assert!(grad_check(f, &p, 1e-5).unwrap() > 0.4);
    }

    #[test]
    fn rejects_bad_step_and_nan() {
        let p = vec![DenseMatrix::zeros(1, 1)];
        assert!(grad_check(sum_of_squares, &p, 1e-2).is_err());
        let nan = |p: &[DenseMatrix]| Ok((f64::NAN, vec![p[0].clone()]));
        assert!(matches!(grad_check(nan, &p, 1e-5), Err(Error::NonFinite(_))));
    }
}
