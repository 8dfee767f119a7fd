use crate::error::{Error, Result};

/// Compares the analytic gradient returned by `loss` with central
/// differences and reports the worst relative error
/// `|a − n| / (|a| + |n| + 1e-12)` over all coordinates.
pub fn finite_diff_check<F>(mut loss: F, params: &[f64], eps: f64) -> Result<f64>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    if !(1e-7..=1e-3).contains(&eps) {
        return Err(Error::InvalidArgument(format!("finite-difference step {eps} outside [1e-7, 1e-3]")));
    }
    let (value, analytic) = loss(params);
    if !value.is_finite() {
        return Err(Error::Numeric("loss is not finite at the base point".into()));
    }
    if analytic.len() != params.len() {
        return Err(Error::shape("finite_diff_check", params.len(), analytic.len()));
    }
    let mut theta = params.to_vec();
    let mut worst: f64 = 0.0;
    for i in 0..theta.len() {
        let orig = theta[i];
        theta[i] = orig + eps;
        let (plus, _) = loss(&theta);
        theta[i] = orig - eps;
        let (minus, _) = loss(&theta);
        theta[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::Numeric(format!("loss not finite when perturbing coordinate {i}")));
        }
        let numeric = (plus - minus) / (2.0 * eps);
        let a = analytic[i];
        let rel = (a - numeric).abs() / (a.abs() + numeric.abs() + 1e-12);
        worst = worst.max(rel);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_is_exact() {
        let theta = vec![0.3, -1.7, 2.2, 0.05];
        let err = finite_diff_check(|p| (0.5 * p.iter().map(|x| x * x).sum::<f64>(), p.to_vec()), &theta, 1e-5).unwrap();
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn doubled_gradient_reports_one_third() {
        let theta = vec![1.5, -0.4];
        let err = finite_diff_check(
            |p| (0.5 * p.iter().map(|x| x * x).sum::<f64>(), p.iter().map(|x| 2.0 * x).collect()),
            &theta,
            1e-5,
        )
        .unwrap();
        assert!((err - 1.0 / 3.0).abs() < 1e-6, "{err}");
    }

    #[test]
    fn non_finite_loss_is_reported() {
        let r = finite_diff_check(|_| (f64::NAN, vec![0.0]), &[1.0], 1e-5);
        assert!(matches!(r, Err(Error::Numeric(_))));
    }

    #[test]
    fn step_outside_range_is_rejected() {
        assert!(finite_diff_check(|p| (p[0], vec![1.0]), &[1.0], 1e-2).is_err());
    }
}
