use crate::error::{Error, Result};

use super::Matrix;

/// Central-difference gradient of a scalar function of a matrix:
/// `(f(x + eps·e) - f(x - eps·e)) / (2·eps)` for every entry.
pub fn finite_difference_gradient<F>(f: F, at: &Matrix, eps: f64) -> Result<Matrix>
where
    F: Fn(&Matrix) -> Result<f64>,
{
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::invalid(
            "finite_difference_gradient",
            format!("eps must be > 0, got {eps}"),
        ));
    }
    let mut probe = at.clone();
    let mut grad = Matrix::zeros(at.rows(), at.cols());
    for idx in 0..at.as_slice().len() {
        let orig = probe.as_slice()[idx];
        probe.as_mut_slice()[idx] = orig + eps;
        let up = f(&probe)?;
        probe.as_mut_slice()[idx] = orig - eps;
        let down = f(&probe)?;
        probe.as_mut_slice()[idx] = orig;
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::NonFinite {
                op: "finite_difference_gradient",
            });
        }
        grad.as_mut_slice()[idx] = (up - down) / (2.0 * eps);
    }
    Ok(grad)
}
