//! Finite-difference helpers for verifying tape gradients.
//!
//! These only ever evaluate the forward function, so they stay independent of
//! the backward rules they check.

use crate::matrix::Matrix;

/// Central differences `(f(x + h e_k) − f(x − h e_k)) / 2h` for every entry.
pub fn central_difference(x: &Matrix, h: f64, mut f: impl FnMut(&Matrix) -> f64) -> Matrix {
    let mut grad = Matrix::zeros(x.rows(), x.cols());
    let mut probe = x.clone();
    for k in 0..x.len() {
        let orig = probe.as_slice()[k];
        probe.as_mut_slice()[k] = orig + h;
        let plus = f(&probe);
        probe.as_mut_slice()[k] = orig - h;
        let minus = f(&probe);
        probe.as_mut_slice()[k] = orig;
        grad.as_mut_slice()[k] = (plus - minus) / (2.0 * h);
    }
    grad
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, falling back to the absolute difference when
/// both gradients vanish.
pub fn relative_error(analytic: &Matrix, numeric: &Matrix) -> f64 {
    let diff = analytic.sub(numeric).expect("gradient shapes agree").frobenius();
    let scale = analytic.frobenius().max(numeric.frobenius());
    if scale < 1e-10 {
        diff
    } else {
        diff / scale
    }
}
