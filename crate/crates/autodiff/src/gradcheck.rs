//! Central finite differences, used to verify the analytic backward rules.
//! Only forward evaluation is involved, so the check is independent of the
//! backward code it audits.

use crate::tensor::Tensor;

/// Relative error with an absolute floor: `|a - n| / max(|a|, |n|)`, or zero
/// when the absolute difference is within `abs_floor`.
pub fn relative_error(analytic: f64, numeric: f64, abs_floor: f64) -> f64 {
    let diff = (analytic - numeric).abs();
    if diff <= abs_floor {
        0.0
    } else {
        diff / analytic.abs().max(numeric.abs())
    }
}

/// Numerical gradient of `f` at `x` with step `h`.
pub fn numeric_gradient<F>(x: &Tensor, h: f64, mut f: F) -> Tensor
where
    F: FnMut(&Tensor) -> f64,
{
    let mut grad = Tensor::zeros(x.rows(), x.cols());
    let mut probe = x.clone();
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h;
        let plus = f(&probe);
        probe.data_mut()[i] = orig - h;
        let minus = f(&probe);
        probe.data_mut()[i] = orig;
        grad.data_mut()[i] = (plus - minus) / (2.0 * h);
    }
    grad
}

/// Largest elementwise [`relative_error`] between two gradients. Any NaN
/// counts as an infinite error.
pub fn max_relative_error(analytic: &Tensor, numeric: &Tensor, abs_floor: f64) -> f64 {
    analytic
        .data()
        .iter()
        .zip(numeric.data())
        .map(|(&a, &n)| relative_error(a, n, abs_floor))
        .map(|e| if e.is_nan() { f64::INFINITY } else { e })
        .fold(0.0, f64::max)
}

/// Largest elementwise absolute difference; NaN counts as infinite.
pub fn max_abs_error(analytic: &Tensor, numeric: &Tensor) -> f64 {
    analytic
        .data()
        .iter()
        .zip(numeric.data())
        .map(|(&a, &n)| (a - n).abs())
        .map(|e| if e.is_nan() { f64::INFINITY } else { e })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn central_difference_of_a_cubic() {
        let x = Tensor::from_vec(1, 2, vec![1.0, -2.0]).unwrap();
        let g = numeric_gradient(&x, 1e-3, |t| t.data().iter().map(|v| v * v * v).sum());
        assert!((g.data()[0] - 3.0).abs() < 1e-5);
        assert!((g.data()[1] - 12.0).abs() < 1e-5);
    }

    #[test]
    fn nan_is_never_within_tolerance() {
        let a = Tensor::from_vec(1, 2, vec![1.0, f64::NAN]).unwrap();
        let n = Tensor::from_vec(1, 2, vec![1.0, 0.0]).unwrap();
        assert_eq!(max_relative_error(&a, &n, 1e-6), f64::INFINITY);
        assert_eq!(max_abs_error(&a, &n), f64::INFINITY);
    }

    #[test]
    fn floor_hides_tiny_differences() {
        assert_eq!(relative_error(1e-9, 2e-9, 1e-6), 0.0);
        assert!((relative_error(1.0, 1.1, 1e-6) - 0.1 / 1.1).abs() < 1e-12);
    }
}
