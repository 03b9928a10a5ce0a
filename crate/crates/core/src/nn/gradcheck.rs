//! Central finite differences for unit tests of backward passes.

use ndarray::{Array, Dimension};

const STEP: f64 = 1e-5;

/// Scalar projection `sum(y * r)` used to turn a tensor output into a loss.
pub fn project<D: Dimension>(y: &Array<f64, D>, r: &Array<f64, D>) -> f64 {
    y.iter().zip(r.iter()).map(|(a, b)| a * b).sum()
}

pub fn numeric_grad<D: Dimension>(x: &Array<f64, D>, mut f: impl FnMut(&Array<f64, D>) -> f64) -> Array<f64, D> {
    let mut probe = x.clone();
    let mut grad = Array::zeros(x.raw_dim());
    for i in 0..x.len() {
        let orig = probe.as_slice_mut().unwrap()[i];
        probe.as_slice_mut().unwrap()[i] = orig + STEP;
        let up = f(&probe);
        probe.as_slice_mut().unwrap()[i] = orig - STEP;
        let down = f(&probe);
        probe.as_slice_mut().unwrap()[i] = orig;
        grad.as_slice_mut().unwrap()[i] = (up - down) / (2.0 * STEP);
    }
    grad
}

/// Elementwise relative error, with the denominator floored at a small
/// fraction of the largest gradient entry.
pub fn max_rel_error<D: Dimension>(analytic: &Array<f64, D>, numeric: &Array<f64, D>) -> f64 {
    assert_eq!(analytic.shape(), numeric.shape());
    let scale = numeric.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = (1e-3 * scale).max(1e-10);
    analytic
        .iter()
        .zip(numeric.iter())
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}

pub fn assert_grads_close<D: Dimension>(analytic: &Array<f64, D>, numeric: &Array<f64, D>, tol: f64) {
    let err = max_rel_error(analytic, numeric);
    assert!(err <= tol, "relative gradient error {err:.3e} > {tol:.1e}");
}
