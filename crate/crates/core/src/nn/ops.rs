//! Stateless elementwise and resampling operations with their adjoints.

use ndarray::{Array, Array4, Dimension, Zip};

use super::{lit, Real};

pub fn relu<F: Real, D: Dimension>(x: &Array<F, D>) -> Array<F, D> {
    x.mapv(|v| v.max(F::zero()))
}

/// Adjoint of [`relu`] evaluated at the forward input `x`.
pub fn relu_backward<F: Real, D: Dimension>(dy: &Array<F, D>, x: &Array<F, D>) -> Array<F, D> {
    let mut out = dy.clone();
    Zip::from(&mut out).and(x).for_each(|g, &v| {
        if v <= F::zero() {
            *g = F::zero();
        }
    });
    out
}

/// Nearest-neighbour 2x upsampling of NCHW maps.
pub fn upsample2<F: Real>(x: &Array4<F>) -> Array4<F> {
    let (n, c, h, w) = x.dim();
    Array4::from_shape_fn((n, c, 2 * h, 2 * w), |(i, j, y, z)| x[[i, j, y / 2, z / 2]])
}

pub fn upsample2_backward<F: Real>(dy: &Array4<F>) -> Array4<F> {
    let (n, c, h2, w2) = dy.dim();
    let mut dx = Array4::zeros((n, c, h2 / 2, w2 / 2));
    for ((i, j, y, z), &g) in dy.indexed_iter() {
        dx[[i, j, y / 2, z / 2]] += g;
    }
    dx
}

/// 2x2 average pooling with stride 2.
pub fn avg_pool2<F: Real>(x: &Array4<F>) -> Array4<F> {
    let (n, c, h, w) = x.dim();
    let quarter: F = lit(0.25);
    Array4::from_shape_fn((n, c, h / 2, w / 2), |(i, j, y, z)| {
        let (y, z) = (2 * y, 2 * z);
        (x[[i, j, y, z]] + x[[i, j, y, z + 1]] + x[[i, j, y + 1, z]] + x[[i, j, y + 1, z + 1]]) * quarter
    })
}

pub fn avg_pool2_backward<F: Real>(dy: &Array4<F>) -> Array4<F> {
    let (n, c, h, w) = dy.dim();
    let quarter: F = lit(0.25);
    Array4::from_shape_fn((n, c, 2 * h, 2 * w), |(i, j, y, z)| dy[[i, j, y / 2, z / 2]] * quarter)
}
