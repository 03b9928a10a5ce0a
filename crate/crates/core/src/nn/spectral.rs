//! Spectral normalization by power iteration.

use ndarray::{Array1, Array2, ArrayView2};
use rand::Rng;

use super::{lit, unit_normal_vector, Real};

const SIGMA_FLOOR: f64 = 1e-12;

fn normalized<F: Real>(v: Array1<F>) -> Array1<F> {
    let norm = v.dot(&v).sqrt().max(lit(SIGMA_FLOOR));
    v / norm
}

/// Divide `weight` (rows = outputs) by the top singular value estimated with
/// `iters` power iterations started from `u`, which is updated in place.
pub fn spectral_normalize<F: Real>(weight: &Array2<F>, iters: usize, u: &mut Array1<F>) -> Array2<F> {
    let mut state = SpectralNorm {
        u: u.clone(),
        v: Array1::zeros(weight.ncols()),
    };
    let (normalized, _) = state.normalize(weight.view(), iters.max(1));
    *u = state.u;
    normalized
}

/// Persistent left/right singular vector estimates for one weight.
#[derive(Clone, Debug)]
pub struct SpectralNorm<F> {
    pub u: Array1<F>,
    pub v: Array1<F>,
}

impl<F: Real> SpectralNorm<F> {
    pub fn new<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Self {
        Self {
            u: unit_normal_vector(rows, rng),
            v: unit_normal_vector(cols, rng),
        }
    }

    /// Runs `iters` power iterations (zero reuses the stored vectors) and
    /// returns `weight / sigma` together with `sigma = u' W v`.
    pub fn normalize(&mut self, weight: ArrayView2<F>, iters: usize) -> (Array2<F>, F) {
        for _ in 0..iters {
            self.v = normalized(weight.t().dot(&self.u));
            self.u = normalized(weight.dot(&self.v));
        }
        let sigma = self.u.dot(&weight.dot(&self.v)).max(lit(SIGMA_FLOOR));
        (weight.mapv(|w| w / sigma), sigma)
    }

    /// Gradient with respect to the raw weight given the gradient with
    /// respect to the normalized weight, holding `u` and `v` fixed:
    /// `(G - <G, W/sigma> u v') / sigma`.
    pub fn backward(&self, grad_normalized: &Array2<F>, normalized: &Array2<F>, sigma: F) -> Array2<F> {
        let inner: F = grad_normalized
            .iter()
            .zip(normalized.iter())
            .map(|(&g, &w)| g * w)
            .sum();
        let mut out = grad_normalized.clone();
        for (i, mut row) in out.rows_mut().into_iter().enumerate() {
            let ui = self.u[i] * inner;
            row.zip_mut_with(&self.v, |g, &vj| *g -= ui * vj);
        }
        out.mapv_inplace(|g| g / sigma);
        out
    }
}
