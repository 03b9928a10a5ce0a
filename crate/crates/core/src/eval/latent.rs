use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::LATENT_DIM;

/// Redraws allowed per component before giving up.
pub const MAX_REDRAWS: usize = 1000;

/// Latent truncation: components beyond `threshold` in magnitude are
/// redrawn. `None` samples the plain standard normal.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TruncationSpec {
    pub threshold: Option<f64>,
}

impl TruncationSpec {
    pub fn unbounded() -> Self {
        Self { threshold: None }
    }

    pub fn new(threshold: f64) -> Result<Self> {
        if !(threshold > 0.0 && threshold.is_finite()) {
            return Err(Error::invalid(format!("truncation threshold {threshold} must be positive")));
        }
        Ok(Self {
            threshold: Some(threshold),
        })
    }

    pub fn label(&self) -> String {
        match self.threshold {
            Some(t) => format!("truncated at {t}"),
            None => "non-truncated".into(),
        }
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        let v: f64 = StandardNormal.sample(rng);
        let Some(t) = self.threshold else { return Ok(v) };
        if v.abs() <= t {
            return Ok(v);
        }
        for _ in 0..MAX_REDRAWS {
            let v: f64 = StandardNormal.sample(rng);
            if v.abs() <= t {
                return Ok(v);
            }
        }
        Err(Error::NonConvergence {
            what: "latent truncation",
            iterations: MAX_REDRAWS,
            detail: format!("no standard normal draw within ±{t}"),
        })
    }
}

/// One latent vector.
pub fn sample_latent<R: Rng + ?Sized>(trunc: &TruncationSpec, rng: &mut R) -> Result<Array1<f64>> {
    (0..LATENT_DIM).map(|_| trunc.draw(rng)).collect()
}

/// `n` latent vectors as rows, in the network's precision.
pub fn sample_latents<R: Rng + ?Sized>(trunc: &TruncationSpec, n: usize, rng: &mut R) -> Result<Array2<f32>> {
    let mut out = Array2::zeros((n, LATENT_DIM));
    for v in out.iter_mut() {
        *v = trunc.draw(rng)? as f32;
    }
    Ok(out)
}
