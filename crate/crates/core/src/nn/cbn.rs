//! Batch normalization with condition-dependent affine parameters.
//!
//! For a feature map `c` and a sample with condition `y` the output is
//! `gamma_c(y) * (x - mu_c) / sqrt(var_c + eps) + beta_c(y)`:
//!
//! | kind         | `gamma_c(y)`              | `beta_c(y)`             |
//! |--------------|---------------------------|-------------------------|
//! | `Plain`      | `g_c`                     | `b_c`                   |
//! | `FixedScale` | `g_c`                     | `w_c * y + b_c`         |
//! | `Standard`   | `v_c * y + g_c`           | `w_c * y + b_c`         |
//!
//! With `FixedScale`, the per-map output variance is `g_c^2 * var/(var+eps)`
//! whatever the condition, and the per-map mean moves exactly along the line
//! `w_c * y + b_c`.

use ndarray::{Array1, Array4, Ix1};
use serde::{Deserialize, Serialize};

use super::{join, lit, Mode, Module, Param, Real, Slot};
use crate::error::{Error, Result};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    /// Unconditional batch normalization.
    Plain,
    /// Condition-independent scale, shift affine in the condition.
    FixedScale,
    /// Scale and shift both affine in the condition.
    Standard,
}

#[derive(Clone)]
struct CbnCache<F> {
    xhat: Array4<F>,
    inv_std: Array1<F>,
    ys: Vec<F>,
    mode: Mode,
}

#[derive(Clone)]
pub struct ConditionalBatchNorm<F: Real> {
    kind: NormKind,
    eps: F,
    momentum: F,
    /// Condition-free scale `g`.
    pub gamma: Param<F, Ix1>,
    /// Scale slope `v` (`Standard` only).
    pub gamma_slope: Option<Param<F, Ix1>>,
    /// Shift intercept `b`.
    pub beta: Param<F, Ix1>,
    /// Shift slope `w` (absent for `Plain`).
    pub beta_slope: Option<Param<F, Ix1>>,
    pub running_mean: Array1<F>,
    pub running_var: Array1<F>,
    cache: Option<CbnCache<F>>,
}

impl<F: Real> ConditionalBatchNorm<F> {
    /// Identity-initialised layer: unit scale, zero shift, zero slopes.
    pub fn new(kind: NormKind, channels: usize) -> Self {
        let zeros = || Param::new(Array1::zeros(channels));
        Self {
            kind,
            eps: lit(BN_EPS),
            momentum: lit(BN_MOMENTUM),
            gamma: Param::new(Array1::ones(channels)),
            gamma_slope: (kind == NormKind::Standard).then(zeros),
            beta: zeros(),
            beta_slope: (kind != NormKind::Plain).then(zeros),
            running_mean: Array1::zeros(channels),
            running_var: Array1::ones(channels),
            cache: None,
        }
    }

    pub fn kind(&self) -> NormKind {
        self.kind
    }

    pub fn channels(&self) -> usize {
        self.gamma.value.len()
    }

    pub fn eps(&self) -> F {
        self.eps
    }

    pub fn momentum(&self) -> F {
        self.momentum
    }

    /// Weight of the newest batch in the running averages.
    pub fn set_momentum(&mut self, momentum: F) {
        self.momentum = momentum;
    }

    /// `gamma_c(y)` for every channel.
    pub fn scale_at(&self, y: F) -> Array1<F> {
        match &self.gamma_slope {
            Some(s) => &self.gamma.value + &s.value.mapv(|v| v * y),
            None => self.gamma.value.clone(),
        }
    }

    /// `beta_c(y)` for every channel.
    pub fn shift_at(&self, y: F) -> Array1<F> {
        match &self.beta_slope {
            Some(s) => &self.beta.value + &s.value.mapv(|v| v * y),
            None => self.beta.value.clone(),
        }
    }

    /// Normalizes `x` (NCHW) with one condition per batch element. Training
    /// mode uses batch statistics (batch of at least 2) and updates the
    /// running averages; eval mode uses the running averages.
    pub fn forward(&mut self, x: &Array4<F>, ys: &[F], mode: Mode) -> Result<Array4<F>> {
        let (n, c, h, w) = x.dim();
        if ys.len() != n {
            return Err(Error::Shape(format!("{} conditions for a batch of {n}", ys.len())));
        }
        if c != self.channels() {
            return Err(Error::Shape(format!("{c} channels into a {}-channel norm", self.channels())));
        }
        let m = n * h * w;
        let (mean, inv_std) = match mode {
            Mode::Train => {
                if n < 2 {
                    return Err(Error::invalid("batch statistics need a batch of at least 2"));
                }
                let mut mean = Array1::zeros(c);
                let mut var = Array1::zeros(c);
                let mf: F = lit(m as f64);
                for ci in 0..c {
                    let plane = x.index_axis(ndarray::Axis(1), ci);
                    let mu = plane.sum() / mf;
                    let v = plane.fold(F::zero(), |acc, &xv| acc + (xv - mu) * (xv - mu)) / mf;
                    mean[ci] = mu;
                    var[ci] = v;
                }
                let one = F::one();
                let unbias: F = lit(m as f64 / (m.max(2) - 1) as f64);
                self.running_mean = &self.running_mean * (one - self.momentum) + &mean * self.momentum;
                self.running_var =
                    &self.running_var * (one - self.momentum) + &var.mapv(|v| v * unbias * self.momentum);
                let inv = var.mapv(|v| one / (v + self.eps).sqrt());
                (mean, inv)
            }
            Mode::Eval => {
                let inv = self.running_var.mapv(|v| F::one() / (v + self.eps).sqrt());
                (self.running_mean.clone(), inv)
            }
        };
        let mut xhat = x.to_owned();
        let mut out = Array4::zeros((n, c, h, w));
        for ni in 0..n {
            let scale = self.scale_at(ys[ni]);
            let shift = self.shift_at(ys[ni]);
            for ci in 0..c {
                let (mu, inv, g, b) = (mean[ci], inv_std[ci], scale[ci], shift[ci]);
                let mut xh = xhat.slice_mut(ndarray::s![ni, ci, .., ..]);
                xh.mapv_inplace(|v| (v - mu) * inv);
                out.slice_mut(ndarray::s![ni, ci, .., ..])
                    .zip_mut_with(&xh, |o, &v| *o = g * v + b);
            }
        }
        self.cache = Some(CbnCache {
            xhat,
            inv_std,
            ys: ys.to_vec(),
            mode,
        });
        Ok(out)
    }

    pub fn backward(&mut self, dy: &Array4<F>) -> Array4<F> {
        let cache = self.cache.take().expect("backward without forward");
        let (n, c, h, w) = dy.dim();
        let mut dxhat = Array4::zeros((n, c, h, w));
        for ni in 0..n {
            let y = cache.ys[ni];
            let scale = self.scale_at(y);
            for ci in 0..c {
                let g = dy.slice(ndarray::s![ni, ci, .., ..]);
                let xh = cache.xhat.slice(ndarray::s![ni, ci, .., ..]);
                let sum_g = g.sum();
                let sum_gx: F = g.iter().zip(xh.iter()).map(|(&a, &b)| a * b).sum();
                self.gamma.grad[ci] += sum_gx;
                self.beta.grad[ci] += sum_g;
                if let Some(s) = self.gamma_slope.as_mut() {
                    s.grad[ci] += sum_gx * y;
                }
                if let Some(s) = self.beta_slope.as_mut() {
                    s.grad[ci] += sum_g * y;
                }
                let gc = scale[ci];
                dxhat
                    .slice_mut(ndarray::s![ni, ci, .., ..])
                    .zip_mut_with(&g, |d, &gv| *d = gv * gc);
            }
        }
        match cache.mode {
            Mode::Eval => {
                for ci in 0..c {
                    let inv = cache.inv_std[ci];
                    dxhat.index_axis_mut(ndarray::Axis(1), ci).mapv_inplace(|v| v * inv);
                }
                dxhat
            }
            Mode::Train => {
                let mf: F = lit((n * h * w) as f64);
                let mut dx = dxhat;
                for ci in 0..c {
                    let xh = cache.xhat.index_axis(ndarray::Axis(1), ci);
                    let mut d = dx.index_axis_mut(ndarray::Axis(1), ci);
                    let mean_d = d.sum() / mf;
                    let mean_dx: F = d.iter().zip(xh.iter()).map(|(&a, &b)| a * b).sum::<F>() / mf;
                    let inv = cache.inv_std[ci];
                    d.zip_mut_with(&xh, |v, &xv| *v = inv * (*v - mean_d - xv * mean_dx));
                }
                dx
            }
        }
    }
}

impl<F: Real> Module<F> for ConditionalBatchNorm<F> {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, Slot<'_, F>)) {
        f(&join(prefix, "gamma"), self.gamma.slot());
        if let Some(s) = self.gamma_slope.as_mut() {
            f(&join(prefix, "gamma_slope"), s.slot());
        }
        f(&join(prefix, "beta"), self.beta.slot());
        if let Some(s) = self.beta_slope.as_mut() {
            f(&join(prefix, "beta_slope"), s.slot());
        }
        f(&join(prefix, "running_mean"), Slot::Buffer(self.running_mean.view_mut().into_dyn()));
        f(&join(prefix, "running_var"), Slot::Buffer(self.running_var.view_mut().into_dyn()));
    }
}
