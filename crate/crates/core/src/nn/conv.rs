//! Convolution and dense layers, optionally spectrally normalized.

use ndarray::{Array1, Array2, Array4, Axis, Ix1, Ix2, Ix4};
use rand::Rng;

use super::{glorot, join, Mode, Module, Param, Real, Slot, SpectralNorm};

/// Unfold `k x k` same-padded patches of an NCHW tensor into a
/// `(C*k*k, N*H*W)` matrix.
fn im2col<F: Real>(x: &Array4<F>, k: usize) -> Array2<F> {
    let (n, c, h, w) = x.dim();
    let pad = (k / 2) as isize;
    let hw = h * w;
    let x = x.as_standard_layout();
    let xs = x.as_slice().expect("contiguous");
    let mut cols = vec![F::zero(); c * k * k * n * hw];
    for ci in 0..c {
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let dy = ky as isize - pad;
                let dx = kx as isize - pad;
                let x0 = (-dx).max(0) as usize;
                let x1 = (w as isize - dx).min(w as isize).max(0) as usize;
                for ni in 0..n {
                    let src = &xs[(ni * c + ci) * hw..][..hw];
                    let dst = &mut cols[(row * n + ni) * hw..][..hw];
                    for y in 0..h {
                        let sy = y as isize + dy;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        let srow = &src[sy as usize * w..][..w];
                        let drow = &mut dst[y * w..][..w];
                        for xx in x0..x1 {
                            drow[xx] = srow[(xx as isize + dx) as usize];
                        }
                    }
                }
            }
        }
    }
    Array2::from_shape_vec((c * k * k, n * hw), cols).expect("im2col shape")
}

/// Adjoint of [`im2col`].
fn col2im<F: Real>(cols: &Array2<F>, shape: (usize, usize, usize, usize), k: usize) -> Array4<F> {
    let (n, c, h, w) = shape;
    let pad = (k / 2) as isize;
    let hw = h * w;
    let cols = cols.as_standard_layout();
    let cs = cols.as_slice().expect("contiguous");
    let mut out = vec![F::zero(); n * c * hw];
    for ci in 0..c {
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let dy = ky as isize - pad;
                let dx = kx as isize - pad;
                let x0 = (-dx).max(0) as usize;
                let x1 = (w as isize - dx).min(w as isize).max(0) as usize;
                for ni in 0..n {
                    let src = &cs[(row * n + ni) * hw..][..hw];
                    let dst = &mut out[(ni * c + ci) * hw..][..hw];
                    for y in 0..h {
                        let sy = y as isize + dy;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        let drow = &mut dst[sy as usize * w..][..w];
                        let srow = &src[y * w..][..w];
                        for xx in x0..x1 {
                            drow[(xx as isize + dx) as usize] += srow[xx];
                        }
                    }
                }
            }
        }
    }
    Array4::from_shape_vec(shape, out).expect("col2im shape")
}

/// `(N, O, H, W)` <-> `(O, N*H*W)` reshuffles around the GEMM.
fn channels_major<F: Real>(y: &Array4<F>) -> Array2<F> {
    let (n, o, h, w) = y.dim();
    let permuted = y.view().permuted_axes([1, 0, 2, 3]);
    let owned = permuted.as_standard_layout().into_owned();
    owned.into_shape_with_order((o, n * h * w)).expect("reshape")
}

fn batch_major<F: Real>(y: Array2<F>, n: usize, h: usize, w: usize) -> Array4<F> {
    let o = y.nrows();
    let y = y.as_standard_layout().into_owned().into_shape_with_order((o, n, h, w)).expect("reshape");
    y.permuted_axes([1, 0, 2, 3]).as_standard_layout().into_owned()
}

struct ConvCache<F> {
    input: Array4<F>,
    weight: Array2<F>,
    sigma: F,
}

/// Power iterations run at construction so that `u`, `v` start aligned
/// with the initial weight.
const SN_WARMUP: usize = 10;

/// Same-padded stride-1 2D convolution (`k` odd).
#[derive(Clone)]
pub struct Conv2d<F: Real> {
    pub weight: Param<F, Ix4>,
    pub bias: Option<Param<F, Ix1>>,
    pub sn: Option<SpectralNorm<F>>,
    kernel: usize,
    cache: Option<std::sync::Arc<ConvCache<F>>>,
}

impl<F: Real> Conv2d<F> {
    pub fn new<R: Rng + ?Sized>(
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        bias: bool,
        spectral: bool,
        rng: &mut R,
    ) -> Self {
        assert!(kernel % 2 == 1, "kernel must be odd");
        let fan = kernel * kernel;
        let weight = glorot((out_ch, in_ch, kernel, kernel), in_ch * fan, out_ch * fan, rng);
        let mut layer = Self {
            weight: Param::new(weight),
            bias: bias.then(|| Param::new(Array1::zeros(out_ch))),
            sn: spectral.then(|| SpectralNorm::new(out_ch, in_ch * fan, rng)),
            kernel,
            cache: None,
        };
        let matrix = layer.weight_matrix();
        if let Some(sn) = layer.sn.as_mut() {
            sn.normalize(matrix.view(), SN_WARMUP);
        }
        layer
    }

    pub fn out_channels(&self) -> usize {
        self.weight.value.dim().0
    }

    fn weight_matrix(&self) -> Array2<F> {
        let (o, i, k, _) = self.weight.value.dim();
        self.weight
            .value
            .as_standard_layout()
            .into_owned()
            .into_shape_with_order((o, i * k * k))
            .expect("reshape")
    }

    pub fn forward(&mut self, x: &Array4<F>, mode: Mode) -> Array4<F> {
        let (n, _, h, w) = x.dim();
        let raw = self.weight_matrix();
        let (weight, sigma) = match self.sn.as_mut() {
            Some(sn) => sn.normalize(raw.view(), usize::from(mode == Mode::Train)),
            None => (raw, F::one()),
        };
        let cols = im2col(x, self.kernel);
        let mut y = weight.dot(&cols);
        if let Some(b) = &self.bias {
            for (mut row, &bv) in y.rows_mut().into_iter().zip(b.value.iter()) {
                row += bv;
            }
        }
        self.cache = Some(std::sync::Arc::new(ConvCache {
            input: x.to_owned(),
            weight,
            sigma,
        }));
        batch_major(y, n, h, w)
    }

    pub fn backward(&mut self, dy: &Array4<F>) -> Array4<F> {
        let cache = self.cache.take().expect("backward without forward");
        let dy_mat = channels_major(dy);
        let cols = im2col(&cache.input, self.kernel);
        let mut dw = dy_mat.dot(&cols.t());
        if let Some(sn) = &self.sn {
            dw = sn.backward(&dw, &cache.weight, cache.sigma);
        }
        let dw = dw.as_standard_layout().into_owned().into_shape_with_order(self.weight.value.raw_dim()).expect("reshape");
        self.weight.grad += &dw;
        if let Some(b) = self.bias.as_mut() {
            b.grad += &dy_mat.sum_axis(Axis(1));
        }
        let dcols = cache.weight.t().dot(&dy_mat);
        col2im(&dcols, cache.input.dim(), self.kernel)
    }
}

impl<F: Real> Module<F> for Conv2d<F> {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, Slot<'_, F>)) {
        f(&join(prefix, "weight"), self.weight.slot());
        if let Some(b) = self.bias.as_mut() {
            f(&join(prefix, "bias"), b.slot());
        }
        if let Some(sn) = self.sn.as_mut() {
            f(&join(prefix, "sn_u"), Slot::Buffer(sn.u.view_mut().into_dyn()));
            f(&join(prefix, "sn_v"), Slot::Buffer(sn.v.view_mut().into_dyn()));
        }
    }
}

struct LinearCache<F> {
    input: Array2<F>,
    weight: Array2<F>,
    sigma: F,
}

/// Dense layer `y = x W' + b` on `(N, in)` inputs.
#[derive(Clone)]
pub struct Linear<F: Real> {
    pub weight: Param<F, Ix2>,
    pub bias: Option<Param<F, Ix1>>,
    pub sn: Option<SpectralNorm<F>>,
    cache: Option<std::sync::Arc<LinearCache<F>>>,
}

impl<F: Real> Linear<F> {
    pub fn new<R: Rng + ?Sized>(input: usize, output: usize, bias: bool, spectral: bool, rng: &mut R) -> Self {
        let mut layer = Self {
            weight: Param::new(glorot((output, input), input, output, rng)),
            bias: bias.then(|| Param::new(Array1::zeros(output))),
            sn: spectral.then(|| SpectralNorm::new(output, input, rng)),
            cache: None,
        };
        if let Some(sn) = layer.sn.as_mut() {
            sn.normalize(layer.weight.value.view(), SN_WARMUP);
        }
        layer
    }

    pub fn forward(&mut self, x: &Array2<F>, mode: Mode) -> Array2<F> {
        let (weight, sigma) = match self.sn.as_mut() {
            Some(sn) => sn.normalize(self.weight.value.view(), usize::from(mode == Mode::Train)),
            None => (self.weight.value.clone(), F::one()),
        };
        let mut y = x.dot(&weight.t());
        if let Some(b) = &self.bias {
            y += &b.value;
        }
        self.cache = Some(std::sync::Arc::new(LinearCache {
            input: x.to_owned(),
            weight,
            sigma,
        }));
        y
    }

    pub fn backward(&mut self, dy: &Array2<F>) -> Array2<F> {
        let cache = self.cache.take().expect("backward without forward");
        let mut dw = dy.t().dot(&cache.input);
        if let Some(sn) = &self.sn {
            dw = sn.backward(&dw, &cache.weight, cache.sigma);
        }
        self.weight.grad += &dw;
        if let Some(b) = self.bias.as_mut() {
            b.grad += &dy.sum_axis(Axis(0));
        }
        dy.dot(&cache.weight)
    }
}

impl<F: Real> Module<F> for Linear<F> {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, Slot<'_, F>)) {
        f(&join(prefix, "weight"), self.weight.slot());
        if let Some(b) = self.bias.as_mut() {
            f(&join(prefix, "bias"), b.slot());
        }
        if let Some(sn) = self.sn.as_mut() {
            f(&join(prefix, "sn_u"), Slot::Buffer(sn.u.view_mut().into_dyn()));
            f(&join(prefix, "sn_v"), Slot::Buffer(sn.v.view_mut().into_dyn()));
        }
    }
}
