use ndarray::{concatenate, s, Array2, Array4, Axis};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use super::{Conditioning, NetworkConfig};
use crate::error::{Error, Result};
use crate::grid::FaciesGrid;
use crate::nn::{
    lit, relu, relu_backward, upsample2, upsample2_backward, ConditionalBatchNorm, Conv2d, Linear, Mode,
    Module, NormKind, Real, SelfAttention, Slot,
};
use crate::LATENT_DIM;

/// norm → relu → upsample → conv3 → norm → relu → conv3, plus an
/// upsample → conv1 shortcut.
#[derive(Clone)]
struct UpBlock<F: Real> {
    norm1: ConditionalBatchNorm<F>,
    conv1: Conv2d<F>,
    norm2: ConditionalBatchNorm<F>,
    conv2: Conv2d<F>,
    shortcut: Conv2d<F>,
    pre1: Option<Array4<F>>,
    pre2: Option<Array4<F>>,
}

impl<F: Real> UpBlock<F> {
    fn new<R: Rng + ?Sized>(kind: NormKind, input: usize, output: usize, rng: &mut R) -> Self {
        Self {
            norm1: ConditionalBatchNorm::new(kind, input),
            conv1: Conv2d::new(input, output, 3, true, false, rng),
            norm2: ConditionalBatchNorm::new(kind, output),
            conv2: Conv2d::new(output, output, 3, true, false, rng),
            shortcut: Conv2d::new(input, output, 1, true, false, rng),
            pre1: None,
            pre2: None,
        }
    }

    fn forward(&mut self, x: &Array4<F>, ys: &[F], mode: Mode) -> Result<Array4<F>> {
        let a = self.norm1.forward(x, ys, mode)?;
        let h = self.conv1.forward(&upsample2(&relu(&a)), mode);
        let b = self.norm2.forward(&h, ys, mode)?;
        let mut out = self.conv2.forward(&relu(&b), mode);
        out += &self.shortcut.forward(&upsample2(x), mode);
        self.pre1 = Some(a);
        self.pre2 = Some(b);
        Ok(out)
    }

    fn backward(&mut self, dy: &Array4<F>) -> Array4<F> {
        let (a, b) = (self.pre1.take().expect("forward first"), self.pre2.take().expect("forward first"));
        let d = self.conv2.backward(dy);
        let d = self.norm2.backward(&relu_backward(&d, &b));
        let d = upsample2_backward(&self.conv1.backward(&d));
        let mut dx = self.norm1.backward(&relu_backward(&d, &a));
        dx += &upsample2_backward(&self.shortcut.backward(dy));
        dx
    }

    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, Slot<'_, F>)) {
        self.norm1.visit(&format!("{prefix}.norm1"), f);
        self.conv1.visit(&format!("{prefix}.conv1"), f);
        self.norm2.visit(&format!("{prefix}.norm2"), f);
        self.conv2.visit(&format!("{prefix}.conv2"), f);
        self.shortcut.visit(&format!("{prefix}.shortcut"), f);
    }
}

struct GenCache<F> {
    pre_out: Array4<F>,
    out: Array4<F>,
}

/// Maps a latent vector and a proportion condition to a facies image with
/// values in (-1, 1).
pub struct Generator<F: Real> {
    config: NetworkConfig,
    allow_extrapolation: bool,
    input: Linear<F>,
    blocks: Vec<UpBlock<F>>,
    /// Attention follows the block with this index.
    attention: Option<(usize, SelfAttention<F>)>,
    out_norm: ConditionalBatchNorm<F>,
    out_conv: Conv2d<F>,
    cache: Option<GenCache<F>>,
}

impl<F: Real> Clone for Generator<F> {
    fn clone(&self) -> Self {
        Self {
            config: self.config.clone(),
            allow_extrapolation: self.allow_extrapolation,
            input: self.input.clone(),
            blocks: self.blocks.clone(),
            attention: self.attention.clone(),
            out_norm: self.out_norm.clone(),
            out_conv: self.out_conv.clone(),
            cache: None,
        }
    }
}

impl<F: Real> Generator<F> {
    pub fn new<R: Rng + ?Sized>(config: &NetworkConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let kind = config.conditioning.norm_kind();
        let w = config.g_width;
        let base = config.base_resolution();
        let extra = usize::from(kind == NormKind::Plain);
        let input = Linear::new(LATENT_DIM + extra, base * base * w, true, false, rng);
        let widths = [w, w, w / 2, w / 4, w / 8];
        let blocks = (0..super::BLOCKS).map(|i| UpBlock::new(kind, widths[i], widths[i + 1], rng)).collect();
        let attention = config.attention_resolution.map(|a| {
            let idx = (0..super::BLOCKS).find(|&i| base << (i + 1) == a).expect("validated");
            (idx, SelfAttention::new(widths[idx + 1], false, rng))
        });
        Ok(Self {
            config: config.clone(),
            allow_extrapolation: false,
            input,
            blocks,
            attention,
            out_norm: ConditionalBatchNorm::new(NormKind::Plain, w / 8),
            out_conv: Conv2d::new(w / 8, config.image_channels(), 3, true, false, rng),
            cache: None,
        })
    }

    fn input_width(&self) -> usize {
        let base = self.config.base_resolution();
        base * base * self.config.g_width
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    /// Permits conditions outside the trained range.
    pub fn set_allow_extrapolation(&mut self, allow: bool) {
        self.allow_extrapolation = allow;
    }

    /// Every normalization layer, in forward order.
    pub fn norms_mut(&mut self) -> Vec<&mut ConditionalBatchNorm<F>> {
        let mut out = Vec::new();
        for b in &mut self.blocks {
            out.push(&mut b.norm1);
            out.push(&mut b.norm2);
        }
        out.push(&mut self.out_norm);
        out
    }

    /// `z` is (N, latent); one condition per row. Output is (N, C, R, R).
    pub fn forward(&mut self, z: &Array2<F>, ys: &[f64], mode: Mode) -> Result<Array4<F>> {
        let n = z.nrows();
        if z.ncols() != LATENT_DIM {
            return Err(Error::Shape(format!("latent width {} != {LATENT_DIM}", z.ncols())));
        }
        if ys.len() != n {
            return Err(Error::Shape(format!("{} conditions for {n} latents", ys.len())));
        }
        for &y in ys {
            self.config.check_condition(y, self.allow_extrapolation)?;
        }
        let yf: Vec<F> = ys.iter().map(|&y| lit(y)).collect();
        let inp = if self.config.conditioning == Conditioning::Concat {
            let col = Array2::from_shape_fn((n, 1), |(i, _)| yf[i]);
            concatenate![Axis(1), z.view(), col.view()]
        } else {
            z.to_owned()
        };
        let w = self.config.g_width;
        let base = self.config.base_resolution();
        let mut h = self
            .input
            .forward(&inp, mode)
            .as_standard_layout()
            .into_owned()
            .into_shape_with_order((n, w, base, base))
            .expect("projection size");
        for i in 0..self.blocks.len() {
            h = self.blocks[i].forward(&h, &yf, mode)?;
            if let Some((idx, attn)) = &mut self.attention {
                if *idx == i {
                    h = attn.forward(&h, mode);
                }
            }
        }
        let a = self.out_norm.forward(&h, &yf, mode)?;
        let out = self.out_conv.forward(&relu(&a), mode).mapv(|v| v.tanh());
        self.cache = Some(GenCache { pre_out: a, out: out.clone() });
        Ok(out)
    }

    /// Accumulates parameter gradients for `d loss / d output`.
    pub fn backward(&mut self, dout: &Array4<F>) {
        let GenCache { pre_out, out } = self.cache.take().expect("forward before backward");
        let one = F::one();
        let mut d = dout.clone();
        d.zip_mut_with(&out, |g, &o| *g *= one - o * o);
        let d = self.out_conv.backward(&d);
        let mut d = self.out_norm.backward(&relu_backward(&d, &pre_out));
        for i in (0..self.blocks.len()).rev() {
            if let Some((idx, attn)) = &mut self.attention {
                if *idx == i {
                    d = attn.backward(&d);
                }
            }
            d = self.blocks[i].backward(&d);
        }
        let n = d.dim().0;
        let flat = d.as_standard_layout().into_owned().into_shape_with_order((n, self.input_width())).expect("projection size");
        self.input.backward(&flat);
    }

    /// Draws `n` standard-normal latents and decodes grids in eval mode.
    pub fn sample<R: Rng + ?Sized>(&mut self, ys: &[f64], rng: &mut R) -> Result<Vec<FaciesGrid>> {
        let z = Array2::from_shape_simple_fn((ys.len(), LATENT_DIM), || lit(StandardNormal.sample(rng)));
        let out = self.forward(&z, ys, Mode::Eval)?;
        Ok(decode(&out))
    }

    /// Re-estimates every running mean/variance as the plain average over
    /// `passes` training-mode batches at conditions drawn uniformly from the
    /// trained range. Used after swapping in averaged weights.
    pub fn recompute_running_stats<R: Rng + ?Sized>(
        &mut self,
        passes: usize,
        batch: usize,
        rng: &mut R,
    ) -> Result<()> {
        let [lo, hi] = self.config.condition_range;
        let dist = Uniform::new_inclusive(lo, hi).map_err(|e| Error::invalid(e.to_string()))?;
        let saved: Vec<F> = self.norms_mut().iter().map(|n| n.momentum()).collect();
        let mut result = Ok(());
        for t in 0..passes {
            let m: F = lit(1.0 / (t + 1) as f64);
            self.norms_mut().into_iter().for_each(|n| n.set_momentum(m));
            let z = Array2::from_shape_simple_fn((batch, LATENT_DIM), || lit(StandardNormal.sample(rng)));
            let ys: Vec<f64> = (0..batch).map(|_| dist.sample(rng)).collect();
            if let Err(e) = self.forward(&z, &ys, Mode::Train) {
                result = Err(e);
                break;
            }
        }
        for (n, m) in self.norms_mut().into_iter().zip(saved) {
            n.set_momentum(m);
        }
        self.cache = None;
        result
    }
}

impl<F: Real> Module<F> for Generator<F> {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, Slot<'_, F>)) {
        let p = |n: &str| crate::nn::join(prefix, n);
        self.input.visit(&p("input"), f);
        for (i, b) in self.blocks.iter_mut().enumerate() {
            b.visit(&p(&format!("block{i}")), f);
        }
        if let Some((_, a)) = &mut self.attention {
            a.visit(&p("attention"), f);
        }
        self.out_norm.visit(&p("out_norm"), f);
        self.out_conv.visit(&p("out_conv"), f);
    }
}

/// Grids to network images: one ±1 map for binary grids, one ±1 map per
/// facies code otherwise.
pub fn encode<F: Real>(grids: &[&FaciesGrid], facies_count: usize) -> Result<Array4<F>> {
    let first = grids.first().ok_or_else(|| Error::invalid("no grids to encode"))?;
    let (h, w) = (first.height(), first.width());
    let ch = if facies_count == 2 { 1 } else { facies_count };
    let mut out = Array4::from_elem((grids.len(), ch, h, w), -F::one());
    for (n, g) in grids.iter().enumerate() {
        if (g.height(), g.width()) != (h, w) {
            return Err(Error::Shape("grids of different sizes".into()));
        }
        for r in 0..h {
            for c in 0..w {
                let code = g.get(r, c) as usize;
                if facies_count == 2 {
                    if code == crate::grid::CHANNEL as usize {
                        out[[n, 0, r, c]] = F::one();
                    }
                } else if code < ch {
                    out[[n, code, r, c]] = F::one();
                }
            }
        }
    }
    Ok(out)
}

/// Network images to grids: sign threshold for one map, argmax otherwise.
pub fn decode<F: Real>(images: &Array4<F>) -> Vec<FaciesGrid> {
    let (n, ch, h, w) = images.dim();
    (0..n)
        .map(|i| {
            let img = images.slice(s![i, .., .., ..]);
            let cells = (0..h * w)
                .map(|k| {
                    let (r, c) = (k / w, k % w);
                    if ch == 1 {
                        u8::from(img[[0, r, c]] > F::zero())
                    } else {
                        let mut best = 0;
                        for j in 1..ch {
                            if img[[j, r, c]] > img[[best, r, c]] {
                                best = j;
                            }
                        }
                        best as u8
                    }
                })
                .collect();
            FaciesGrid::from_cells(h, w, cells).expect("valid codes")
        })
        .collect()
}
