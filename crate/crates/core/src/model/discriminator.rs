use ndarray::{concatenate, s, Array1, Array2, Array4, Axis};
use rand::Rng;

use super::{NetworkConfig, BLOCKS};
use crate::error::{Error, Result};
use crate::nn::{
    avg_pool2, avg_pool2_backward, lit, relu, relu_backward, Conv2d, Linear, Mode, Module, Real, SelfAttention,
    Slot,
};

/// The first block skips the leading relu and pools before its shortcut
/// conv; later blocks pool after it.
#[derive(Clone)]
struct DownBlock<F: Real> {
    first: bool,
    conv1: Conv2d<F>,
    conv2: Conv2d<F>,
    shortcut: Conv2d<F>,
    input: Option<Array4<F>>,
    mid: Option<Array4<F>>,
}

impl<F: Real> DownBlock<F> {
    fn new<R: Rng + ?Sized>(first: bool, input: usize, output: usize, rng: &mut R) -> Self {
        Self {
            first,
            conv1: Conv2d::new(input, output, 3, true, true, rng),
            conv2: Conv2d::new(output, output, 3, true, true, rng),
            shortcut: Conv2d::new(input, output, 1, true, true, rng),
            input: None,
            mid: None,
        }
    }

    fn forward(&mut self, x: &Array4<F>, mode: Mode) -> Array4<F> {
        let h = if self.first { x.clone() } else { relu(x) };
        let mid = self.conv1.forward(&h, mode);
        let mut out = avg_pool2(&self.conv2.forward(&relu(&mid), mode));
        if self.first {
            out += &self.shortcut.forward(&avg_pool2(x), mode);
        } else {
            out += &avg_pool2(&self.shortcut.forward(x, mode));
        }
        self.input = Some(x.clone());
        self.mid = Some(mid);
        out
    }

    fn backward(&mut self, dy: &Array4<F>) -> Array4<F> {
        let x = self.input.take().expect("forward first");
        let mid = self.mid.take().expect("forward first");
        let d = self.conv2.backward(&avg_pool2_backward(dy));
        let d = self.conv1.backward(&relu_backward(&d, &mid));
        if self.first {
            d + avg_pool2_backward(&self.shortcut.backward(dy))
        } else {
            relu_backward(&d, &x) + self.shortcut.backward(&avg_pool2_backward(dy))
        }
    }

    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, Slot<'_, F>)) {
        self.conv1.visit(&format!("{prefix}.conv1"), f);
        self.conv2.visit(&format!("{prefix}.conv2"), f);
        self.shortcut.visit(&format!("{prefix}.shortcut"), f);
    }
}

/// Two-layer condition embedding `f_D`: linear → relu → linear.
#[derive(Clone)]
pub struct ConditionEmbedding<F: Real> {
    pub first: Linear<F>,
    pub second: Linear<F>,
    hidden: Option<Array2<F>>,
}

impl<F: Real> ConditionEmbedding<F> {
    fn new<R: Rng + ?Sized>(width: usize, rng: &mut R) -> Self {
        Self {
            first: Linear::new(1, width, true, true, rng),
            second: Linear::new(width, width, true, true, rng),
            hidden: None,
        }
    }

    pub fn forward(&mut self, ys: &[F], mode: Mode) -> Array2<F> {
        let y = Array2::from_shape_fn((ys.len(), 1), |(i, _)| ys[i]);
        let hidden = self.first.forward(&y, mode);
        let out = self.second.forward(&relu(&hidden), mode);
        self.hidden = Some(hidden);
        out
    }

    fn backward(&mut self, dy: &Array2<F>) {
        let hidden = self.hidden.take().expect("forward first");
        let d = self.second.backward(dy);
        self.first.backward(&relu_backward(&d, &hidden));
    }
}

impl<F: Real> Module<F> for ConditionEmbedding<F> {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, Slot<'_, F>)) {
        self.first.visit(&crate::nn::join(prefix, "first"), f);
        self.second.visit(&crate::nn::join(prefix, "second"), f);
    }
}

/// Scores (image, condition) pairs; every weight is spectrally normalized.
pub struct Discriminator<F: Real> {
    config: NetworkConfig,
    blocks: Vec<DownBlock<F>>,
    attention: Option<(usize, SelfAttention<F>)>,
    embedding: ConditionEmbedding<F>,
    head: Linear<F>,
    features: Option<Array4<F>>,
}

impl<F: Real> Clone for Discriminator<F> {
    fn clone(&self) -> Self {
        Self {
            config: self.config.clone(),
            blocks: self.blocks.clone(),
            attention: self.attention.clone(),
            embedding: self.embedding.clone(),
            head: self.head.clone(),
            features: None,
        }
    }
}

impl<F: Real> Discriminator<F> {
    pub fn new<R: Rng + ?Sized>(config: &NetworkConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let w = config.d_capacity.width();
        let widths = [config.image_channels(), w / 8, w / 4, w / 2, w];
        let inject = config.inject_after_block - 1;
        let embed = widths[inject + 1] / 4;
        if embed == 0 {
            return Err(Error::invalid(format!(
                "discriminator width {w} too small to embed the condition after block {}",
                config.inject_after_block
            )));
        }
        let blocks = (0..BLOCKS)
            .map(|i| {
                let input = widths[i] + if i == inject + 1 { embed } else { 0 };
                DownBlock::new(i == 0, input, widths[i + 1], rng)
            })
            .collect();
        let attention = config.attention_resolution.map(|a| {
            let idx = (0..BLOCKS).find(|&i| config.resolution >> (i + 1) == a).expect("validated");
            let ch = widths[idx + 1];
            (idx, SelfAttention::new(ch, true, rng))
        });
        Ok(Self {
            config: config.clone(),
            blocks,
            attention,
            embedding: ConditionEmbedding::new(embed, rng),
            head: Linear::new(w, 1, true, true, rng),
            features: None,
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn embedding_mut(&mut self) -> &mut ConditionEmbedding<F> {
        &mut self.embedding
    }

    fn inject_index(&self) -> usize {
        self.config.inject_after_block - 1
    }

    /// One logit per image. Conditions are not range-checked.
    pub fn forward(&mut self, x: &Array4<F>, ys: &[f64], mode: Mode) -> Result<Array1<F>> {
        let (n, c, h, w) = x.dim();
        let r = self.config.resolution;
        if c != self.config.image_channels() || h != r || w != r {
            return Err(Error::Shape(format!(
                "discriminator expects (*, {}, {r}, {r}), got ({n}, {c}, {h}, {w})",
                self.config.image_channels()
            )));
        }
        if ys.len() != n {
            return Err(Error::Shape(format!("{} conditions for a batch of {n}", ys.len())));
        }
        let yf: Vec<F> = ys.iter().map(|&y| lit(y)).collect();
        let mut h = x.clone();
        for i in 0..self.blocks.len() {
            h = self.blocks[i].forward(&h, mode);
            if let Some((idx, attn)) = &mut self.attention {
                if *idx == i {
                    h = attn.forward(&h, mode);
                }
            }
            if i == self.inject_index() {
                let e = self.embedding.forward(&yf, mode);
                let (_, ec) = e.dim();
                let (_, _, sh, sw) = h.dim();
                let tiled = Array4::from_shape_fn((n, ec, sh, sw), |(b, k, _, _)| e[[b, k]]);
                h = concatenate![Axis(1), h, tiled];
            }
        }
        let pooled = relu(&h).sum_axis(Axis(3)).sum_axis(Axis(2));
        let logits = self.head.forward(&pooled, mode).column(0).to_owned();
        self.features = Some(h);
        Ok(logits)
    }

    /// Accumulates parameter gradients for `d loss / d logits` and returns
    /// the gradient with respect to the input images.
    pub fn backward(&mut self, dlogits: &Array1<F>) -> Array4<F> {
        let features = self.features.take().expect("forward before backward");
        let n = dlogits.len();
        let dpooled = self.head.backward(&dlogits.view().into_shape_with_order((n, 1)).expect("column").to_owned());
        let (_, c, sh, sw) = features.dim();
        let tiled = Array4::from_shape_fn((n, c, sh, sw), |(b, k, _, _)| dpooled[[b, k]]);
        let mut d = relu_backward(&tiled, &features);
        for i in (0..self.blocks.len()).rev() {
            if i == self.inject_index() {
                let main = self.blocks[i].conv2.out_channels();
                let de = d.slice(s![.., main.., .., ..]).sum_axis(Axis(3)).sum_axis(Axis(2));
                self.embedding.backward(&de);
                d = d.slice(s![.., ..main, .., ..]).to_owned();
            }
            if let Some((idx, attn)) = &mut self.attention {
                if *idx == i {
                    d = attn.backward(&d);
                }
            }
            d = self.blocks[i].backward(&d);
        }
        d
    }
}

impl<F: Real> Module<F> for Discriminator<F> {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, Slot<'_, F>)) {
        let p = |n: &str| crate::nn::join(prefix, n);
        for (i, b) in self.blocks.iter_mut().enumerate() {
            b.visit(&p(&format!("block{i}")), f);
        }
        if let Some((_, a)) = &mut self.attention {
            a.visit(&p("attention"), f);
        }
        self.embedding.visit(&p("embedding"), f);
        self.head.visit(&p("head"), f);
    }
}
