//! Gated non-local self-attention over spatial positions.

use ndarray::{Array1, Array2, Array4, Ix1};
use rand::Rng;

use super::{join, Conv2d, Mode, Module, Param, Real, Slot};

#[derive(Clone)]
struct AttentionCache<F> {
    q: Array4<F>,
    k: Array4<F>,
    v: Array4<F>,
    attn: Vec<Array2<F>>,
    o: Array4<F>,
}

/// `out = x + gate * attend(x)`, where position `i` of `attend(x)` is the
/// softmax(q_i . k_j)-weighted sum of the values `v_j`. Queries and keys use
/// `C/8` channels (at least one); values keep all `C`.
#[derive(Clone)]
pub struct SelfAttention<F: Real> {
    pub query: Conv2d<F>,
    pub key: Conv2d<F>,
    pub value: Conv2d<F>,
    pub gate: Param<F, Ix1>,
    cache: Option<AttentionCache<F>>,
}

fn flat<F: Real>(t: &Array4<F>, n: usize) -> Array2<F> {
    let (_, c, h, w) = t.dim();
    t.index_axis(ndarray::Axis(0), n)
        .to_owned()
        .into_shape_with_order((c, h * w))
        .expect("reshape")
}

fn softmax_rows<F: Real>(s: &mut Array2<F>) {
    for mut row in s.rows_mut() {
        let max = row.fold(F::neg_infinity(), |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
}

impl<F: Real> SelfAttention<F> {
    pub fn new<R: Rng + ?Sized>(channels: usize, spectral: bool, rng: &mut R) -> Self {
        let inner = (channels / 8).max(1);
        Self {
            query: Conv2d::new(channels, inner, 1, false, spectral, rng),
            key: Conv2d::new(channels, inner, 1, false, spectral, rng),
            value: Conv2d::new(channels, channels, 1, false, spectral, rng),
            gate: Param::new(Array1::zeros(1)),
            cache: None,
        }
    }

    pub fn forward(&mut self, x: &Array4<F>, mode: Mode) -> Array4<F> {
        let (n, c, h, w) = x.dim();
        let q = self.query.forward(x, mode);
        let k = self.key.forward(x, mode);
        let v = self.value.forward(x, mode);
        let mut o = Array4::zeros((n, c, h, w));
        let mut attn = Vec::with_capacity(n);
        for i in 0..n {
            let (qi, ki, vi) = (flat(&q, i), flat(&k, i), flat(&v, i));
            let mut s = qi.t().dot(&ki);
            softmax_rows(&mut s);
            let oi = vi.dot(&s.t()).to_shape((c, h, w)).expect("reshape").into_owned();
            o.index_axis_mut(ndarray::Axis(0), i).assign(&oi);
            attn.push(s);
        }
        let gate = self.gate.value[0];
        let out = x + &o.mapv(|v| v * gate);
        self.cache = Some(AttentionCache { q, k, v, attn, o });
        out
    }

    pub fn backward(&mut self, dy: &Array4<F>) -> Array4<F> {
        let cache = self.cache.take().expect("backward without forward");
        let (n, c, h, w) = dy.dim();
        let gate = self.gate.value[0];
        self.gate.grad[0] += dy.iter().zip(cache.o.iter()).map(|(&a, &b)| a * b).sum::<F>();
        let inner = cache.q.dim().1;
        let mut dq = Array4::zeros((n, inner, h, w));
        let mut dk = Array4::zeros((n, inner, h, w));
        let mut dv = Array4::zeros((n, c, h, w));
        for i in 0..n {
            let a = &cache.attn[i];
            let d_o = flat(dy, i).mapv(|g| g * gate);
            let (qi, ki, vi) = (flat(&cache.q, i), flat(&cache.k, i), flat(&cache.v, i));
            let dvi = d_o.dot(a);
            let da = d_o.t().dot(&vi);
            // softmax adjoint, row by row
            let mut ds = da;
            for (mut row, arow) in ds.rows_mut().into_iter().zip(a.rows()) {
                let dot: F = row.iter().zip(arow.iter()).map(|(&g, &p)| g * p).sum();
                row.zip_mut_with(&arow, |g, &p| *g = p * (*g - dot));
            }
            let dqi = ki.dot(&ds.t());
            let dki = qi.dot(&ds);
            dq.index_axis_mut(ndarray::Axis(0), i)
                .assign(&dqi.to_shape((inner, h, w)).expect("reshape"));
            dk.index_axis_mut(ndarray::Axis(0), i)
                .assign(&dki.to_shape((inner, h, w)).expect("reshape"));
            dv.index_axis_mut(ndarray::Axis(0), i)
                .assign(&dvi.to_shape((c, h, w)).expect("reshape"));
        }
        let mut dx = dy.to_owned();
        dx += &self.query.backward(&dq);
        dx += &self.key.backward(&dk);
        dx += &self.value.backward(&dv);
        dx
    }
}

impl<F: Real> Module<F> for SelfAttention<F> {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, Slot<'_, F>)) {
        self.query.visit(&join(prefix, "query"), f);
        self.key.visit(&join(prefix, "key"), f);
        self.value.visit(&join(prefix, "value"), f);
        f(&join(prefix, "gate"), self.gate.slot());
    }
}
