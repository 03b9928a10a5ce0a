//! A compact CPU layer library with explicit backward passes.
//!
//! Layers cache what their backward pass needs during `forward`, so every
//! `backward` call must follow the matching `forward`. Parameters are exposed
//! through [`Module::visit`] in a fixed order, which the optimizer, EMA and
//! checkpoint code rely on.

mod attention;
mod cbn;
mod conv;
mod ops;
mod spectral;

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use ndarray::{Array, ArrayD, ArrayViewMutD, Dimension, LinalgScalar, ScalarOperand, ShapeBuilder};
use num_traits::{Float, FromPrimitive};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

pub use attention::SelfAttention;
pub use cbn::{ConditionalBatchNorm, NormKind};
pub use conv::{Conv2d, Linear};
pub use ops::{avg_pool2, avg_pool2_backward, relu, relu_backward, upsample2, upsample2_backward};
pub use spectral::{spectral_normalize, SpectralNorm};

/// Floating-point element type of tensors and parameters.
pub trait Real:
    Float
    + FromPrimitive
    + LinalgScalar
    + ScalarOperand
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Width in bytes, used as the dtype tag in checkpoints.
    const BYTES: u8;
    fn put_le(self, out: &mut Vec<u8>);
    fn get_le(bytes: &[u8]) -> Self;
}

impl Real for f32 {
    const BYTES: u8 = 4;
    fn put_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn get_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes.try_into().expect("4 bytes"))
    }
}

impl Real for f64 {
    const BYTES: u8 = 8;
    fn put_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn get_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes.try_into().expect("8 bytes"))
    }
}

#[inline]
pub fn lit<F: Real>(x: f64) -> F {
    F::from_f64(x).expect("representable constant")
}

/// Batch statistics and spectral-norm vectors update only in `Train`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// A learnable tensor and its accumulated gradient.
#[derive(Clone, Debug)]
pub struct Param<F, D: Dimension> {
    pub value: Array<F, D>,
    pub grad: Array<F, D>,
}

impl<F: Real, D: Dimension> Param<F, D> {
    pub fn new(value: Array<F, D>) -> Self {
        let grad = Array::zeros(value.raw_dim());
        Self { value, grad }
    }

    pub fn slot(&mut self) -> Slot<'_, F> {
        Slot::Param {
            value: self.value.view_mut().into_dyn(),
            grad: self.grad.view_mut().into_dyn(),
        }
    }
}

/// What a [`Module`] exposes to visitors: learnable parameters (with their
/// gradients) and persistent buffers such as running statistics.
pub enum Slot<'a, F> {
    Param {
        value: ArrayViewMutD<'a, F>,
        grad: ArrayViewMutD<'a, F>,
    },
    Buffer(ArrayViewMutD<'a, F>),
}

pub trait Module<F: Real> {
    /// Calls `f` on every parameter and buffer, in a stable order, with a
    /// dotted path name rooted at `prefix`.
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, Slot<'_, F>));

    fn zero_grad(&mut self) {
        self.visit("", &mut |_, slot| {
            if let Slot::Param { mut grad, .. } = slot {
                grad.fill(F::zero());
            }
        });
    }

    /// Number of learnable scalars (buffers excluded).
    fn param_count(&mut self) -> usize {
        let mut n = 0;
        self.visit("", &mut |_, slot| {
            if let Slot::Param { value, .. } = slot {
                n += value.len();
            }
        });
        n
    }

    /// Copies of all parameter values in visit order.
    fn param_values(&mut self) -> Vec<ArrayD<F>> {
        let mut out = Vec::new();
        self.visit("", &mut |_, slot| {
            if let Slot::Param { value, .. } = slot {
                out.push(value.to_owned());
            }
        });
        out
    }

    /// Copies of all parameter gradients in visit order.
    fn param_grads(&mut self) -> Vec<ArrayD<F>> {
        let mut out = Vec::new();
        self.visit("", &mut |_, slot| {
            if let Slot::Param { grad, .. } = slot {
                out.push(grad.to_owned());
            }
        });
        out
    }

    /// Overwrites parameter values in visit order; shapes must match.
    fn load_param_values(&mut self, values: &[ArrayD<F>]) -> crate::Result<()> {
        let mut i = 0;
        let mut err = None;
        self.visit("", &mut |name, slot| {
            if let Slot::Param { mut value, .. } = slot {
                match values.get(i) {
                    Some(v) if v.shape() == value.shape() => value.assign(v),
                    _ if err.is_none() => err = Some(format!("parameter {name} (#{i})")),
                    _ => {}
                }
                i += 1;
            }
        });
        match err {
            Some(e) => Err(crate::Error::Shape(e)),
            None if i != values.len() => Err(crate::Error::Shape(format!(
                "{} values for {i} parameters",
                values.len()
            ))),
            None => Ok(()),
        }
    }
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// Glorot-uniform initialisation for a weight with the given fan sizes.
pub(crate) fn glorot<F: Real, D: Dimension, Sh: ShapeBuilder<Dim = D>, R: Rng + ?Sized>(
    shape: Sh,
    fan_in: usize,
    fan_out: usize,
    rng: &mut R,
) -> Array<F, D> {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let dist = Uniform::new_inclusive(-bound, bound).expect("valid bounds");
    Array::from_shape_simple_fn(shape, || lit(dist.sample(rng)))
}

pub(crate) fn unit_normal_vector<F: Real, R: Rng + ?Sized>(len: usize, rng: &mut R) -> ndarray::Array1<F> {
    let v: ndarray::Array1<f64> = (0..len).map(|_| StandardNormal.sample(rng)).collect();
    let norm = v.dot(&v).sqrt().max(1e-12);
    v.mapv(|x| lit(x / norm))
}

#[cfg(test)]
pub(crate) mod gradcheck;
