use ndarray::ArrayD;

use crate::error::{Error, Result};
use crate::nn::{lit, Module, Real, Slot};

/// Adam with bias correction; moment buffers follow the module's visit
/// order.
#[derive(Clone, Debug)]
pub struct Adam<F> {
    pub lr: f64,
    pub betas: [f64; 2],
    pub eps: f64,
    pub t: u64,
    pub m: Vec<ArrayD<F>>,
    pub v: Vec<ArrayD<F>>,
}

impl<F: Real> Adam<F> {
    pub fn new(lr: f64, betas: [f64; 2], eps: f64) -> Self {
        Self {
            lr,
            betas,
            eps,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    /// Applies one update from the gradients accumulated in `module`.
    pub fn step<M: Module<F> + ?Sized>(&mut self, module: &mut M) {
        self.t += 1;
        let [b1, b2] = self.betas;
        let c1 = 1.0 - b1.powi(self.t.min(i32::MAX as u64) as i32);
        let c2 = 1.0 - b2.powi(self.t.min(i32::MAX as u64) as i32);
        let (b1f, b2f): (F, F) = (lit(b1), lit(b2));
        let (one, lr, eps): (F, F, F) = (F::one(), lit(self.lr), lit(self.eps));
        let (c1, c2): (F, F) = (lit(c1), lit(c2));
        let (ms, vs) = (&mut self.m, &mut self.v);
        let mut i = 0;
        module.visit("", &mut |_, slot| {
            if let Slot::Param { mut value, grad } = slot {
                if ms.len() <= i {
                    ms.push(ArrayD::zeros(value.raw_dim()));
                    vs.push(ArrayD::zeros(value.raw_dim()));
                }
                let (m, v) = (&mut ms[i], &mut vs[i]);
                ndarray::Zip::from(&mut value)
                    .and(&grad)
                    .and(m)
                    .and(v)
                    .for_each(|p, &g, m, v| {
                        *m = b1f * *m + (one - b1f) * g;
                        *v = b2f * *v + (one - b2f) * g * g;
                        *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                    });
                i += 1;
            }
        });
    }
}

/// Exponential moving average of a module's parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct EmaState<F> {
    pub decay: f64,
    pub shadow: Vec<ArrayD<F>>,
}

impl<F: Real> EmaState<F> {
    pub fn new(decay: f64, initial: Vec<ArrayD<F>>) -> Result<Self> {
        if !(0.0..=1.0).contains(&decay) {
            return Err(Error::invalid(format!("EMA decay {decay} outside [0, 1]")));
        }
        Ok(Self { decay, shadow: initial })
    }

    /// `shadow <- decay * shadow + (1 - decay) * current`.
    pub fn update(&mut self, current: &[ArrayD<F>]) -> Result<()> {
        if current.len() != self.shadow.len()
            || current.iter().zip(&self.shadow).any(|(c, s)| c.shape() != s.shape())
        {
            return Err(Error::Shape("EMA shadow does not mirror the current parameters".into()));
        }
        let d: F = lit(self.decay);
        let rest: F = lit(1.0 - self.decay);
        for (s, c) in self.shadow.iter_mut().zip(current) {
            ndarray::Zip::from(s).and(c).for_each(|s, &c| *s = d * *s + rest * c);
        }
        Ok(())
    }
}
