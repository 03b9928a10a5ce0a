use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Where fake conditions come from during training.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    /// Uniform over the represented conditions.
    Discrete,
    /// Uniform over the interval they span.
    Continuous,
}

impl SamplingMode {
    pub fn label(self) -> &'static str {
        match self {
            SamplingMode::Discrete => "discrete",
            SamplingMode::Continuous => "continuous",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConditionSampler {
    mode: SamplingMode,
    represented: Vec<f64>,
}

impl ConditionSampler {
    /// `represented` is deduplicated and sorted; it must be non-empty and
    /// finite.
    pub fn new(mode: SamplingMode, represented: &[f64]) -> Result<Self> {
        if represented.is_empty() {
            return Err(Error::invalid("condition sampler needs at least one represented condition"));
        }
        if represented.iter().any(|y| !y.is_finite()) {
            return Err(Error::invalid("represented conditions must be finite"));
        }
        let mut represented = represented.to_vec();
        represented.sort_by(f64::total_cmp);
        represented.dedup();
        Ok(Self { mode, represented })
    }

    pub fn mode(&self) -> SamplingMode {
        self.mode
    }

    pub fn represented(&self) -> &[f64] {
        &self.represented
    }

    pub fn interval(&self) -> [f64; 2] {
        [self.represented[0], *self.represented.last().expect("non-empty")]
    }

    /// `m` i.i.d. draws according to the sampler's mode.
    pub fn sample<R: Rng + ?Sized>(&self, m: usize, rng: &mut R) -> Result<Vec<f64>> {
        self.sample_as(self.mode, m, rng)
    }

    /// `m` draws using `mode` instead of the configured one.
    pub fn sample_as<R: Rng + ?Sized>(&self, mode: SamplingMode, m: usize, rng: &mut R) -> Result<Vec<f64>> {
        if m == 0 {
            return Err(Error::invalid("cannot sample zero conditions"));
        }
        let [lo, hi] = self.interval();
        Ok((0..m)
            .map(|_| match mode {
                SamplingMode::Discrete => self.represented[rng.random_range(0..self.represented.len())],
                SamplingMode::Continuous if lo == hi => lo,
                SamplingMode::Continuous => rng.random_range(lo..=hi),
            })
            .collect())
    }

    /// Whether `y` lies in the support of this sampler.
    pub fn supports(&self, y: f64) -> bool {
        match self.mode {
            SamplingMode::Discrete => self.represented.contains(&y),
            SamplingMode::Continuous => {
                let [lo, hi] = self.interval();
                (lo..=hi).contains(&y)
            }
        }
    }
}
