use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{sample_latents, TruncationSpec};
use crate::error::{Error, Result};
use crate::grid::{facies_proportion, FaciesGrid};
use crate::model::{decode, Generator};
use crate::nn::Mode;

/// Anything that can produce facies grids at a requested proportion.
pub trait FaciesGenerator {
    fn generate(&mut self, condition: f64, n: usize, rng: &mut ChaCha8Rng) -> Result<Vec<FaciesGrid>>;
}

/// A trained generator sampled in eval mode with optional truncation.
pub struct NetworkSampler {
    pub generator: Generator<f32>,
    pub truncation: TruncationSpec,
    /// Samples per forward pass.
    pub chunk: usize,
}

impl NetworkSampler {
    pub fn new(generator: Generator<f32>, truncation: TruncationSpec) -> Self {
        Self {
            generator,
            truncation,
            chunk: 64,
        }
    }
}

impl FaciesGenerator for NetworkSampler {
    fn generate(&mut self, condition: f64, n: usize, rng: &mut ChaCha8Rng) -> Result<Vec<FaciesGrid>> {
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            let m = self.chunk.min(n - out.len());
            let z = sample_latents(&self.truncation, m, rng)?;
            let images = self.generator.forward(&z, &vec![condition; m], Mode::Eval)?;
            out.extend(decode(&images));
        }
        Ok(out)
    }
}

/// Percentage of samples whose `code` proportion deviates from `target` by
/// more than `3 * sigma`.
pub fn outlier_percentage(samples: &[FaciesGrid], code: u8, target: f64, sigma: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::invalid("outlier percentage of an empty sample set"));
    }
    if !(sigma > 0.0) {
        return Err(Error::invalid(format!("sigma {sigma} must be positive")));
    }
    let outliers = samples
        .iter()
        .filter(|s| (facies_proportion(s, code) - target).abs() > 3.0 * sigma)
        .count();
    Ok(100.0 * outliers as f64 / samples.len() as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct OutlierReport {
    pub conditions: Vec<f64>,
    /// Outlier percentage per condition, in percent.
    pub outlier_pct: Vec<f64>,
    pub sigma: f64,
    /// Arithmetic mean of `outlier_pct`.
    pub average_pct: f64,
}

impl OutlierReport {
    pub fn to_rows(&self) -> Vec<String> {
        self.conditions
            .iter()
            .zip(&self.outlier_pct)
            .map(|(c, p)| format!("{c}\t{p}"))
            .collect()
    }

    pub fn write(&self, path: &Path, comments: &[String]) -> Result<()> {
        let mut comments = comments.to_vec();
        comments.push(format!("sigma {}", self.sigma));
        comments.push(format!("average_outlier_pct {}", self.average_pct));
        super::write_table(path, &comments, "condition\toutlier_pct", &self.to_rows())
    }
}

/// Samples `n_per_condition` grids at every condition and averages the
/// outlier percentages. Condition `i` draws from stream `i` of `seed`, so
/// results do not depend on evaluation order.
pub fn average_outlier_percentage(
    generator: &mut dyn FaciesGenerator,
    conditions: &[f64],
    n_per_condition: usize,
    code: u8,
    sigma: f64,
    seed: u64,
) -> Result<OutlierReport> {
    if conditions.is_empty() {
        return Err(Error::invalid("no evaluation conditions"));
    }
    if n_per_condition == 0 {
        return Err(Error::invalid("n_per_condition must be positive"));
    }
    let mut outlier_pct = Vec::with_capacity(conditions.len());
    for (i, &c) in conditions.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let samples = generator.generate(c, n_per_condition, &mut rng)?;
        outlier_pct.push(outlier_percentage(&samples, code, c, sigma)?);
    }
    Ok(OutlierReport {
        average_pct: outlier_pct.iter().sum::<f64>() / outlier_pct.len() as f64,
        conditions: conditions.to_vec(),
        outlier_pct,
        sigma,
    })
}
