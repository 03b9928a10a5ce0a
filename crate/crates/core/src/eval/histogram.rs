use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{facies_proportion, FaciesGrid};

#[derive(Clone, Debug, PartialEq)]
pub struct Histogram {
    /// `counts.len() + 1` ascending bin edges.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

impl Histogram {
    /// Equal-width bins over `range`, or over the data's extent when `None`.
    /// Values on the upper edge fall into the last bin; values outside the
    /// range are clamped into the end bins.
    pub fn from_values(values: &[f64], bins: usize, range: Option<(f64, f64)>) -> Result<Self> {
        if bins == 0 {
            return Err(Error::invalid("a histogram needs at least one bin"));
        }
        if values.is_empty() {
            return Err(Error::invalid("histogram of no values"));
        }
        let (mut lo, mut hi) = range.unwrap_or_else(|| {
            let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (lo, hi)
        });
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::invalid("histogram range must be finite and ordered"));
        }
        if lo == hi {
            lo -= 0.005;
            hi += 0.005;
        }
        let width = (hi - lo) / bins as f64;
        let edges = (0..=bins).map(|i| lo + width * i as f64).collect();
        let mut counts = vec![0; bins];
        for &v in values {
            let k = ((v - lo) / width).floor();
            counts[(k.max(0.0) as usize).min(bins - 1)] += 1;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Ok(Self {
            edges,
            counts,
            mean,
            std: var.sqrt(),
        })
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn to_rows(&self) -> Vec<String> {
        self.counts
            .iter()
            .enumerate()
            .map(|(i, c)| format!("{}\t{}\t{c}", self.edges[i], self.edges[i + 1]))
            .collect()
    }

    pub fn write(&self, path: &Path, comments: &[String]) -> Result<()> {
        let mut comments = comments.to_vec();
        comments.push(format!("n {} mean {} std {}", self.total(), self.mean, self.std));
        super::write_table(path, &comments, "bin_left\tbin_right\tcount", &self.to_rows())
    }
}

/// Histogram of the `code` proportion of each sample.
pub fn proportion_histogram(
    samples: &[FaciesGrid],
    code: u8,
    bins: usize,
    range: Option<(f64, f64)>,
) -> Result<Histogram> {
    let values: Vec<f64> = samples.iter().map(|s| facies_proportion(s, code)).collect();
    Histogram::from_values(&values, bins, range)
}
