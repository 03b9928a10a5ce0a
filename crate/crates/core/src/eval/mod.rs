//! Sampling with the truncation trick and the evaluation metrics:
//! proportion histograms, outlier percentages, two-point probability and
//! connectivity curves.

mod histogram;
mod lag;
mod latent;
mod outlier;

pub use histogram::{proportion_histogram, Histogram};
pub use lag::{connectivity_function, lag_bin, two_point_probability, LagCurve, Neighborhood};
pub use latent::{sample_latent, sample_latents, TruncationSpec, MAX_REDRAWS};
pub use outlier::{
    average_outlier_percentage, outlier_percentage, FaciesGenerator, NetworkSampler, OutlierReport,
};

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Writes `#`-prefixed comment lines followed by a tab-separated table.
pub(crate) fn write_table(path: &Path, comments: &[String], header: &str, rows: &[String]) -> Result<()> {
    let mut out = Vec::new();
    for c in comments {
        writeln!(out, "# {c}").expect("vec write");
    }
    writeln!(out, "{header}").expect("vec write");
    for r in rows {
        writeln!(out, "{r}").expect("vec write");
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}
