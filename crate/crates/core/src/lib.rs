//! Conditional GANs that generate categorical facies fields at proportions
//! missing from the training set.
//!
//! The crate is organised by pipeline stage:
//!
//! * [`grid`] holds the [`FaciesGrid`] sample type and its file format.
//! * [`synth`] procedurally builds labelled channel and crevasse-splay datasets.
//! * [`nn`] is a small CPU layer library with hand-written backward passes,
//!   including the conditional batch normalization variants.
//! * [`model`] assembles the ResNet generator and discriminator and their
//!   checkpoint format.
//! * [`train`] runs adversarial training with discrete or continuous
//!   fake-condition sampling and an EMA generator.
//! * [`eval`] samples trained generators and computes proportion, outlier,
//!   two-point and connectivity statistics.
//! * [`experiment`] drives synthesis, training, sweeps and reports from
//!   TOML configs; the `faciesgan` binary is a thin wrapper around it.

pub mod error;
pub mod eval;
pub mod experiment;
pub mod grid;
pub mod model;
pub mod nn;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
pub use grid::{facies_proportion, FaciesGrid};

/// Dimension of the generator's latent input.
pub const LATENT_DIM: usize = 128;
