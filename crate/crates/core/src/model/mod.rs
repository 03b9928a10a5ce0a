//! Generator/discriminator architecture, capacity presets and checkpoints.

mod checkpoint;
mod discriminator;
mod generator;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::NormKind;

pub use checkpoint::{Archive, ARCHIVE_VERSION};
pub use discriminator::{ConditionEmbedding, Discriminator};
pub use generator::{decode, encode, Generator};

/// How the condition reaches the generator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Conditioning {
    /// `y` appended to `z`; plain batch normalization in the blocks.
    Concat,
    /// Scale and shift both affine in `y`.
    CbnStandard,
    /// Condition-free scale, shift affine in `y`.
    CbnFixed,
}

impl Conditioning {
    pub fn norm_kind(self) -> NormKind {
        match self {
            Conditioning::Concat => NormKind::Plain,
            Conditioning::CbnStandard => NormKind::Standard,
            Conditioning::CbnFixed => NormKind::FixedScale,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Conditioning::Concat => "concat",
            Conditioning::CbnStandard => "cbn_standard",
            Conditioning::CbnFixed => "cbn_fixed",
        }
    }
}

/// Named discriminator sizes (learnable parameter counts).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CapacityPreset {
    #[serde(rename = "4.7M")]
    Large,
    #[serde(rename = "1.2M")]
    Medium,
    #[serde(rename = "0.3M")]
    Small,
    #[serde(rename = "0.08M")]
    Tiny,
}

impl CapacityPreset {
    pub const ALL: [CapacityPreset; 4] = [Self::Large, Self::Medium, Self::Small, Self::Tiny];

    pub fn nominal_params(self) -> usize {
        match self {
            Self::Large => 4_700_000,
            Self::Medium => 1_200_000,
            Self::Small => 300_000,
            Self::Tiny => 80_000,
        }
    }

    /// Base width that lands within a few percent of the nominal count.
    pub fn width(self) -> usize {
        match self {
            Self::Large => 480,
            Self::Medium => 240,
            Self::Small => 120,
            Self::Tiny => 64,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::Large => "4.7M",
            Self::Medium => "1.2M",
            Self::Small => "0.3M",
            Self::Tiny => "0.08M",
        }
    }
}

/// Discriminator size: a preset or an explicit base width.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Capacity {
    Preset(CapacityPreset),
    Width(usize),
}

impl Capacity {
    pub fn width(self) -> usize {
        match self {
            Capacity::Preset(p) => p.width(),
            Capacity::Width(w) => w,
        }
    }

    pub fn label(self) -> String {
        match self {
            Capacity::Preset(p) => p.label().to_string(),
            Capacity::Width(w) => format!("w{w}"),
        }
    }
}

/// Number of up/down residual blocks in each network.
pub const BLOCKS: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    /// Output side length; a power of two, at least 16.
    pub resolution: usize,
    /// 2 for binary channel grids (one output map), 4 for multi-facies.
    pub facies_count: usize,
    /// Generator base width (channels after the input projection).
    pub g_width: usize,
    pub d_capacity: Capacity,
    /// Side length at which both networks apply self-attention.
    pub attention_resolution: Option<usize>,
    /// 1-based discriminator block after which the condition embedding is
    /// concatenated.
    pub inject_after_block: usize,
    pub conditioning: Conditioning,
    /// Range of conditions seen in training; wider values need an explicit
    /// extrapolation switch.
    pub condition_range: [f64; 2],
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            resolution: 64,
            facies_count: 2,
            g_width: 256,
            d_capacity: Capacity::Preset(CapacityPreset::Small),
            attention_resolution: Some(32),
            inject_after_block: 3,
            conditioning: Conditioning::CbnFixed,
            condition_range: [0.25, 0.35],
        }
    }
}

impl NetworkConfig {
    pub fn image_channels(&self) -> usize {
        if self.facies_count == 2 {
            1
        } else {
            self.facies_count
        }
    }

    /// Spatial side of the generator's input projection.
    pub fn base_resolution(&self) -> usize {
        self.resolution >> BLOCKS
    }

    pub fn validate(&self) -> Result<()> {
        let r = self.resolution;
        if r < 16 || !r.is_power_of_two() {
            return Err(Error::invalid(format!("resolution {r} must be a power of two >= 16")));
        }
        if self.facies_count != 2 && self.facies_count != 4 {
            return Err(Error::invalid("facies_count must be 2 or 4"));
        }
        for (name, w) in [("g_width", self.g_width), ("discriminator width", self.d_capacity.width())] {
            if w < 8 || w % 8 != 0 {
                return Err(Error::invalid(format!("{name} {w} must be a positive multiple of 8")));
            }
        }
        if !(1..BLOCKS).contains(&self.inject_after_block) {
            return Err(Error::invalid(format!(
                "inject_after_block must be in 1..={}, got {}",
                BLOCKS - 1,
                self.inject_after_block
            )));
        }
        if let Some(a) = self.attention_resolution {
            if ![r / 2, r / 4, r / 8].contains(&a) {
                return Err(Error::invalid(format!(
                    "attention resolution {a} must be one of {}, {}, {}",
                    r / 2,
                    r / 4,
                    r / 8
                )));
            }
        }
        let [lo, hi] = self.condition_range;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::invalid("condition_range must be an ordered pair"));
        }
        Ok(())
    }

    /// Rejects conditions outside the trained range unless extrapolating.
    pub fn check_condition(&self, y: f64, allow_extrapolation: bool) -> Result<()> {
        let [min, max] = self.condition_range;
        if !y.is_finite() {
            return Err(Error::invalid(format!("condition {y} is not finite")));
        }
        if !allow_extrapolation && (y < min - 1e-12 || y > max + 1e-12) {
            return Err(Error::ConditionOutOfRange { value: y, min, max });
        }
        Ok(())
    }
}
