use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::eval::{Neighborhood, TruncationSpec};
use crate::model::{Capacity, Conditioning, NetworkConfig};
use crate::synth::{ChannelParams, ClassSpec, DatasetSpec};
use crate::train::{SamplingMode, TrainConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetPreset {
    /// Binary channels at 25/30/35 %.
    Channels,
    /// Four facies, conditioned on 4/7 % crevasse splay.
    Splays,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    /// Dataset directory; relative paths resolve against the config file.
    pub dir: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<DatasetPreset>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_class: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classes: Option<Vec<ClassSpec>>,
    pub resolution: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channel: Option<ChannelParams>,
}

impl DatasetSection {
    pub fn spec(&self) -> Result<DatasetSpec> {
        let mut spec = match (&self.preset, &self.classes) {
            (Some(p), None) => {
                let n = self
                    .per_class
                    .ok_or_else(|| Error::invalid("dataset.per_class is required with a preset"))?;
                match p {
                    DatasetPreset::Channels => DatasetSpec::channels(n, self.resolution, self.seed),
                    DatasetPreset::Splays => DatasetSpec::splays(n, self.resolution, self.seed),
                }
            }
            (None, Some(classes)) => DatasetSpec {
                classes: classes.clone(),
                resolution: self.resolution,
                tolerance: self
                    .tolerance
                    .ok_or_else(|| Error::invalid("dataset.tolerance is required with explicit classes"))?,
                seed: self.seed,
                channel: None,
            },
            _ => return Err(Error::invalid("dataset needs exactly one of `preset` or `classes`")),
        };
        if let Some(t) = self.tolerance {
            spec.tolerance = t;
        }
        spec.channel = self.channel.clone();
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSection {
    pub g_width: usize,
    pub d_capacity: Capacity,
    pub attention: bool,
    /// Defaults to half the output resolution.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub attention_resolution: Option<usize>,
    pub inject_after_block: usize,
    pub conditioning: Conditioning,
}

impl Default for NetworkSection {
    fn default() -> Self {
        let n = NetworkConfig::default();
        Self {
            g_width: n.g_width,
            d_capacity: n.d_capacity,
            attention: true,
            attention_resolution: None,
            inject_after_block: n.inject_after_block,
            conditioning: n.conditioning,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    /// Evaluate the EMA generator after every this many epochs.
    pub every_epochs: usize,
    /// Conditions averaged by the outlier metric; defaults to 11 evenly
    /// spaced values across the represented span.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub outlier_conditions: Option<Vec<f64>>,
    /// Defaults to the dataset tolerance.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    /// Samples per condition during training-time evaluation.
    pub n_per_condition: usize,
    /// Samples per condition in `eval` reports.
    pub report_samples: usize,
    pub interpolated: Vec<f64>,
    pub extrapolated: Vec<f64>,
    /// Paired truncated report threshold used by `eval`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truncation: Option<f64>,
    /// Defaults to half the resolution.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_lag: Option<usize>,
    /// Grids per set used for two-point and connectivity curves.
    pub curve_samples: usize,
    pub mosaic_rows: usize,
    pub histogram_bins: usize,
    pub neighborhood: Neighborhood,
    pub seed: u64,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            every_epochs: 1,
            outlier_conditions: None,
            sigma: None,
            n_per_condition: 500,
            report_samples: 2000,
            interpolated: Vec::new(),
            extrapolated: Vec::new(),
            truncation: None,
            max_lag: None,
            curve_samples: 200,
            mosaic_rows: 6,
            histogram_bins: 40,
            neighborhood: Neighborhood::Eight,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub name: String,
    /// Run directories live under `out_dir/name`.
    pub out_dir: PathBuf,
    pub seeds: Vec<u64>,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            name: "experiment".into(),
            out_dir: PathBuf::from("runs"),
            seeds: vec![0, 1, 2],
        }
    }
}

/// Ablation axes; each non-empty list multiplies the run grid.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub condition_sampling: Vec<SamplingMode>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub conditioning: Vec<Conditioning>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub d_capacity: Vec<Capacity>,
}

impl SweepSection {
    pub fn is_empty(&self) -> bool {
        self.condition_sampling.is_empty() && self.conditioning.is_empty() && self.d_capacity.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSection,
    #[serde(default)]
    pub network: NetworkSection,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default)]
    pub experiment: ExperimentSection,
    #[serde(default, skip_serializing_if = "SweepSection::is_empty")]
    pub sweep: SweepSection,
}

/// A parsed config together with the exact bytes it came from.
#[derive(Clone, Debug)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub text: String,
    pub path: PathBuf,
}

impl LoadedConfig {
    /// Parses `path`; relative directories become absolute against the
    /// config's parent directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::invalid(format!("cannot read config {}: {e}", path.display())))?;
        let mut config: ExperimentConfig =
            toml::from_str(&text).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?;
        let base = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_default();
        let base = std::path::absolute(if base.as_os_str().is_empty() { Path::new(".") } else { &base })
            .map_err(|e| Error::io(&base, e))?;
        for p in [&mut config.dataset.dir, &mut config.experiment.out_dir] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        config.validate()?;
        Ok(Self {
            config,
            text,
            path: path.to_path_buf(),
        })
    }

    pub fn sha256(&self) -> String {
        sha256_hex(self.text.as_bytes())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let spec = self.dataset.spec()?;
        self.network_config(&spec)?.validate()?;
        self.train.validate()?;
        if self.experiment.seeds.is_empty() {
            return Err(Error::invalid("experiment.seeds must not be empty"));
        }
        if self.experiment.name.is_empty() || self.experiment.name.contains(['/', '\\']) {
            return Err(Error::invalid("experiment.name must be a plain, non-empty name"));
        }
        let e = &self.eval;
        if e.every_epochs == 0 || e.n_per_condition == 0 || e.report_samples == 0 {
            return Err(Error::invalid("eval counts must be positive"));
        }
        if e.curve_samples == 0 || e.mosaic_rows == 0 || e.histogram_bins == 0 {
            return Err(Error::invalid("eval counts must be positive"));
        }
        if let Some(t) = e.truncation {
            TruncationSpec::new(t)?;
        }
        if matches!(&e.outlier_conditions, Some(c) if c.is_empty()) {
            return Err(Error::invalid("eval.outlier_conditions must not be empty"));
        }
        if self.sigma(&spec) <= 0.0 {
            return Err(Error::invalid("eval.sigma must be positive"));
        }
        if self.max_lag(&spec) >= spec.resolution {
            return Err(Error::invalid("eval.max_lag must be below the resolution"));
        }
        Ok(())
    }

    pub fn network_config(&self, spec: &DatasetSpec) -> Result<NetworkConfig> {
        let n = &self.network;
        let represented = spec.represented();
        let attention_resolution = n.attention.then(|| n.attention_resolution.unwrap_or(spec.resolution / 2));
        let config = NetworkConfig {
            resolution: spec.resolution,
            facies_count: spec.facies_count(),
            g_width: n.g_width,
            d_capacity: n.d_capacity,
            attention_resolution,
            inject_after_block: n.inject_after_block,
            conditioning: n.conditioning,
            condition_range: [represented[0], *represented.last().expect("non-empty")],
        };
        config.validate()?;
        Ok(config)
    }

    pub fn sigma(&self, spec: &DatasetSpec) -> f64 {
        self.eval.sigma.unwrap_or(spec.tolerance)
    }

    pub fn max_lag(&self, spec: &DatasetSpec) -> usize {
        self.eval.max_lag.unwrap_or(spec.resolution / 2)
    }

    pub fn outlier_conditions(&self, spec: &DatasetSpec) -> Vec<f64> {
        self.eval.outlier_conditions.clone().unwrap_or_else(|| {
            let r = spec.represented();
            let (lo, hi) = (r[0], *r.last().expect("non-empty"));
            if lo == hi {
                return vec![lo];
            }
            (0..11).map(|i| round6(lo + (hi - lo) * i as f64 / 10.0)).collect()
        })
    }

    /// Short name of the swept axes' values, e.g. `continuous-cbn_fixed-0.3M`.
    pub fn variant_label(&self) -> String {
        format!(
            "{}-{}-{}",
            self.train.condition_sampling.label(),
            self.network.conditioning.label(),
            self.network.d_capacity.label()
        )
    }

    /// One child config per point of the sweep grid, or just `self` without
    /// a sweep. Children have no sweep section, are named after their
    /// variant and live under `out_dir/name`.
    pub fn expand(&self) -> Vec<ExperimentConfig> {
        if self.sweep.is_empty() {
            return vec![self.clone()];
        }
        fn pick<T: Clone>(v: &[T], d: T) -> Vec<T> {
            if v.is_empty() {
                vec![d]
            } else {
                v.to_vec()
            }
        }
        let sampling = pick(&self.sweep.condition_sampling, self.train.condition_sampling);
        let conditioning = pick(&self.sweep.conditioning, self.network.conditioning);
        let capacity = pick(&self.sweep.d_capacity, self.network.d_capacity);
        let mut out = Vec::new();
        for &s in &sampling {
            for &c in &conditioning {
                for &d in &capacity {
                    let mut child = self.clone();
                    child.sweep = SweepSection::default();
                    child.train.condition_sampling = s;
                    child.network.conditioning = c;
                    child.network.d_capacity = d;
                    child.experiment.out_dir = self.experiment.out_dir.join(&self.experiment.name);
                    child.experiment.name = child.variant_label();
                    out.push(child);
                }
            }
        }
        out
    }

    /// Directory of the run for `seed`.
    pub fn run_dir(&self, seed: u64) -> PathBuf {
        self.experiment.out_dir.join(&self.experiment.name).join(format!("seed{seed}"))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

fn round6(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}
