use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{generate_channel_realization, generate_splay_realization, ChannelParams};
use crate::error::{Error, Result};
use crate::grid::{facies_proportion, FaciesGrid, CHANNEL, SPLAY};

pub const MANIFEST_FILE: &str = "manifest.tsv";
pub const SPEC_FILE: &str = "dataset.toml";
const MANIFEST_HEADER: &str = "file_path\tproportion_label\tclass_index";

fn default_facies() -> u8 {
    CHANNEL
}

/// One proportion class of a dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassSpec {
    pub target: f64,
    pub count: usize,
    /// Facies whose proportion labels the class: 1 (channels) or 3 (splays).
    #[serde(default = "default_facies")]
    pub facies: u8,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub classes: Vec<ClassSpec>,
    pub resolution: usize,
    pub tolerance: f64,
    pub seed: u64,
    /// Object geometry; defaults are scaled to `resolution` when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channel: Option<ChannelParams>,
}

impl DatasetSpec {
    /// Binary channels at 25/30/35 percent.
    pub fn channels(per_class: usize, resolution: usize, seed: u64) -> Self {
        Self {
            classes: [0.25, 0.30, 0.35]
                .into_iter()
                .map(|target| ClassSpec { target, count: per_class, facies: CHANNEL })
                .collect(),
            resolution,
            tolerance: 0.005,
            seed,
            channel: None,
        }
    }

    /// Multi-facies grids conditioned on 4/7 percent crevasse splays.
    pub fn splays(per_class: usize, resolution: usize, seed: u64) -> Self {
        Self {
            classes: [0.04, 0.07]
                .into_iter()
                .map(|target| ClassSpec { target, count: per_class, facies: SPLAY })
                .collect(),
            resolution,
            tolerance: 0.007,
            seed,
            channel: None,
        }
    }

    pub fn params(&self) -> ChannelParams {
        self.channel
            .clone()
            .unwrap_or_else(|| ChannelParams::for_resolution(self.resolution))
    }

    /// The conditioned facies code (shared by all classes).
    pub fn facies(&self) -> u8 {
        self.classes.first().map_or(CHANNEL, |c| c.facies)
    }

    /// Number of facies codes a grid may contain.
    pub fn facies_count(&self) -> usize {
        if self.facies() == CHANNEL {
            2
        } else {
            4
        }
    }

    pub fn represented(&self) -> Vec<f64> {
        self.classes.iter().map(|c| c.target).collect()
    }

    pub fn total(&self) -> usize {
        self.classes.iter().map(|c| c.count).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes.is_empty() {
            return Err(Error::invalid("dataset needs at least one class"));
        }
        if self.resolution < 8 {
            return Err(Error::invalid("resolution must be at least 8"));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::invalid("tolerance must be positive"));
        }
        let facies = self.facies();
        for (i, c) in self.classes.iter().enumerate() {
            if c.count == 0 {
                return Err(Error::invalid(format!("class {i} has sample_count 0")));
            }
            if c.facies != CHANNEL && c.facies != SPLAY {
                return Err(Error::invalid(format!("class {i}: facies {} cannot be targeted", c.facies)));
            }
            if c.facies != facies {
                return Err(Error::invalid("all classes must target the same facies"));
            }
            if !(c.target > 0.0 && c.target < 1.0) {
                return Err(Error::invalid(format!("class {i}: target {} outside (0, 1)", c.target)));
            }
        }
        if self.classes.windows(2).any(|w| w[1].target <= w[0].target) {
            return Err(Error::invalid("class targets must be strictly increasing"));
        }
        self.params().validate()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("dataset spec serializes")
    }
}

/// Realization number `index` (global across classes) for class `class`.
/// Each entry draws from its own ChaCha stream keyed by `(seed, index)`.
pub fn generate_entry(spec: &DatasetSpec, index: usize, class: usize) -> Result<FaciesGrid> {
    let c = &spec.classes[class];
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(index as u64);
    let params = spec.params();
    let realization = match c.facies {
        SPLAY => generate_splay_realization(&params, spec.resolution, c.target, spec.tolerance, &mut rng)?,
        _ => generate_channel_realization(&params, spec.resolution, c.target, spec.tolerance, &mut rng)?,
    };
    Ok(realization.grid)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ManifestEntry {
    /// Relative to the dataset directory.
    pub file_path: PathBuf,
    pub proportion_label: f64,
    pub class_index: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
    pub spec: DatasetSpec,
}

impl DatasetManifest {
    pub fn to_tsv(&self) -> String {
        let mut out = String::from(MANIFEST_HEADER);
        out.push('\n');
        for e in &self.entries {
            // `{}` on f64 prints the shortest string that parses back exactly
            let _ = writeln!(out, "{}\t{}\t{}", e.file_path.display(), e.proportion_label, e.class_index);
        }
        out
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let manifest = dir.join(MANIFEST_FILE);
        fs::write(&manifest, self.to_tsv()).map_err(|e| Error::io(&manifest, e))?;
        let spec = dir.join(SPEC_FILE);
        fs::write(&spec, self.spec.to_toml()).map_err(|e| Error::io(&spec, e))
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let spec_path = dir.join(SPEC_FILE);
        let text = fs::read_to_string(&spec_path).map_err(|e| Error::io(&spec_path, e))?;
        let spec: DatasetSpec = toml::from_str(&text).map_err(|e| Error::format(&spec_path, e.to_string()))?;
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let mut lines = text.lines();
        if lines.next() != Some(MANIFEST_HEADER) {
            return Err(Error::format(&path, "missing or unexpected header row"));
        }
        let entries = lines
            .enumerate()
            .filter(|(_, l)| !l.is_empty())
            .map(|(i, line)| {
                let bad = || Error::format(&path, format!("malformed row {}: {line:?}", i + 2));
                let mut cols = line.split('\t');
                let (Some(file), Some(label), Some(class), None) =
                    (cols.next(), cols.next(), cols.next(), cols.next())
                else {
                    return Err(bad());
                };
                Ok(ManifestEntry {
                    file_path: PathBuf::from(file),
                    proportion_label: label.parse().map_err(|_| bad())?,
                    class_index: class.parse().map_err(|_| bad())?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { entries, spec })
    }
}

/// Generate every realization of `spec` under `dir` (grid files, manifest and
/// a copy of the spec). On failure, files written by this call are removed.
pub fn build_dataset(spec: &DatasetSpec, dir: &Path) -> Result<DatasetManifest> {
    spec.validate()?;
    let dir_existed = dir.exists();
    let grid_dir = dir.join("grids");
    let grid_dir_existed = grid_dir.exists();
    fs::create_dir_all(&grid_dir).map_err(|e| Error::io(&grid_dir, e))?;

    let mut written: Vec<PathBuf> = Vec::with_capacity(spec.total());
    let cleanup = |written: &[PathBuf]| {
        for p in written {
            let _ = fs::remove_file(p);
        }
        if !grid_dir_existed {
            let _ = fs::remove_dir(&grid_dir);
        }
        if !dir_existed {
            let _ = fs::remove_dir(dir);
        }
    };

    let mut entries = Vec::with_capacity(spec.total());
    let mut index = 0;
    for (class_index, class) in spec.classes.iter().enumerate() {
        for j in 0..class.count {
            let grid = match generate_entry(spec, index, class_index) {
                Ok(g) => g,
                Err(e) => {
                    cleanup(&written);
                    return Err(e);
                }
            };
            let rel = PathBuf::from(format!("grids/c{class_index}_{j:06}.pgm"));
            let path = dir.join(&rel);
            if let Err(e) = grid.write_pgm(&path) {
                cleanup(&written);
                return Err(e);
            }
            written.push(path);
            entries.push(ManifestEntry {
                file_path: rel,
                proportion_label: facies_proportion(&grid, class.facies),
                class_index,
            });
            index += 1;
        }
    }
    let manifest = DatasetManifest { entries, spec: spec.clone() };
    if let Err(e) = manifest.write(dir) {
        written.push(dir.join(MANIFEST_FILE));
        written.push(dir.join(SPEC_FILE));
        cleanup(&written);
        return Err(e);
    }
    Ok(manifest)
}

/// A manifest with its grids loaded into memory.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub grids: Vec<FaciesGrid>,
}

impl Dataset {
    pub fn load(dir: &Path) -> Result<Self> {
        let manifest = DatasetManifest::read(dir)?;
        let grids = manifest
            .entries
            .iter()
            .map(|e| FaciesGrid::read_pgm(&dir.join(&e.file_path)))
            .collect::<Result<Vec<_>>>()?;
        let res = manifest.spec.resolution;
        if let Some(g) = grids.iter().find(|g| g.height() != res || g.width() != res) {
            return Err(Error::Shape(format!(
                "grid {}x{} in a {res}x{res} dataset",
                g.height(),
                g.width()
            )));
        }
        Ok(Self { manifest, grids })
    }

    pub fn labels(&self) -> Vec<f64> {
        self.manifest.entries.iter().map(|e| e.proportion_label).collect()
    }

    /// Grids belonging to class `class`.
    pub fn class_grids(&self, class: usize) -> Vec<FaciesGrid> {
        self.manifest
            .entries
            .iter()
            .zip(&self.grids)
            .filter(|(e, _)| e.class_index == class)
            .map(|(_, g)| g.clone())
            .collect()
    }
}
