use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{sha256_hex, ExperimentConfig, LoadedConfig};
use super::plot::{histogram_plot, line_plot, write_mosaic, Series};
use crate::error::{Error, Result};
use crate::eval::{
    average_outlier_percentage, connectivity_function, outlier_percentage, proportion_histogram, sample_latents,
    two_point_probability, FaciesGenerator, Histogram, NetworkSampler, OutlierReport, TruncationSpec,
};
use crate::grid::facies_proportion;
use crate::model::decode;
use crate::nn::Mode;
use crate::synth::{build_dataset, Dataset, MANIFEST_FILE};
use crate::train::{read_eval_log, read_loss_log, EvalLog, EvalRecord, LossLog, Trainer, TrainingData};

pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const BEST_FILE: &str = "best.bin";
pub const LOSS_FILE: &str = "loss.tsv";
pub const EVAL_FILE: &str = "eval.tsv";
pub const ARTIFACT_FILE: &str = "artifact.json";
pub const CONFIG_SNAPSHOT: &str = "config.toml";

/// Progress sink for long-running commands.
pub type Progress<'a> = &'a mut dyn FnMut(&str);

/// Identity lines embedded in every emitted report and figure.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub config_sha256: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint_sha256: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Provenance {
    pub fn new(config_sha256: String) -> Self {
        Self {
            tool: format!("faciesgan {}", env!("CARGO_PKG_VERSION")),
            config_sha256,
            checkpoint_sha256: None,
            seed: None,
        }
    }

    pub fn lines(&self) -> Vec<String> {
        let mut out = vec![self.tool.clone(), format!("config_sha256 {}", self.config_sha256)];
        if let Some(c) = &self.checkpoint_sha256 {
            out.push(format!("checkpoint_sha256 {c}"));
        }
        if let Some(s) = self.seed {
            out.push(format!("seed {s}"));
        }
        out
    }
}

fn file_sha256(path: &Path) -> Result<String> {
    Ok(sha256_hex(&std::fs::read(path).map_err(|e| Error::io(path, e))?))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("serializable");
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthOutput {
    pub dir: PathBuf,
    pub entries: usize,
    pub histogram_tsv: PathBuf,
    pub histogram_svg: PathBuf,
}

/// Builds the configured dataset and plots its label histogram. An existing
/// dataset is only replaced with `force`.
pub fn cmd_synth(cfg: &LoadedConfig, force: bool) -> Result<SynthOutput> {
    let spec = cfg.config.dataset.spec()?;
    let dir = &cfg.config.dataset.dir;
    let occupied = dir.exists()
        && std::fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .next()
            .is_some();
    if occupied {
        if !force {
            return Err(Error::Exists(dir.clone()));
        }
        if !dir.join(MANIFEST_FILE).exists() {
            return Err(Error::invalid(format!(
                "{} is not a dataset directory; refusing to delete it",
                dir.display()
            )));
        }
        std::fs::remove_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let manifest = build_dataset(&spec, dir)?;
    let labels: Vec<f64> = manifest.entries.iter().map(|e| e.proportion_label).collect();
    let targets = spec.represented();
    let pad = 3.0 * spec.tolerance;
    let range = (targets[0] - pad, targets[targets.len() - 1] + pad);
    let bins = ((range.1 - range.0) / (spec.tolerance / 4.0)).round().max(1.0) as usize;
    let all = Histogram::from_values(&labels, bins, Some(range))?;
    let prov = Provenance::new(cfg.sha256()).lines();
    let histogram_tsv = dir.join("label_histogram.tsv");
    all.write(&histogram_tsv, &prov)?;
    let per_class: Vec<(String, Histogram)> = spec
        .classes
        .iter()
        .enumerate()
        .map(|(k, c)| {
            let v: Vec<f64> = manifest
                .entries
                .iter()
                .filter(|e| e.class_index == k)
                .map(|e| e.proportion_label)
                .collect();
            Histogram::from_values(&v, bins, Some(range)).map(|h| (format!("{:.1}%", 100.0 * c.target), h))
        })
        .collect::<Result<_>>()?;
    let refs: Vec<(String, &Histogram)> = per_class.iter().map(|(l, h)| (l.clone(), h)).collect();
    let histogram_svg = dir.join("label_histogram.svg");
    histogram_plot(
        &histogram_svg,
        "Training-set proportions",
        "facies proportion",
        &refs,
        &targets,
        &prov,
    )?;
    Ok(SynthOutput {
        dir: dir.clone(),
        entries: manifest.entries.len(),
        histogram_tsv,
        histogram_svg,
    })
}

/// Everything a finished (or interrupted) training run leaves behind.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunArtifact {
    pub seed: u64,
    pub run_dir: PathBuf,
    pub config_snapshot: PathBuf,
    pub config_sha256: String,
    pub checkpoint: PathBuf,
    pub best_checkpoint: Option<PathBuf>,
    pub loss_log: PathBuf,
    pub eval_log: PathBuf,
    pub eval_records: Vec<EvalRecord>,
    pub plots: Vec<PathBuf>,
    pub epochs_completed: u64,
    pub steps: u64,
    pub best_epoch: Option<u64>,
    pub best_average_outlier_pct: Option<f64>,
}

impl RunArtifact {
    pub fn load(run_dir: &Path) -> Result<Self> {
        let path = run_dir.join(ARTIFACT_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::format(&path, e.to_string()))
    }
}

#[derive(Clone, Debug, Default)]
pub struct TrainOptions {
    /// Train only this seed instead of every configured seed.
    pub seed: Option<u64>,
    /// Continue from this trainer checkpoint.
    pub resume: Option<PathBuf>,
    /// Discard an existing run directory.
    pub force: bool,
}

fn load_training_data(config: &ExperimentConfig) -> Result<(TrainingData, crate::synth::DatasetSpec)> {
    let spec = config.dataset.spec()?;
    let network = config.network_config(&spec)?;
    let dir = &config.dataset.dir;
    if !dir.join(MANIFEST_FILE).exists() {
        return Err(Error::invalid(format!(
            "no dataset at {} (run `faciesgan synth` first)",
            dir.display()
        )));
    }
    let dataset = Dataset::load(dir)?;
    if dataset.manifest.spec != spec {
        return Err(Error::invalid(format!(
            "dataset at {} was built from a different spec (rerun synth with --force)",
            dir.display()
        )));
    }
    Ok((TrainingData::from_dataset(&dataset, &network)?, spec))
}

/// Trains every selected seed of `cfg` in turn.
pub fn cmd_train(cfg: &LoadedConfig, opts: &TrainOptions, progress: Progress<'_>) -> Result<Vec<RunArtifact>> {
    if !cfg.config.sweep.is_empty() {
        return Err(Error::invalid("config defines a sweep; use `faciesgan sweep`"));
    }
    if let Some(path) = &opts.resume {
        let trainer = Trainer::load(path)?;
        let seed = trainer.config.seed;
        if opts.seed.is_some_and(|s| s != seed) {
            return Err(Error::invalid(format!("checkpoint was trained with seed {seed}")));
        }
        return Ok(vec![train_run(&cfg.config, &cfg.text, seed, Some(trainer), opts.force, progress)?]);
    }
    let seeds = match opts.seed {
        Some(s) => vec![s],
        None => cfg.config.experiment.seeds.clone(),
    };
    seeds
        .into_iter()
        .map(|seed| train_run(&cfg.config, &cfg.text, seed, None, opts.force, progress))
        .collect()
}

/// One training run into `config.run_dir(seed)`, resuming from `resume`
/// when given. Checkpoints and logs are written after every epoch, so an
/// error leaves the last completed epoch on disk.
pub fn train_run(
    config: &ExperimentConfig,
    config_text: &str,
    seed: u64,
    resume: Option<Trainer>,
    force: bool,
    progress: Progress<'_>,
) -> Result<RunArtifact> {
    let (data, spec) = load_training_data(config)?;
    let network = config.network_config(&spec)?;
    let mut train_cfg = config.train.clone();
    train_cfg.seed = seed;
    let dir = config.run_dir(seed);
    let checkpoint = dir.join(CHECKPOINT_FILE);
    let resuming = resume.is_some();
    let mut trainer = match resume {
        Some(mut t) => {
            // Only the epoch budget may change between a checkpoint and its resume.
            let mut expected = train_cfg.clone();
            expected.epochs = t.config.epochs;
            if t.config != expected || t.network() != &network {
                return Err(Error::invalid("checkpoint does not match the config's network or training section"));
            }
            t.config.epochs = train_cfg.epochs;
            t
        }
        None => {
            if checkpoint.exists() {
                if !force {
                    return Err(Error::Exists(dir));
                }
                std::fs::remove_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            }
            Trainer::new(train_cfg, &network, &data.represented)?
        }
    };
    create_dir(&dir)?;
    let snapshot = dir.join(CONFIG_SNAPSHOT);
    std::fs::write(&snapshot, config_text).map_err(|e| Error::io(&snapshot, e))?;
    let config_sha256 = sha256_hex(config_text.as_bytes());

    let loss_path = dir.join(LOSS_FILE);
    let eval_path = dir.join(EVAL_FILE);
    let wall_offset = if resuming && loss_path.exists() {
        read_loss_log(&loss_path)?
            .iter()
            .filter(|r| r.0 < trainer.step)
            .map(|r| r.3)
            .fold(0.0, f64::max)
    } else {
        0.0
    };
    let mut loss_log = LossLog::open(&loss_path, resuming.then_some(trainer.step))?;
    let mut eval_log = EvalLog::open(&eval_path, resuming.then_some(trainer.epoch))?;
    let mut records = if resuming { read_eval_log(&eval_path)? } else { Vec::new() };
    let mut best = records
        .iter()
        .map(|r| r.average_outlier_pct)
        .fold(None, |b: Option<f64>, v| Some(b.map_or(v, |b| b.min(v))));

    let conditions = config.outlier_conditions(&spec);
    let sigma = config.sigma(&spec);
    let code = spec.facies();
    let epochs = config.train.epochs as u64;
    let start = Instant::now();
    while trainer.epoch < epochs {
        let result = trainer.train_epoch(&data, |r| {
            loss_log.append(r.step, r.d_loss, r.g_loss, wall_offset + start.elapsed().as_secs_f64())
        });
        loss_log.flush()?;
        let summary = result?;
        let mut line = format!(
            "seed {seed} epoch {}/{epochs}: d_loss {:.4} g_loss {:.4}",
            trainer.epoch, summary.mean_d_loss, summary.mean_g_loss
        );
        if trainer.epoch % config.eval.every_epochs as u64 == 0 || trainer.epoch == epochs {
            let mut sampler = NetworkSampler::new(trainer.ema_generator()?, TruncationSpec::unbounded());
            let report = average_outlier_percentage(
                &mut sampler,
                &conditions,
                config.eval.n_per_condition,
                code,
                sigma,
                config.eval.seed,
            )?;
            let rec = EvalRecord {
                epoch: trainer.epoch,
                step: trainer.step,
                average_outlier_pct: report.average_pct,
            };
            eval_log.append(&rec)?;
            line += &format!(" outliers {:.2}%", rec.average_outlier_pct);
            if best.is_none_or(|b| rec.average_outlier_pct < b) {
                best = Some(rec.average_outlier_pct);
                trainer.save(&dir.join(BEST_FILE))?;
            }
            records.push(rec);
        }
        trainer.save(&checkpoint)?;
        progress(&line);
    }

    let mut prov = Provenance::new(config_sha256.clone());
    prov.seed = Some(seed);
    let mut plots = Vec::new();
    if !records.is_empty() {
        let p = dir.join("outlier_curve.svg");
        let points = records.iter().map(|r| (r.epoch as f64, r.average_outlier_pct)).collect();
        line_plot(
            &p,
            "Average outlier percentage",
            "epoch",
            "outliers (%)",
            &[Series::new(config.variant_label(), points)],
            &prov.lines(),
        )?;
        plots.push(p);
    }
    let losses = read_loss_log(&loss_path)?;
    if !losses.is_empty() {
        let p = dir.join("losses.svg");
        let d = losses.iter().map(|r| (r.0 as f64, r.1)).collect();
        let g = losses.iter().map(|r| (r.0 as f64, r.2)).collect();
        line_plot(
            &p,
            "Losses",
            "step",
            "loss",
            &[Series::new("discriminator", d), Series::new("generator", g)],
            &prov.lines(),
        )?;
        plots.push(p);
    }
    let best_rec = records
        .iter()
        .min_by(|a, b| a.average_outlier_pct.total_cmp(&b.average_outlier_pct));
    let artifact = RunArtifact {
        seed,
        run_dir: dir.clone(),
        config_snapshot: snapshot,
        config_sha256,
        checkpoint,
        best_checkpoint: Some(dir.join(BEST_FILE)).filter(|p| p.exists()),
        loss_log: loss_path,
        eval_log: eval_path,
        best_epoch: best_rec.map(|r| r.epoch),
        best_average_outlier_pct: best_rec.map(|r| r.average_outlier_pct),
        eval_records: records,
        plots,
        epochs_completed: trainer.epoch,
        steps: trainer.step,
    };
    write_json(&dir.join(ARTIFACT_FILE), &artifact)?;
    Ok(artifact)
}

#[derive(Clone, Debug, Default)]
pub struct EvalOptions {
    /// Which training run to evaluate; defaults to the first configured seed.
    pub seed: Option<u64>,
    /// Explicit checkpoint; defaults to the run's best, then latest.
    pub checkpoint: Option<PathBuf>,
    /// Overrides the configured truncation threshold.
    pub truncation: Option<f64>,
    pub allow_extrapolation: bool,
    /// Output directory; defaults to `<run>/eval`.
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionStats {
    pub set: String,
    pub condition: f64,
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    pub outlier_pct: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalOutput {
    pub out_dir: PathBuf,
    pub provenance: Provenance,
    pub checkpoint: PathBuf,
    pub conditions: Vec<ConditionStats>,
    pub average_outlier_pct: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncation: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncated_average_outlier_pct: Option<f64>,
    pub files: Vec<PathBuf>,
}

fn tag(y: f64) -> String {
    format!("y{:.4}", y)
}

/// Samples a checkpoint and writes mosaics, histograms, lag curves and
/// outlier reports. Identical inputs produce identical files.
pub fn cmd_eval(cfg: &LoadedConfig, opts: &EvalOptions, progress: Progress<'_>) -> Result<EvalOutput> {
    let config = &cfg.config;
    if !config.sweep.is_empty() {
        return Err(Error::invalid("config defines a sweep; evaluate a child config instead"));
    }
    let spec = config.dataset.spec()?;
    let network = config.network_config(&spec)?;
    let truncation = match opts.truncation.or(config.eval.truncation) {
        Some(t) => Some(TruncationSpec::new(t)?),
        None => None,
    };
    let sets: Vec<(&str, Vec<f64>)> = [
        ("represented", spec.represented()),
        ("interpolated", config.eval.interpolated.clone()),
        ("extrapolated", config.eval.extrapolated.clone()),
    ]
    .into_iter()
    .filter(|(_, c)| !c.is_empty())
    .collect();
    for (_, conds) in &sets {
        for &y in conds {
            network.check_condition(y, opts.allow_extrapolation)?;
        }
    }
    let seed = opts.seed.unwrap_or(config.experiment.seeds[0]);
    let run_dir = config.run_dir(seed);
    let checkpoint = match &opts.checkpoint {
        Some(p) => p.clone(),
        None => [BEST_FILE, CHECKPOINT_FILE]
            .iter()
            .map(|f| run_dir.join(f))
            .find(|p| p.exists())
            .ok_or_else(|| Error::invalid(format!("no checkpoint in {}", run_dir.display())))?,
    };
    let trainer = Trainer::load(&checkpoint)?;
    if trainer.network() != &network {
        return Err(Error::invalid("checkpoint network does not match the config"));
    }
    let mut generator = trainer.ema_generator()?;
    generator.set_allow_extrapolation(opts.allow_extrapolation);
    let out_dir = opts.out.clone().unwrap_or_else(|| run_dir.join("eval"));
    create_dir(&out_dir)?;
    let mut prov = Provenance::new(cfg.sha256());
    prov.checkpoint_sha256 = Some(file_sha256(&checkpoint)?);
    prov.seed = Some(seed);
    let lines = prov.lines();
    let code = spec.facies();
    let sigma = config.sigma(&spec);
    let eval_seed = config.eval.seed;
    let mut files = Vec::new();

    // Mosaic: fixed latent rows across condition columns.
    let columns: Vec<f64> = {
        let mut c: Vec<f64> = sets.iter().flat_map(|(_, v)| v.iter().copied()).collect();
        c.sort_by(f64::total_cmp);
        c.dedup();
        c
    };
    let mut rng = ChaCha8Rng::seed_from_u64(eval_seed);
    rng.set_stream(u64::MAX);
    let z = sample_latents(&TruncationSpec::unbounded(), config.eval.mosaic_rows, &mut rng)?;
    let mut rows = vec![Vec::new(); config.eval.mosaic_rows];
    for &y in &columns {
        let imgs = generator.forward(&z, &vec![y; z.nrows()], Mode::Eval)?;
        for (r, g) in decode(&imgs).into_iter().enumerate() {
            rows[r].push(g);
        }
    }
    let mosaic = out_dir.join("mosaic.png");
    let mut mosaic_lines = lines.clone();
    mosaic_lines.push(format!(
        "columns {}",
        columns.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(" ")
    ));
    write_mosaic(&mosaic, &rows, (256 / spec.resolution).max(1), 2, &mosaic_lines)?;
    files.push(mosaic);
    progress("mosaic written");

    // Proportion histograms and per-condition statistics.
    let mut sampler = NetworkSampler::new(generator, TruncationSpec::unbounded());
    let n = config.eval.report_samples;
    let pad = 6.0 * sigma;
    let range = (columns[0] - pad, columns[columns.len() - 1] + pad);
    let bins = config.eval.histogram_bins * columns.len().max(1);
    let mut stats = Vec::new();
    let mut generated = Vec::new();
    for (set, conds) in &sets {
        let mut hists = Vec::new();
        for &y in conds {
            let idx = columns.iter().position(|&c| c == y).expect("column");
            let mut rng = ChaCha8Rng::seed_from_u64(eval_seed);
            rng.set_stream(idx as u64);
            let samples = sampler.generate(y, n, &mut rng)?;
            let h = proportion_histogram(&samples, code, bins, Some(range))?;
            let p = out_dir.join(format!("histogram_{}.tsv", tag(y)));
            let mut hl = lines.clone();
            hl.push(format!("condition {y}"));
            h.write(&p, &hl)?;
            files.push(p);
            stats.push(ConditionStats {
                set: set.to_string(),
                condition: y,
                n,
                mean: h.mean,
                std: h.std,
                outlier_pct: outlier_percentage(&samples, code, y, sigma)?,
            });
            hists.push((format!("{:.1}%", 100.0 * y), h));
            generated.push((y, samples));
        }
        let p = out_dir.join(format!("histograms_{set}.svg"));
        let refs: Vec<(String, &Histogram)> = hists.iter().map(|(l, h)| (l.clone(), h)).collect();
        histogram_plot(&p, &format!("Generated proportions ({set})"), "facies proportion", &refs, conds, &lines)?;
        files.push(p);
        progress(&format!("{set} histograms written"));
    }
    let table = out_dir.join("proportions.tsv");
    let rows: Vec<String> = stats
        .iter()
        .map(|s| format!("{}\t{}\t{}\t{}\t{}\t{}", s.set, s.condition, s.n, s.mean, s.std, s.outlier_pct))
        .collect();
    crate::eval::write_table(&table, &lines, "set\tcondition\tn\tmean\tstd\toutlier_pct", &rows)?;
    files.push(table);

    // Two-point and connectivity curves: real classes against generated
    // samples at the same conditions.
    let dataset = Dataset::load(&config.dataset.dir)?;
    let max_lag = config.max_lag(&spec);
    let m = config.eval.curve_samples;
    let mut tp_series = Vec::new();
    let mut cf_series = Vec::new();
    for (k, class) in spec.classes.iter().enumerate() {
        let real: Vec<_> = dataset.class_grids(k).into_iter().take(m).collect();
        let Some((_, fake)) = generated.iter().find(|(y, _)| *y == class.target) else { continue };
        let fake = &fake[..m.min(fake.len())];
        for (kind, series) in [("two_point", &mut tp_series), ("connectivity", &mut cf_series)] {
            for (who, set) in [("real", &real[..]), ("generated", fake)] {
                let curve = if kind == "two_point" {
                    two_point_probability(set, code, max_lag)?
                } else {
                    connectivity_function(set, code, max_lag, config.eval.neighborhood)?
                };
                let p = out_dir.join(format!("{kind}_{who}_{}.tsv", tag(class.target)));
                curve.write(&p, &lines)?;
                files.push(p);
                let pts = curve.lags.iter().zip(&curve.values).map(|(&l, &v)| (l as f64, v)).collect();
                let s = Series::new(format!("{who} {:.1}%", 100.0 * class.target), pts);
                series.push(if who == "real" { s.dashed() } else { s });
            }
        }
    }
    for (kind, title, series) in [
        ("two_point", "Two-point probability", &tp_series),
        ("connectivity", "Connectivity function", &cf_series),
    ] {
        if series.is_empty() {
            continue;
        }
        let p = out_dir.join(format!("{kind}.svg"));
        line_plot(&p, title, "lag (pixels)", "probability", series, &lines)?;
        files.push(p);
    }
    progress("lag curves written");

    // Outlier report, optionally paired with truncated sampling.
    let conds = config.outlier_conditions(&spec);
    let plain = average_outlier_percentage(&mut sampler, &conds, n, code, sigma, eval_seed)?;
    let p = out_dir.join("outliers_nontruncated.tsv");
    plain.write(&p, &lines)?;
    files.push(p);
    let mut truncated_avg = None;
    if let Some(t) = truncation {
        sampler.truncation = t;
        let tr: OutlierReport = average_outlier_percentage(&mut sampler, &conds, n, code, sigma, eval_seed)?;
        let p = out_dir.join("outliers_truncated.tsv");
        let mut tl = lines.clone();
        tl.push(t.label());
        tr.write(&p, &tl)?;
        files.push(p);
        let paired = out_dir.join("outliers_paired.tsv");
        let rows: Vec<String> = conds
            .iter()
            .zip(plain.outlier_pct.iter().zip(&tr.outlier_pct))
            .map(|(c, (a, b))| format!("{c}\t{a}\t{b}"))
            .collect();
        crate::eval::write_table(&paired, &tl, "condition\tnon_truncated_pct\ttruncated_pct", &rows)?;
        files.push(paired);
        truncated_avg = Some(tr.average_pct);
    }
    progress("outlier report written");

    let output = EvalOutput {
        out_dir: out_dir.clone(),
        provenance: prov,
        checkpoint,
        conditions: stats,
        average_outlier_pct: plain.average_pct,
        truncation: truncation.and_then(|t| t.threshold),
        truncated_average_outlier_pct: truncated_avg,
        files,
    };
    write_json(&out_dir.join("metrics.json"), &output)?;
    Ok(output)
}

/// One row of a sweep summary: a variant's best outlier percentage per seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariantSummary {
    pub variant: String,
    pub condition_sampling: String,
    pub conditioning: String,
    pub d_capacity: String,
    pub seeds: Vec<u64>,
    /// Minimum of each seed's per-epoch curve.
    pub best: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation across seeds.
    pub std: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub variants: Vec<VariantSummary>,
    pub files: Vec<PathBuf>,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    (mean, (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt())
}

/// Trains every sweep member (resuming interrupted runs, skipping finished
/// ones unless `force`) and summarizes them.
pub fn cmd_sweep(cfg: &LoadedConfig, force: bool, progress: Progress<'_>) -> Result<Report> {
    let config = &cfg.config;
    for child in config.expand() {
        let text = if config.sweep.is_empty() { cfg.text.clone() } else { child.to_toml() };
        let child_dir = child.experiment.out_dir.join(&child.experiment.name);
        create_dir(&child_dir)?;
        let child_path = child_dir.join(CONFIG_SNAPSHOT);
        std::fs::write(&child_path, &text).map_err(|e| Error::io(&child_path, e))?;
        for &seed in &config.experiment.seeds {
            let dir = child.run_dir(seed);
            let done = RunArtifact::load(&dir)
                .map(|a| a.epochs_completed >= child.train.epochs as u64)
                .unwrap_or(false);
            if done && !force {
                progress(&format!("{} seed {seed}: complete, skipping", child.variant_label()));
                continue;
            }
            let ckpt = dir.join(CHECKPOINT_FILE);
            let resume = if !force && ckpt.exists() { Some(Trainer::load(&ckpt)?) } else { None };
            train_run(&child, &text, seed, resume, true, progress)?;
        }
    }
    cmd_report(cfg)
}

/// Summarizes completed runs: best (minimum) average outlier percentage per
/// run, then mean and standard deviation across seeds per variant.
pub fn cmd_report(cfg: &LoadedConfig) -> Result<Report> {
    let config = &cfg.config;
    let out = config.experiment.out_dir.join(&config.experiment.name);
    let mut variants = Vec::new();
    let mut curves = Vec::new();
    for child in config.expand() {
        let mut seeds = Vec::new();
        let mut best = Vec::new();
        let mut per_epoch: std::collections::BTreeMap<u64, Vec<f64>> = Default::default();
        for &seed in &config.experiment.seeds {
            let path = child.run_dir(seed).join(EVAL_FILE);
            if !path.exists() {
                continue;
            }
            let recs = read_eval_log(&path)?;
            if recs.is_empty() {
                continue;
            }
            seeds.push(seed);
            best.push(recs.iter().map(|r| r.average_outlier_pct).fold(f64::INFINITY, f64::min));
            for r in recs {
                per_epoch.entry(r.epoch).or_default().push(r.average_outlier_pct);
            }
        }
        if seeds.is_empty() {
            continue;
        }
        let (mean, std) = mean_std(&best);
        let label = child.variant_label();
        curves.push(Series::new(
            label.clone(),
            per_epoch.iter().map(|(&e, v)| (e as f64, mean_std(v).0)).collect(),
        ));
        variants.push(VariantSummary {
            variant: label,
            condition_sampling: child.train.condition_sampling.label().into(),
            conditioning: child.network.conditioning.label().into(),
            d_capacity: child.network.d_capacity.label(),
            seeds,
            best,
            mean,
            std,
        });
    }
    if variants.is_empty() {
        return Err(Error::invalid(format!("no evaluated runs under {}", out.display())));
    }
    create_dir(&out)?;
    let lines = Provenance::new(cfg.sha256()).lines();
    let tsv = out.join("report.tsv");
    let rows: Vec<String> = variants
        .iter()
        .map(|v| {
            let seeds: Vec<String> = v.seeds.iter().map(u64::to_string).collect();
            let best: Vec<String> = v.best.iter().map(f64::to_string).collect();
            format!(
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                v.variant,
                v.condition_sampling,
                v.conditioning,
                v.d_capacity,
                seeds.join(","),
                best.join(","),
                v.mean,
                v.std
            )
        })
        .collect();
    crate::eval::write_table(
        &tsv,
        &lines,
        "variant\tcondition_sampling\tconditioning\td_capacity\tseeds\tbest_pct\tmean_pct\tstd_pct",
        &rows,
    )?;
    let md = out.join("report.md");
    let mut text = format!("<!-- {} -->\n\n", lines.join("; "));
    text += "| variant | sampling | conditioning | D capacity | seeds | best outlier % (mean ± std) |\n";
    text += "|---|---|---|---|---|---|\n";
    for v in &variants {
        text += &format!(
            "| {} | {} | {} | {} | {} | {:.2} ± {:.2} |\n",
            v.variant,
            v.condition_sampling,
            v.conditioning,
            v.d_capacity,
            v.seeds.len(),
            v.mean,
            v.std
        );
    }
    std::fs::write(&md, text).map_err(|e| Error::io(&md, e))?;
    let svg = out.join("outlier_curves.svg");
    line_plot(&svg, "Average outlier percentage (mean over seeds)", "epoch", "outliers (%)", &curves, &lines)?;
    let report = Report {
        variants,
        files: vec![tsv, md, svg],
    };
    write_json(&out.join("report.json"), &report)?;
    Ok(report)
}

/// Fraction of a facies in each grid; convenience for reports.
pub fn proportions(grids: &[crate::FaciesGrid], code: u8) -> Vec<f64> {
    grids.iter().map(|g| facies_proportion(g, code)).collect()
}
