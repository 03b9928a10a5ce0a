use std::path::Path;

use ndarray::{concatenate, Array1, Array2, Array4, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{discriminator_loss_and_grad, generator_loss_and_grad, Adam, ConditionSampler, EmaState, SamplingMode};
use crate::error::{Error, Result};
use crate::model::{encode, Archive, Discriminator, Generator, NetworkConfig};
use crate::nn::{lit, Mode, Module};
use crate::synth::Dataset;
use crate::LATENT_DIM;

const ADAM_EPS: f64 = 1e-8;
/// Training-mode passes used to re-estimate normalization statistics of the
/// averaged generator.
const STANDING_PASSES: usize = 8;
const SHUFFLE_SALT: u64 = 0x5348_5546_464c_4521;
const CHECKPOINT_KIND: &str = "faciesgan-trainer";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Discriminator updates per generator update.
    pub d_steps: usize,
    pub ema_decay: f64,
    pub condition_sampling: SamplingMode,
    /// Whether the discriminator's fake term also uses the configured
    /// sampling mode; when false it always samples represented conditions.
    pub sampling_in_discriminator: bool,
    pub adam_betas: [f64; 2],
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 2e-4,
            batch_size: 32,
            epochs: 40,
            d_steps: 1,
            ema_decay: 0.999,
            condition_sampling: SamplingMode::Continuous,
            sampling_in_discriminator: true,
            adam_betas: [0.0, 0.9],
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        if self.batch_size < 2 {
            return Err(Error::invalid("batch_size must be at least 2"));
        }
        if self.d_steps == 0 {
            return Err(Error::invalid("d_steps must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.ema_decay) {
            return Err(Error::invalid("ema_decay must lie in [0, 1]"));
        }
        if self.adam_betas.iter().any(|b| !(0.0..1.0).contains(b)) {
            return Err(Error::invalid("adam_betas must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// Encoded real images with their exact proportion labels.
#[derive(Clone, Debug)]
pub struct TrainingData {
    pub images: Array4<f32>,
    pub labels: Vec<f64>,
    /// Class targets, used as the represented condition set.
    pub represented: Vec<f64>,
}

impl TrainingData {
    pub fn from_dataset(dataset: &Dataset, network: &NetworkConfig) -> Result<Self> {
        let spec = &dataset.manifest.spec;
        if spec.resolution != network.resolution {
            return Err(Error::invalid(format!(
                "dataset resolution {} does not match network resolution {}",
                spec.resolution, network.resolution
            )));
        }
        if spec.facies_count() != network.facies_count {
            return Err(Error::invalid(format!(
                "dataset has {} facies, network expects {}",
                spec.facies_count(),
                network.facies_count
            )));
        }
        let grids: Vec<_> = dataset.grids.iter().collect();
        Ok(Self {
            images: encode(&grids, network.facies_count)?,
            labels: dataset.labels(),
            represented: spec.represented(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    fn batch(&self, idx: &[usize]) -> (Array4<f32>, Vec<f64>) {
        (self.images.select(Axis(0), idx), idx.iter().map(|&i| self.labels[i]).collect())
    }
}

/// What one generator update (and its discriminator updates) did.
#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub step: u64,
    pub epoch: u64,
    /// Mean over the discriminator updates of this step.
    pub d_loss: f64,
    pub g_loss: f64,
    pub d_updates: u64,
    pub g_updates: u64,
    /// Conditions passed to the discriminator in each of its updates: the
    /// real labels followed by the fake conditions.
    pub d_conditions: Vec<Vec<f64>>,
    /// Conditions fed to the generator for each discriminator update.
    pub d_fake_conditions: Vec<Vec<f64>>,
    /// Conditions fed to the generator (and discriminator) in its update.
    pub g_conditions: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochSummary {
    pub epoch: u64,
    pub steps: usize,
    pub mean_d_loss: f64,
    pub mean_g_loss: f64,
}

/// Networks, optimizers, generator EMA and counters.
pub struct Trainer {
    pub config: TrainConfig,
    pub generator: Generator<f32>,
    pub discriminator: Discriminator<f32>,
    pub g_opt: Adam<f32>,
    pub d_opt: Adam<f32>,
    pub ema: EmaState<f32>,
    pub sampler: ConditionSampler,
    pub step: u64,
    pub epoch: u64,
    pub d_updates: u64,
    pub g_updates: u64,
}

impl Trainer {
    /// Fresh networks initialised from `config.seed`. The generator's
    /// condition range must match the span of `represented`.
    pub fn new(config: TrainConfig, network: &NetworkConfig, represented: &[f64]) -> Result<Self> {
        config.validate()?;
        let sampler = ConditionSampler::new(config.condition_sampling, represented)?;
        let span = sampler.interval();
        if (span[0] - network.condition_range[0]).abs() > 1e-12 || (span[1] - network.condition_range[1]).abs() > 1e-12 {
            return Err(Error::invalid(format!(
                "network condition_range {:?} differs from the represented span {span:?}",
                network.condition_range
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut generator = Generator::new(network, &mut rng)?;
        let discriminator = Discriminator::new(network, &mut rng)?;
        let ema = EmaState::new(config.ema_decay, generator.param_values())?;
        let opt = || Adam::new(config.learning_rate, config.adam_betas, ADAM_EPS);
        Ok(Self {
            g_opt: opt(),
            d_opt: opt(),
            config,
            generator,
            discriminator,
            ema,
            sampler,
            step: 0,
            epoch: 0,
            d_updates: 0,
            g_updates: 0,
        })
    }

    pub fn network(&self) -> &NetworkConfig {
        self.generator.config()
    }

    /// Generator updates per epoch over `n` examples.
    pub fn steps_per_epoch(&self, n: usize) -> usize {
        n / (self.config.batch_size * self.config.d_steps)
    }

    fn step_rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(self.step + 1);
        rng
    }

    /// Example order for `epoch`, a pure function of seed and epoch.
    pub fn epoch_order(&self, epoch: u64, n: usize) -> Vec<usize> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed ^ SHUFFLE_SALT);
        rng.set_stream(epoch);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        order
    }

    /// `k` discriminator updates on the given real batches, then one
    /// generator update and an EMA update. Fails before any optimizer step
    /// that would follow a non-finite loss.
    pub fn train_step(&mut self, real: &[(Array4<f32>, Vec<f64>)]) -> Result<StepRecord> {
        if real.len() != self.config.d_steps {
            return Err(Error::invalid(format!(
                "{} real batches for {} discriminator steps",
                real.len(),
                self.config.d_steps
            )));
        }
        let m = self.config.batch_size;
        let mut rng = self.step_rng();
        let d_mode = if self.config.sampling_in_discriminator {
            self.sampler.mode()
        } else {
            SamplingMode::Discrete
        };
        let mut d_losses = Vec::new();
        let mut d_conditions = Vec::new();
        let mut d_fake_conditions = Vec::new();
        for (images, labels) in real {
            if images.dim().0 != m || labels.len() != m {
                return Err(Error::Shape(format!("real batch of {} for batch size {m}", labels.len())));
            }
            let fake_y = self.sampler.sample_as(d_mode, m, &mut rng)?;
            let z = latent(m, &mut rng);
            let fake = self.generator.forward(&z, &fake_y, Mode::Train)?;
            let x = concatenate![Axis(0), images.view(), fake.view()];
            let ys: Vec<f64> = labels.iter().chain(&fake_y).copied().collect();
            let logits = self.discriminator.forward(&x, &ys, Mode::Train)?;
            let logits: Vec<f64> = logits.iter().map(|&v| v as f64).collect();
            let (loss, d_real, d_fake) = discriminator_loss_and_grad(&logits[..m], &logits[m..])?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    step: self.step,
                    d_loss: loss,
                    g_loss: f64::NAN,
                });
            }
            let dl: Array1<f32> = d_real.iter().chain(&d_fake).map(|&g| lit(g)).collect();
            self.discriminator.zero_grad();
            self.discriminator.backward(&dl);
            self.d_opt.step(&mut self.discriminator);
            self.d_updates += 1;
            d_losses.push(loss);
            d_conditions.push(ys);
            d_fake_conditions.push(fake_y);
        }
        let d_loss = d_losses.iter().sum::<f64>() / d_losses.len() as f64;

        let g_y = self.sampler.sample(m, &mut rng)?;
        let z = latent(m, &mut rng);
        let fake = self.generator.forward(&z, &g_y, Mode::Train)?;
        let logits = self.discriminator.forward(&fake, &g_y, Mode::Train)?;
        let logits: Vec<f64> = logits.iter().map(|&v| v as f64).collect();
        let (g_loss, grad) = generator_loss_and_grad(&logits)?;
        if !g_loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                step: self.step,
                d_loss,
                g_loss,
            });
        }
        let dl: Array1<f32> = grad.iter().map(|&g| lit(g)).collect();
        let dx = self.discriminator.backward(&dl);
        self.discriminator.zero_grad();
        self.generator.zero_grad();
        self.generator.backward(&dx);
        self.g_opt.step(&mut self.generator);
        self.g_updates += 1;
        self.ema.update(&self.generator.param_values())?;

        let record = StepRecord {
            step: self.step,
            epoch: self.epoch,
            d_loss,
            g_loss,
            d_updates: self.d_updates,
            g_updates: self.g_updates,
            d_conditions,
            d_fake_conditions,
            g_conditions: g_y,
        };
        self.step += 1;
        Ok(record)
    }

    /// One seeded pass over `data`; `on_step` sees every record.
    pub fn train_epoch(
        &mut self,
        data: &TrainingData,
        mut on_step: impl FnMut(&StepRecord) -> Result<()>,
    ) -> Result<EpochSummary> {
        let steps = self.steps_per_epoch(data.len());
        if steps == 0 {
            return Err(Error::invalid(format!(
                "{} examples do not fill one step of {} x {}",
                data.len(),
                self.config.d_steps,
                self.config.batch_size
            )));
        }
        let order = self.epoch_order(self.epoch, data.len());
        let chunk = self.config.batch_size;
        let mut batches = order.chunks_exact(chunk);
        let (mut d_sum, mut g_sum) = (0.0, 0.0);
        for _ in 0..steps {
            let real: Vec<_> = (0..self.config.d_steps)
                .map(|_| data.batch(batches.next().expect("enough batches")))
                .collect();
            let rec = self.train_step(&real)?;
            d_sum += rec.d_loss;
            g_sum += rec.g_loss;
            on_step(&rec)?;
        }
        let summary = EpochSummary {
            epoch: self.epoch,
            steps,
            mean_d_loss: d_sum / steps as f64,
            mean_g_loss: g_sum / steps as f64,
        };
        self.epoch += 1;
        Ok(summary)
    }

    /// A snapshot generator carrying the averaged weights, with
    /// normalization statistics re-estimated under a fixed seed.
    pub fn ema_generator(&self) -> Result<Generator<f32>> {
        let mut g = self.generator.clone();
        g.load_param_values(&self.ema.shadow)?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(u64::MAX);
        g.recompute_running_stats(STANDING_PASSES, self.config.batch_size, &mut rng)?;
        Ok(g)
    }

    pub fn to_archive(&mut self) -> Result<Archive<f32>> {
        let meta = serde_json::json!({
            "kind": CHECKPOINT_KIND,
            "network": self.network(),
            "train": self.config,
            "represented": self.sampler.represented(),
            "step": self.step,
            "epoch": self.epoch,
            "d_updates": self.d_updates,
            "g_updates": self.g_updates,
            "g_adam_t": self.g_opt.t,
            "d_adam_t": self.d_opt.t,
        });
        let mut a = Archive::new(meta);
        a.push_module("generator", &mut self.generator)?;
        a.push_module("discriminator", &mut self.discriminator)?;
        for (i, t) in self.ema.shadow.iter().enumerate() {
            a.push(format!("ema.{i}"), t.clone())?;
        }
        for (name, opt) in [("g_adam", &self.g_opt), ("d_adam", &self.d_opt)] {
            for (i, (m, v)) in opt.m.iter().zip(&opt.v).enumerate() {
                a.push(format!("{name}.m.{i}"), m.clone())?;
                a.push(format!("{name}.v.{i}"), v.clone())?;
            }
        }
        Ok(a)
    }

    pub fn from_archive(archive: &Archive<f32>) -> Result<Self> {
        let meta = &archive.meta;
        if meta["kind"] != CHECKPOINT_KIND {
            return Err(Error::Shape("not a trainer checkpoint".into()));
        }
        let field = |k: &str| meta[k].clone();
        let parse_err = |e: serde_json::Error| Error::Shape(format!("checkpoint metadata: {e}"));
        let network: NetworkConfig = serde_json::from_value(field("network")).map_err(parse_err)?;
        let config: TrainConfig = serde_json::from_value(field("train")).map_err(parse_err)?;
        let represented: Vec<f64> = serde_json::from_value(field("represented")).map_err(parse_err)?;
        let counter = |k: &str| -> Result<u64> {
            meta[k].as_u64().ok_or_else(|| Error::Shape(format!("checkpoint metadata lacks {k}")))
        };
        let mut t = Trainer::new(config, &network, &represented)?;
        archive.restore_module("generator", &mut t.generator)?;
        archive.restore_module("discriminator", &mut t.discriminator)?;
        for (i, s) in t.ema.shadow.iter_mut().enumerate() {
            let src = archive.require(&format!("ema.{i}"))?;
            if src.shape() != s.shape() {
                return Err(Error::Shape(format!("ema.{i} shape")));
            }
            s.assign(src);
        }
        for (name, key, opt) in [("g_adam", "g_adam_t", &mut t.g_opt), ("d_adam", "d_adam_t", &mut t.d_opt)] {
            opt.t = counter(key)?;
            let mut i = 0;
            while let (Some(m), Some(v)) = (archive.get(&format!("{name}.m.{i}")), archive.get(&format!("{name}.v.{i}"))) {
                opt.m.push(m.clone());
                opt.v.push(v.clone());
                i += 1;
            }
        }
        t.step = counter("step")?;
        t.epoch = counter("epoch")?;
        t.d_updates = counter("d_updates")?;
        t.g_updates = counter("g_updates")?;
        Ok(t)
    }

    pub fn save(&mut self, path: &Path) -> Result<()> {
        let archive = self.to_archive()?;
        let tmp = path.with_extension("tmp");
        archive.save(&tmp)?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_archive(&Archive::load(path)?).map_err(|e| match e {
            Error::Shape(msg) => Error::format(path, msg),
            other => other,
        })
    }
}

fn latent(m: usize, rng: &mut ChaCha8Rng) -> Array2<f32> {
    Array2::from_shape_simple_fn((m, LATENT_DIM), || {
        let v: f64 = StandardNormal.sample(rng);
        v as f32
    })
}
