use ndarray::{Array2, ArrayD, IxDyn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::model::{Capacity, Conditioning, NetworkConfig};
use crate::nn::{Mode, Module};
use crate::synth::{build_dataset, Dataset, DatasetSpec};

fn tiny_network() -> NetworkConfig {
    NetworkConfig {
        resolution: 16,
        facies_count: 2,
        g_width: 16,
        d_capacity: Capacity::Width(16),
        attention_resolution: Some(8),
        inject_after_block: 3,
        conditioning: Conditioning::CbnFixed,
        condition_range: [0.25, 0.35],
    }
}

fn tiny_train(seed: u64) -> TrainConfig {
    TrainConfig {
        batch_size: 4,
        epochs: 1,
        seed,
        ..TrainConfig::default()
    }
}

fn tiny_data() -> TrainingData {
    let dir = tempfile::tempdir().unwrap();
    let spec = DatasetSpec::channels(8, 16, 3);
    build_dataset(&spec, dir.path()).unwrap();
    let ds = Dataset::load(dir.path()).unwrap();
    TrainingData::from_dataset(&ds, &tiny_network()).unwrap()
}

#[test]
fn sampler_rejects_empty_and_zero() {
    assert!(ConditionSampler::new(SamplingMode::Discrete, &[]).is_err());
    let s = ConditionSampler::new(SamplingMode::Continuous, &[0.3]).unwrap();
    assert!(s.sample(0, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
}

#[test]
fn singleton_sampler_is_constant() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for mode in [SamplingMode::Discrete, SamplingMode::Continuous] {
        let s = ConditionSampler::new(mode, &[0.3]).unwrap();
        assert!(s.sample(50, &mut rng).unwrap().iter().all(|&y| y == 0.3));
    }
}

#[test]
fn sampler_sorts_and_spans() {
    let s = ConditionSampler::new(SamplingMode::Continuous, &[0.35, 0.25, 0.3, 0.25]).unwrap();
    assert_eq!(s.represented(), &[0.25, 0.3, 0.35]);
    assert_eq!(s.interval(), [0.25, 0.35]);
    assert!(s.supports(0.27) && !s.supports(0.36));
}

#[test]
fn loss_reference_values() {
    let ln2 = std::f64::consts::LN_2;
    assert!((discriminator_loss(&[0.0; 5], &[0.0; 5]).unwrap() - 2.0 * ln2).abs() < 1e-12);
    assert!((generator_loss(&[0.0; 3]).unwrap() - ln2).abs() < 1e-12);
    assert!(discriminator_loss(&[80.0], &[-80.0]).unwrap() < 1e-30);
    assert!(generator_loss(&[80.0]).unwrap() < 1e-30);
    let big = discriminator_loss(&[-80.0], &[80.0]).unwrap();
    assert!((big - 160.0).abs() < 1e-9);
    assert!(discriminator_loss(&[1.0], &[1.0, 2.0]).is_err());
    assert!(generator_loss(&[]).is_err());
}

#[test]
fn ema_closed_forms() {
    let one = || vec![ArrayD::<f32>::ones(IxDyn(&[3]))];
    let zero = || vec![ArrayD::<f32>::zeros(IxDyn(&[3]))];
    let mut e = EmaState::new(0.0, zero()).unwrap();
    e.update(&one()).unwrap();
    assert_eq!(e.shadow, one());
    let mut e = EmaState::new(1.0, zero()).unwrap();
    e.update(&one()).unwrap();
    assert_eq!(e.shadow, zero());
    let mut e = EmaState::new(0.999, zero()).unwrap();
    e.update(&one()).unwrap();
    assert!(e.shadow[0].iter().all(|&v| (v - 0.001).abs() < 1e-7));
    assert!(e.update(&[ArrayD::zeros(IxDyn(&[2]))]).is_err());
    assert!(EmaState::<f32>::new(1.5, zero()).is_err());
}

#[test]
fn adam_first_step_moves_by_learning_rate() {
    let mut lin = crate::nn::Linear::<f64>::new(2, 1, false, false, &mut ChaCha8Rng::seed_from_u64(0));
    let before = lin.weight.value.clone();
    lin.weight.grad = Array2::from_shape_vec((1, 2), vec![3.0, -0.5]).unwrap();
    let mut opt = Adam::new(0.01, [0.0, 0.9], 1e-8);
    opt.step(&mut lin);
    let delta = &lin.weight.value - &before;
    assert!((delta[[0, 0]] + 0.01).abs() < 1e-8);
    assert!((delta[[0, 1]] - 0.01).abs() < 1e-8);
}

#[test]
fn config_validation() {
    let ok = TrainConfig::default();
    assert!(ok.validate().is_ok());
    for bad in [
        TrainConfig { learning_rate: 0.0, ..ok.clone() },
        TrainConfig { d_steps: 0, ..ok.clone() },
        TrainConfig { ema_decay: 1.1, ..ok.clone() },
        TrainConfig { batch_size: 1, ..ok.clone() },
    ] {
        assert!(bad.validate().unwrap_err().is_validation());
    }
    let net = NetworkConfig { condition_range: [0.2, 0.35], ..tiny_network() };
    assert!(Trainer::new(tiny_train(0), &net, &[0.25, 0.3, 0.35]).is_err());
}

#[test]
fn steps_pair_conditions_and_count_updates() {
    let data = tiny_data();
    for (mode, k) in [(SamplingMode::Discrete, 1), (SamplingMode::Continuous, 2)] {
        let cfg = TrainConfig { condition_sampling: mode, d_steps: k, ..tiny_train(5) };
        let mut t = Trainer::new(cfg, &tiny_network(), &data.represented).unwrap();
        let order = t.epoch_order(0, data.len());
        let mut records = Vec::new();
        t.train_epoch(&data, |r| {
            records.push(r.clone());
            Ok(())
        })
        .unwrap();
        assert_eq!(records.len(), data.len() / (4 * k));
        for (i, r) in records.iter().enumerate() {
            assert_eq!(r.d_updates, (k * (i + 1)) as u64);
            assert_eq!(r.g_updates, (i + 1) as u64);
            assert_eq!(r.d_conditions.len(), k);
            for (j, ys) in r.d_conditions.iter().enumerate() {
                let idx = &order[(i * k + j) * 4..(i * k + j + 1) * 4];
                let labels: Vec<f64> = idx.iter().map(|&n| data.labels[n]).collect();
                assert_eq!(&ys[..4], &labels[..]);
                assert_eq!(&ys[4..], &r.d_fake_conditions[j][..]);
            }
            for &y in r.d_fake_conditions.iter().flatten().chain(&r.g_conditions) {
                assert!(t.sampler.supports(y), "{y} outside support");
            }
            assert!(r.d_loss.is_finite() && r.g_loss.is_finite());
        }
    }
}

#[test]
fn fixed_seed_reruns_are_bit_identical() {
    let data = tiny_data();
    let run = || {
        let mut t = Trainer::new(tiny_train(9), &tiny_network(), &data.represented).unwrap();
        let mut losses = Vec::new();
        t.train_epoch(&data, |r| {
            losses.push((r.d_loss.to_bits(), r.g_loss.to_bits()));
            Ok(())
        })
        .unwrap();
        losses
    };
    assert_eq!(run(), run());
}

#[test]
fn resume_equals_straight_run() {
    let data = tiny_data();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ckpt.bin");
    let mut straight = Trainer::new(tiny_train(11), &tiny_network(), &data.represented).unwrap();
    straight.train_epoch(&data, |_| Ok(())).unwrap();
    straight.save(&path).unwrap();
    let mut tail = Vec::new();
    straight
        .train_epoch(&data, |r| {
            tail.push((r.d_loss, r.g_loss));
            Ok(())
        })
        .unwrap();

    let mut resumed = Trainer::load(&path).unwrap();
    assert_eq!(resumed.epoch, 1);
    let mut again = Vec::new();
    resumed
        .train_epoch(&data, |r| {
            again.push((r.d_loss, r.g_loss));
            Ok(())
        })
        .unwrap();
    assert_eq!(tail, again);
    assert_eq!(resumed.to_archive().unwrap(), straight.to_archive().unwrap());
}

#[test]
fn generator_step_descends_against_frozen_discriminator() {
    let data = tiny_data();
    let mut t = Trainer::new(tiny_train(13), &tiny_network(), &data.represented).unwrap();
    t.train_epoch(&data, |_| Ok(())).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let z = Array2::from_shape_simple_fn((4, crate::LATENT_DIM), || {
        rand_distr::Distribution::<f64>::sample(&rand_distr::StandardNormal, &mut rng) as f32
    });
    let ys = [0.26, 0.29, 0.31, 0.34];
    let loss = |t: &mut Trainer| {
        let x = t.generator.forward(&z, &ys, Mode::Train).unwrap();
        let l = t.discriminator.forward(&x, &ys, Mode::Eval).unwrap();
        let l: Vec<f64> = l.iter().map(|&v| v as f64).collect();
        let (loss, g) = generator_loss_and_grad(&l).unwrap();
        (loss, g, x)
    };
    let (before, g, _) = loss(&mut t);
    let dl: ndarray::Array1<f32> = g.iter().map(|&v| v as f32).collect();
    let dx = t.discriminator.backward(&dl);
    t.generator.zero_grad();
    t.generator.backward(&dx);
    let grads = t.generator.param_grads();
    let values: Vec<_> = t
        .generator
        .param_values()
        .into_iter()
        .zip(&grads)
        .map(|(v, g)| v - &(g * 1e-3f32))
        .collect();
    t.generator.load_param_values(&values).unwrap();
    let (after, _, _) = loss(&mut t);
    assert!(after < before, "{after} >= {before}");
}

#[test]
fn ema_generator_is_deterministic() {
    let data = tiny_data();
    let mut t = Trainer::new(tiny_train(3), &tiny_network(), &data.represented).unwrap();
    t.train_epoch(&data, |_| Ok(())).unwrap();
    let z = Array2::<f32>::ones((2, crate::LATENT_DIM));
    let a = t.ema_generator().unwrap().forward(&z, &[0.3, 0.3], Mode::Eval).unwrap();
    let b = t.ema_generator().unwrap().forward(&z, &[0.3, 0.3], Mode::Eval).unwrap();
    assert_eq!(a, b);
}

#[test]
fn logs_truncate_on_resume() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("loss.tsv");
    let mut log = LossLog::open(&p, None).unwrap();
    for s in 0..5 {
        log.append(s, 1.0 + s as f64, 0.5, 0.1).unwrap();
    }
    log.flush().unwrap();
    drop(log);
    let mut log = LossLog::open(&p, Some(3)).unwrap();
    log.append(3, 9.0, 9.0, 0.2).unwrap();
    log.flush().unwrap();
    let rows = read_loss_log(&p).unwrap();
    assert_eq!(rows.iter().map(|r| r.0).collect::<Vec<_>>(), vec![0, 1, 2, 3]);
    assert_eq!(rows[3].1, 9.0);

    let e = dir.path().join("eval.tsv");
    let mut log = EvalLog::open(&e, None).unwrap();
    for epoch in 0..3 {
        log.append(&EvalRecord { epoch, step: epoch * 10, average_outlier_pct: 12.5 }).unwrap();
    }
    drop(log);
    EvalLog::open(&e, Some(1)).unwrap();
    assert_eq!(read_eval_log(&e).unwrap().len(), 2);
}
