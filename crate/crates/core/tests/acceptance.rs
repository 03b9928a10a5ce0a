//! Acceptance criteria for the library, one printed line per criterion.
//!
//! Runs as a plain binary (`harness = false`) so the summary lines are shown
//! by `cargo test`. Criterion 8 trains nine desk-scale models and only runs
//! when `FACIESGAN_FULL_REPRO=1`; `FACIESGAN_REPRO_EPOCHS` and
//! `FACIESGAN_REPRO_SEEDS` shrink it to a reduced-budget probe whose verdict
//! is reported as such. `FACIESGAN_REPRO_DIR` picks the working directory
//! (finished runs there are reused).

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};

use faciesgan::eval::{
    connectivity_function, outlier_percentage, sample_latents, two_point_probability, FaciesGenerator,
    NetworkSampler, Neighborhood, TruncationSpec,
};
use faciesgan::experiment::{train_run, ExperimentConfig, LoadedConfig, RunArtifact, CHECKPOINT_FILE};
use faciesgan::grid::CHANNEL;
use faciesgan::model::{Capacity, Conditioning, NetworkConfig};
use faciesgan::nn::{ConditionalBatchNorm, Linear, Mode, Module, NormKind, SelfAttention};
use faciesgan::synth::{build_dataset, generate_channel_realization, ChannelParams, Dataset, DatasetSpec};
use faciesgan::train::{
    discriminator_loss, discriminator_loss_and_grad, generator_loss, generator_loss_and_grad, SamplingMode,
    StepRecord, TrainConfig, Trainer, TrainingData,
};
use faciesgan::{facies_proportion, FaciesGrid};
use ndarray::{Array, Array1, Array2, Array4, Axis, Dimension};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

type Check = std::result::Result<String, String>;

enum Verdict {
    Pass(String),
    Fail(String),
    NotRun(String),
    Reduced(bool, String),
}

fn main() {
    let criteria: [(u8, &str, fn() -> Verdict); 10] = [
        (1, "CBN variance invariance", || plain(c1_variance_invariance())),
        (2, "CBN mean linearity", || plain(c2_mean_linearity())),
        (3, "gradient checks", || plain(c3_gradients())),
        (4, "spectral norm vs SVD", || plain(c4_spectral_norm())),
        (5, "lag metrics vs brute force", || plain(c5_metric_oracles())),
        (6, "outlier metric exactness", || plain(c6_outliers())),
        (7, "truncation trick", || plain(c7_truncation())),
        (8, "desk-scale training reproduction", c8_reproduction),
        (9, "determinism and resume", || plain(c9_determinism())),
        (10, "synthesizer soundness", || plain(c10_synthesizer())),
    ];
    let mut failed = 0;
    for (id, name, run) in criteria {
        let start = std::time::Instant::now();
        let verdict = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Verdict::Fail(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        let (status, detail) = match verdict {
            Verdict::Pass(d) => ("PASS", d),
            Verdict::Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Verdict::NotRun(d) => ("NOT RUN", d),
            Verdict::Reduced(true, d) => ("REDUCED-BUDGET PASS", d),
            Verdict::Reduced(false, d) => ("REDUCED-BUDGET FAIL", d),
        };
        println!("criterion {id:>2} {status:<20} {name}: {detail} [{secs:.1}s]");
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}

fn plain(c: Check) -> Verdict {
    match c {
        Ok(d) => Verdict::Pass(d),
        Err(d) => Verdict::Fail(d),
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn normal_array<D: Dimension, Sh: ndarray::ShapeBuilder<Dim = D>>(shape: Sh, r: &mut ChaCha8Rng) -> Array<f64, D> {
    Array::from_shape_simple_fn(shape, || r.sample::<f64, _>(StandardNormal))
}

/// Per-map mean and population standard deviation of an NCHW tensor.
fn map_stats(t: &Array4<f64>, c: usize) -> (f64, f64) {
    let plane = t.index_axis(Axis(1), c);
    let n = plane.len() as f64;
    let mean = plane.iter().sum::<f64>() / n;
    let var = plane.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn random_cbn(kind: NormKind, channels: usize, r: &mut ChaCha8Rng) -> ConditionalBatchNorm<f64> {
    let mut bn = ConditionalBatchNorm::new(kind, channels);
    bn.gamma.value = Array1::from_shape_fn(channels, |_| r.random_range(0.3..2.5) * if r.random() { 1.0 } else { -1.0 });
    bn.beta.value = normal_array(channels, r);
    if let Some(s) = bn.beta_slope.as_mut() {
        s.value = normal_array(channels, r) * 5.0;
    }
    if let Some(s) = bn.gamma_slope.as_mut() {
        s.value = normal_array(channels, r) * 5.0;
    }
    bn
}

const YS: [f64; 3] = [0.25, 0.30, 0.35];

fn c1_variance_invariance() -> Check {
    let mut r = rng(1);
    let mut worst: f64 = 0.0;
    let mut standard_spread: f64 = f64::INFINITY;
    for _ in 0..10 {
        let mut fixed = random_cbn(NormKind::FixedScale, 3, &mut r);
        let mut standard = random_cbn(NormKind::Standard, 3, &mut r);
        for _ in 0..50 {
            // 4 x 8 x 8 = 256 values per map.
            let x = normal_array((4, 3, 8, 8), &mut r) * r.random_range(0.1..10.0) + r.random_range(-3.0..3.0);
            let stds = |bn: &mut ConditionalBatchNorm<f64>| -> Vec<[f64; 3]> {
                let outs: Vec<Array4<f64>> = YS.iter().map(|&y| bn.forward(&x, &[y; 4], Mode::Train).unwrap()).collect();
                (0..3).map(|c| [0, 1, 2].map(|k| map_stats(&outs[k], c).1)).collect()
            };
            for s in stds(&mut fixed) {
                let rel = (s[0] - s[1]).abs().max((s[0] - s[2]).abs()) / s[0];
                worst = worst.max(rel);
            }
            for s in stds(&mut standard) {
                let rel = (s[0] - s[1]).abs().max((s[0] - s[2]).abs()) / s[0].max(1e-12);
                standard_spread = standard_spread.min(rel);
            }
        }
    }
    let detail = format!(
        "max relative std spread {worst:.2e} over 500 batches x 10 states (standard variant min {standard_spread:.2e})"
    );
    if worst <= 1e-6 && standard_spread > 1e-6 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn c2_mean_linearity() -> Check {
    let mut r = rng(2);
    let (mut worst_mean, mut worst_collinear): (f64, f64) = (0.0, 0.0);
    for _ in 0..10 {
        let mut bn = random_cbn(NormKind::FixedScale, 3, &mut r);
        for _ in 0..50 {
            let x = normal_array((4, 3, 8, 8), &mut r) * r.random_range(0.1..10.0) + r.random_range(-3.0..3.0);
            let outs: Vec<Array4<f64>> = YS.iter().map(|&y| bn.forward(&x, &[y; 4], Mode::Train).unwrap()).collect();
            for c in 0..3 {
                let (w, b) = (bn.beta_slope.as_ref().unwrap().value[c], bn.beta.value[c]);
                let means = [0, 1, 2].map(|k| map_stats(&outs[k], c).0);
                for (k, &y) in YS.iter().enumerate() {
                    worst_mean = worst_mean.max((means[k] - (w * y + b)).abs());
                }
                // Equal spacing: collinear iff the second difference vanishes.
                worst_collinear = worst_collinear.max((means[0] - 2.0 * means[1] + means[2]).abs());
            }
        }
    }
    let detail = format!("max |mean - (w y + b)| {worst_mean:.2e}, max collinearity residual {worst_collinear:.2e}");
    if worst_mean <= 1e-5 && worst_collinear <= 1e-6 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Fourth-order central differences of `f` around `x`.
fn finite_diff<D: Dimension>(x: &Array<f64, D>, mut f: impl FnMut(&Array<f64, D>) -> f64) -> Array<f64, D> {
    const H: f64 = 1e-4;
    let mut probe = x.clone();
    let mut g = Array::zeros(x.raw_dim());
    for i in 0..x.len() {
        let orig = probe.as_slice_memory_order().unwrap()[i];
        let mut at = |d: f64| {
            probe.as_slice_memory_order_mut().unwrap()[i] = orig + d;
            f(&probe)
        };
        let (p2, p1, m1, m2) = (at(2.0 * H), at(H), at(-H), at(-2.0 * H));
        probe.as_slice_memory_order_mut().unwrap()[i] = orig;
        g.as_slice_memory_order_mut().unwrap()[i] = (-p2 + 8.0 * p1 - 8.0 * m1 + m2) / (12.0 * H);
    }
    g
}

fn rel_error<D: Dimension>(a: &Array<f64, D>, n: &Array<f64, D>) -> f64 {
    let diff = (a - n).mapv(|v| v * v).sum().sqrt();
    let scale = a.mapv(|v| v * v).sum().sqrt().max(n.mapv(|v| v * v).sum().sqrt());
    // Central differences carry roundoff near 1e-12; below this floor a
    // gradient is indistinguishable from zero and the error is absolute.
    diff / scale.max(1e-6)
}

/// Gradient of `sum(weights * layer(x))` with respect to `x` and to every
/// parameter of `layer` (in visit order), analytic vs numeric. Returns the
/// worst relative error.
fn check_same_rank<L: Module<f64> + Clone, D: Dimension>(
    layer: &L,
    x: &Array<f64, D>,
    weights: &Array<f64, D>,
    forward: impl Fn(&mut L, &Array<f64, D>) -> Array<f64, D> + Copy,
    backward: impl Fn(&mut L, &Array<f64, D>) -> Array<f64, D>,
) -> f64 {
    let objective = |l: &mut L, x: &Array<f64, D>| (forward(l, x) * weights).sum();
    let mut analytic = layer.clone();
    analytic.zero_grad();
    forward(&mut analytic, x);
    let dx = backward(&mut analytic, weights);
    let mut worst = rel_error(&dx, &finite_diff(x, |xp| objective(&mut layer.clone(), xp)));

    let grads = analytic.param_grads();
    let values = layer.clone().param_values();
    for (k, (value, grad)) in values.iter().zip(&grads).enumerate() {
        let numeric = finite_diff(value, |vp| {
            let mut l = layer.clone();
            let mut all = values.clone();
            all[k] = vp.clone();
            l.load_param_values(&all).unwrap();
            objective(&mut l, x)
        });
        worst = worst.max(rel_error(grad, &numeric));
    }
    worst
}

fn c3_gradients() -> Check {
    let mut r = rng(3);
    let mut report = Vec::new();
    let mut all_ok = true;
    let mut record = |name: &str, errs: Vec<f64>| {
        let worst = errs.iter().cloned().fold(0.0, f64::max);
        all_ok &= worst <= 1e-4 && errs.len() >= 20;
        report.push(format!("{name} {worst:.1e} ({} configs)", errs.len()));
    };

    for (name, kind) in [("cbn_standard", NormKind::Standard), ("cbn_fixed", NormKind::FixedScale)] {
        let errs = (0..20)
            .map(|_| {
                let (n, c, h, w) = (r.random_range(2..5), r.random_range(1..4), r.random_range(1..4), r.random_range(1..4));
                let bn = random_cbn(kind, c, &mut r);
                let ys: Vec<f64> = (0..n).map(|_| r.random_range(0.2..0.4)).collect();
                let x = normal_array((n, c, h, w), &mut r);
                let wts = normal_array((n, c, h, w), &mut r);
                check_same_rank(
                    &bn,
                    &x,
                    &wts,
                    |l, x| l.forward(x, &ys, Mode::Train).unwrap(),
                    |l, d| l.backward(d),
                )
            })
            .collect();
        record(name, errs);
    }

    let errs = (0..20)
        .map(|i| {
            let (n, c, h, w) = (r.random_range(1..3), r.random_range(1..10), r.random_range(1..4), r.random_range(1..4));
            let mut att = SelfAttention::<f64>::new(c, false, &mut r);
            att.gate.value[0] = r.random_range(-1.5..1.5);
            // Scramble weights so softmax weights are far from uniform.
            for conv in [&mut att.query, &mut att.key, &mut att.value] {
                conv.weight.value = normal_array(conv.weight.value.raw_dim(), &mut r);
                if let Some(b) = conv.bias.as_mut() {
                    b.value = normal_array(b.value.raw_dim(), &mut r);
                }
            }
            let x = normal_array((n, c, h, w), &mut r) * (1.0 + i as f64 / 10.0);
            let wts = normal_array((n, c, h, w), &mut r);
            check_same_rank(&att, &x, &wts, |l, x| l.forward(x, Mode::Train), |l, d| l.backward(d))
        })
        .collect();
    record("self_attention", errs);

    let errs = (0..20)
        .map(|_| {
            let (n, i, o) = (r.random_range(1..5), r.random_range(1..12), r.random_range(1..12));
            let mut lin = Linear::<f64>::new(i, o, true, true, &mut r);
            lin.bias.as_mut().unwrap().value = normal_array(o, &mut r);
            let x = normal_array((n, i), &mut r);
            let wts = normal_array((n, o), &mut r);
            // Eval mode holds the power-iteration vectors fixed, which is
            // the quantity the analytic gradient differentiates.
            check_same_rank(&lin, &x, &wts, |l, x| l.forward(x, Mode::Eval), |l, d| l.backward(d))
        })
        .collect();
    record("spectral_linear", errs);

    let mut d_errs = Vec::new();
    let mut g_errs = Vec::new();
    for _ in 0..20 {
        let m = r.random_range(1..9);
        let real: Array1<f64> = Array1::from_shape_fn(m, |_| r.random_range(-6.0..6.0));
        let fake: Array1<f64> = Array1::from_shape_fn(m, |_| r.random_range(-6.0..6.0));
        let (_, gr, gf) = discriminator_loss_and_grad(real.as_slice().unwrap(), fake.as_slice().unwrap()).unwrap();
        let nr = finite_diff(&real, |p| discriminator_loss(p.as_slice().unwrap(), fake.as_slice().unwrap()).unwrap());
        let nf = finite_diff(&fake, |p| discriminator_loss(real.as_slice().unwrap(), p.as_slice().unwrap()).unwrap());
        d_errs.push(rel_error(&Array1::from(gr), &nr).max(rel_error(&Array1::from(gf), &nf)));
        let (_, gg) = generator_loss_and_grad(fake.as_slice().unwrap()).unwrap();
        let ng = finite_diff(&fake, |p| generator_loss(p.as_slice().unwrap()).unwrap());
        g_errs.push(rel_error(&Array1::from(gg), &ng));
    }
    record("discriminator_loss", d_errs);
    record("generator_loss", g_errs);

    let detail = format!("worst relative error: {}", report.join(", "));
    if all_ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Power iteration converges at a rate set by the gap between the top two
/// singular values, which is small for square-ish Gaussian matrices; the
/// sweep is gated at 200 iterations and the 20-iteration spread is reported.
fn c4_spectral_norm() -> Check {
    const ITERS: usize = 200;
    let mut r = rng(4);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut worst20: f64 = 0.0;
    for i in 0..100 {
        let (rows, cols) = if i == 0 { (256, 512) } else { (r.random_range(1..=256), r.random_range(1..=512)) };
        let w: Array2<f64> = normal_array((rows, cols), &mut r);
        let mut u: Array1<f64> = normal_array(rows, &mut r);
        u /= u.dot(&u).sqrt();
        let top = |iters: usize, u: &mut Array1<f64>| {
            let normalized = faciesgan::nn::spectral_normalize(&w, iters, u);
            nalgebra::DMatrix::from_row_slice(rows, cols, normalized.as_slice().unwrap())
                .singular_values()
                .max()
        };
        worst20 = worst20.max((top(20, &mut u.clone()) - 1.0).abs());
        let s = top(ITERS, &mut u);
        lo = lo.min(s);
        hi = hi.max(s);
    }
    let detail = format!(
        "top singular value after {ITERS} iterations in [{lo:.4}, {hi:.4}] over 100 matrices up to 256x512 \
         (after 20 iterations: worst deviation {worst20:.4})"
    );
    if lo >= 0.99 && hi <= 1.01 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn random_grid(r: &mut ChaCha8Rng, h: usize, w: usize) -> FaciesGrid {
    let p: f64 = r.random_range(0.1..0.9);
    let cells = (0..h * w).map(|_| u8::from(r.random::<f64>() < p)).collect();
    FaciesGrid::from_cells(h, w, cells).unwrap()
}

/// Component id per cell by recursive flood fill (8-neighbourhood).
fn flood_labels(g: &FaciesGrid, code: u8) -> Vec<Option<usize>> {
    fn fill(g: &FaciesGrid, code: u8, r: usize, c: usize, id: usize, out: &mut Vec<Option<usize>>) {
        let (h, w) = (g.height() as i64, g.width() as i64);
        out[r * g.width() + c] = Some(id);
        for dr in -1i64..=1 {
            for dc in -1i64..=1 {
                let (nr, nc) = (r as i64 + dr, c as i64 + dc);
                if nr >= 0 && nr < h && nc >= 0 && nc < w {
                    let (nr, nc) = (nr as usize, nc as usize);
                    if g.get(nr, nc) == code && out[nr * g.width() + nc].is_none() {
                        fill(g, code, nr, nc, id, out);
                    }
                }
            }
        }
    }
    let mut out = vec![None; g.cells().len()];
    let mut next = 0;
    for r in 0..g.height() {
        for c in 0..g.width() {
            if g.get(r, c) == code && out[r * g.width() + c].is_none() {
                fill(g, code, r, c, next, &mut out);
                next += 1;
            }
        }
    }
    out
}

/// Every unordered pair of cells (a cell paired with itself included),
/// binned by rounded Euclidean distance.
fn brute_force(grids: &[FaciesGrid], code: u8, max_lag: usize) -> (Vec<f64>, Vec<f64>) {
    let mut hits = vec![0u64; max_lag + 1];
    let mut linked = vec![0u64; max_lag + 1];
    let mut pairs = vec![0u64; max_lag + 1];
    for g in grids {
        let labels = flood_labels(g, code);
        let n = g.cells().len();
        for a in 0..n {
            for b in a..n {
                let (ra, ca, rb, cb) = (a / g.width(), a % g.width(), b / g.width(), b % g.width());
                let d = (((ra as f64 - rb as f64).powi(2) + (ca as f64 - cb as f64).powi(2)).sqrt()).round() as usize;
                if d > max_lag {
                    continue;
                }
                pairs[d] += 1;
                if g.cells()[a] == code && g.cells()[b] == code {
                    hits[d] += 1;
                    if labels[a] == labels[b] {
                        linked[d] += 1;
                    }
                }
            }
        }
    }
    let ratio = |v: &[u64]| v.iter().zip(&pairs).map(|(&x, &p)| x as f64 / p as f64).collect();
    (ratio(&hits), ratio(&linked))
}

fn c5_metric_oracles() -> Check {
    let mut r = rng(5);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let grids = vec![random_grid(&mut r, 8, 8)];
        let (tp_ref, cf_ref) = brute_force(&grids, 1, 7);
        let tp = two_point_probability(&grids, 1, 7).map_err(|e| e.to_string())?;
        let cf = connectivity_function(&grids, 1, 7, Neighborhood::Eight).map_err(|e| e.to_string())?;
        for k in 0..=7 {
            worst = worst.max((tp.values[k] - tp_ref[k]).abs()).max((cf.values[k] - cf_ref[k]).abs());
        }
    }
    let mut violations = 0;
    for _ in 0..1000 {
        let (h, w) = (r.random_range(2..=12), r.random_range(2..=12));
        let grids: Vec<FaciesGrid> = (0..r.random_range(1..4)).map(|_| random_grid(&mut r, h, w)).collect();
        let lag = h.min(w) - 1;
        let tp = two_point_probability(&grids, 1, lag).map_err(|e| e.to_string())?;
        let cf = connectivity_function(&grids, 1, lag, Neighborhood::Eight).map_err(|e| e.to_string())?;
        violations += tp.values.iter().zip(&cf.values).filter(|(t, c)| c > t).count();
    }
    let detail = format!("max deviation {worst:.1e} on 100 grids; {violations} dominance violations on 1000 grid sets");
    if worst <= 1e-12 && violations == 0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// A 25x40 grid with exactly `ones` channel cells.
fn grid_with(ones: usize) -> FaciesGrid {
    FaciesGrid::from_cells(25, 40, (0..1000).map(|i| u8::from(i < ones)).collect()).unwrap()
}

fn c6_outliers() -> Check {
    let sigma = 0.005;
    let at_target: Vec<FaciesGrid> = (0..50).map(|_| grid_with(300)).collect();
    let zero = outlier_percentage(&at_target, CHANNEL, 0.30, sigma).map_err(|e| e.to_string())?;

    // 12 of 100 beyond 3 sigma (both sides), the rest inside including
    // samples right at the band edge.
    let mut mixed: Vec<FaciesGrid> = Vec::new();
    mixed.extend((0..6).map(|_| grid_with(316)));
    mixed.extend((0..6).map(|_| grid_with(284)));
    mixed.extend((0..44).map(|_| grid_with(314)));
    mixed.extend((0..44).map(|_| grid_with(290)));
    let twelve = outlier_percentage(&mixed, CHANNEL, 0.30, sigma).map_err(|e| e.to_string())?;

    let off: Vec<FaciesGrid> = (0..40).map(|_| grid_with(320)).collect();
    let hundred = outlier_percentage(&off, CHANNEL, 0.30, sigma).map_err(|e| e.to_string())?;

    let quarter = outlier_percentage(
        &[grid_with(300), grid_with(300), grid_with(300), grid_with(316)],
        CHANNEL,
        0.30,
        sigma,
    )
    .map_err(|e| e.to_string())?;

    let detail = format!("{zero}%, {twelve}%, {hundred}%, {quarter}% (expected 0, 12, 100, 25)");
    if zero == 0.0 && twelve == 12.0 && hundred == 100.0 && quarter == 25.0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Kolmogorov-Smirnov statistic of `values` against `cdf`.
fn ks_statistic(values: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len() as f64;
    values
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = cdf(v);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

fn c7_truncation() -> Check {
    use statrs::distribution::{ContinuousCDF, Normal};
    let trunc = TruncationSpec::new(1.5).map_err(|e| e.to_string())?;
    let z = sample_latents(&trunc, 100_000, &mut rng(7)).map_err(|e| e.to_string())?;
    let inside = z.iter().all(|v| v.abs() <= 1.5);
    let mean = z.iter().map(|&v| v as f64).sum::<f64>() / z.len() as f64;
    let col_mean = z.column(0).iter().map(|&v| v as f64).sum::<f64>() / z.nrows() as f64;

    let phi = Normal::standard();
    let mass = phi.cdf(1.5) - phi.cdf(-1.5);
    let mut first: Vec<f64> = z.column(0).iter().map(|&v| v as f64).collect();
    let ks = ks_statistic(&mut first, |x| (phi.cdf(x) - phi.cdf(-1.5)) / mass);
    let critical = 1.628 / (first.len() as f64).sqrt();

    let detail = format!(
        "10^5 latents: all in [-1.5, 1.5] = {inside}, mean {mean:.2e} (first component {col_mean:.2e}), \
         KS vs truncated normal {ks:.4} (1% critical {critical:.4})"
    );
    if inside && mean.abs() <= 0.02 && col_mean.abs() <= 0.02 && ks < critical {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn tiny_network() -> NetworkConfig {
    NetworkConfig {
        resolution: 16,
        g_width: 16,
        d_capacity: Capacity::Width(16),
        attention_resolution: Some(8),
        ..NetworkConfig::default()
    }
}

fn c9_determinism() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let spec = DatasetSpec::channels(8, 16, 9);
    build_dataset(&spec, dir.path()).map_err(|e| e.to_string())?;
    let dataset = Dataset::load(dir.path()).map_err(|e| e.to_string())?;
    let network = tiny_network();
    let data = TrainingData::from_dataset(&dataset, &network).map_err(|e| e.to_string())?;
    let config = TrainConfig {
        batch_size: 4,
        seed: 42,
        ..TrainConfig::default()
    };
    let represented = spec.represented();

    let run = |epochs: u64, trainer: &mut Trainer| -> Vec<StepRecord> {
        let mut records = Vec::new();
        for _ in 0..epochs {
            trainer
                .train_epoch(&data, |r| {
                    records.push(r.clone());
                    Ok(())
                })
                .unwrap();
        }
        records
    };
    let mut a = Trainer::new(config.clone(), &network, &represented).map_err(|e| e.to_string())?;
    let mut b = Trainer::new(config.clone(), &network, &represented).map_err(|e| e.to_string())?;
    let ra = run(2, &mut a);
    let rb = run(2, &mut b);
    let bits = |r: &[StepRecord]| -> Vec<(u64, u64)> {
        r.iter().take(10).map(|s| (s.d_loss.to_bits(), s.g_loss.to_bits())).collect()
    };
    if ra.len() < 10 || bits(&ra) != bits(&rb) {
        return Err(format!("rerun diverged within the first 10 of {} steps", ra.len()));
    }

    let mut c = Trainer::new(config, &network, &represented).map_err(|e| e.to_string())?;
    let mut rc = run(1, &mut c);
    let ckpt = dir.path().join("resume.bin");
    c.save(&ckpt).map_err(|e| e.to_string())?;
    let mut resumed = Trainer::load(&ckpt).map_err(|e| e.to_string())?;
    rc.extend(run(1, &mut resumed));
    let all_bits = |r: &[StepRecord]| -> Vec<(u64, u64, u64)> {
        r.iter().map(|s| (s.step, s.d_loss.to_bits(), s.g_loss.to_bits())).collect()
    };
    let same_losses = all_bits(&rc) == all_bits(&ra);
    let same_state = resumed.to_archive().unwrap().to_bytes() == a.to_archive().unwrap().to_bytes();
    let detail = format!(
        "{} steps: rerun bit-identical; resume after epoch 1 matches losses = {same_losses}, final state = {same_state}",
        ra.len()
    );
    if same_losses && same_state {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn c10_synthesizer() -> Check {
    let params = ChannelParams::for_resolution(64);
    let (target, tol) = (0.30, 0.005);
    let mut props = Vec::with_capacity(1000);
    let mut unsound = 0;
    let mut broken_bodies = 0;
    for seed in 0..1000u64 {
        let real = generate_channel_realization(&params, 64, target, tol, &mut rng(10_000 + seed)).map_err(|e| e.to_string())?;
        let p = facies_proportion(&real.grid, CHANNEL);
        unsound += usize::from((p - target).abs() > tol);
        props.push(p);
        for mask in real.body_masks() {
            let col_hit = |c: usize| (0..64).any(|row| mask[row * 64 + c]);
            if !(0..64).all(col_hit) {
                broken_bodies += 1;
            }
        }
    }
    let mean = props.iter().sum::<f64>() / props.len() as f64;
    let std = (props.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (props.len() - 1) as f64).sqrt();
    let detail = format!(
        "1000 grids at 30%: std {:.3} pp, {unsound} labels outside tolerance, {broken_bodies} bodies not spanning",
        100.0 * std
    );
    if std <= 0.005 && unsound == 0 && broken_bodies == 0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn env_usize(key: &str) -> Option<usize> {
    std::env::var(key).ok().and_then(|v| v.parse().ok())
}

fn c8_reproduction() -> Verdict {
    if std::env::var("FACIESGAN_FULL_REPRO").as_deref() != Ok("1") {
        return Verdict::NotRun(
            "trains 9 models (3 variants x 3 seeds, 40 epochs at 32x32); set FACIESGAN_FULL_REPRO=1".into(),
        );
    }
    let epochs = env_usize("FACIESGAN_REPRO_EPOCHS");
    let seeds = env_usize("FACIESGAN_REPRO_SEEDS");
    let root = std::env::var_os("FACIESGAN_REPRO_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_TARGET_TMPDIR")).join("repro"));
    match reproduce(&root, epochs, seeds) {
        Ok((ok, detail)) if epochs.is_some() || seeds.is_some() => Verdict::Reduced(ok, detail),
        Ok((true, detail)) => Verdict::Pass(detail),
        Ok((false, detail)) => Verdict::Fail(detail),
        Err(e) => Verdict::Fail(e),
    }
}

fn reproduce(root: &Path, epochs: Option<usize>, seeds: Option<usize>) -> Result<(bool, String), String> {
    let recipe = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/desk32.toml");
    let mut base: ExperimentConfig = LoadedConfig::load(&recipe).map_err(|e| e.to_string())?.config;
    base.dataset.dir = root.join("data");
    base.experiment.out_dir = root.join("runs");
    if let Some(e) = epochs {
        base.train.epochs = e;
    }
    if let Some(s) = seeds {
        base.experiment.seeds = (0..s as u64).collect();
    }
    let spec = base.dataset.spec().map_err(|e| e.to_string())?;
    if !base.dataset.dir.join("manifest.tsv").exists() {
        build_dataset(&spec, &base.dataset.dir).map_err(|e| e.to_string())?;
    }

    let variant = |sampling, conditioning| {
        let mut c = base.clone();
        c.train.condition_sampling = sampling;
        c.network.conditioning = conditioning;
        c.experiment.name = c.variant_label();
        c
    };
    let continuous = variant(SamplingMode::Continuous, Conditioning::CbnFixed);
    let discrete = variant(SamplingMode::Discrete, Conditioning::CbnFixed);
    let standard = variant(SamplingMode::Continuous, Conditioning::CbnStandard);

    let best = |cfg: &ExperimentConfig| -> Result<Vec<f64>, String> {
        cfg.experiment
            .seeds
            .iter()
            .map(|&seed| {
                let dir = cfg.run_dir(seed);
                let done = RunArtifact::load(&dir)
                    .ok()
                    .filter(|a| a.epochs_completed >= cfg.train.epochs as u64);
                let artifact = match done {
                    Some(a) => a,
                    None => {
                        let ckpt = dir.join(CHECKPOINT_FILE);
                        let resume = if ckpt.exists() { Some(Trainer::load(&ckpt).map_err(|e| e.to_string())?) } else { None };
                        train_run(cfg, &cfg.to_toml(), seed, resume, true, &mut |l: &str| eprintln!("{l}"))
                            .map_err(|e| e.to_string())?
                    }
                };
                artifact.best_average_outlier_pct.ok_or_else(|| "run has no evaluations".to_string())
            })
            .collect()
    };
    let best_cont = best(&continuous)?;
    let best_disc = best(&discrete)?;
    let best_std = best(&standard)?;

    // (a) proportions of the continuous cbn_fixed generators.
    let mut worst_rep: f64 = 0.0;
    let mut worst_int: f64 = 0.0;
    for &seed in &continuous.experiment.seeds {
        let dir = continuous.run_dir(seed);
        let ckpt = [dir.join("best.bin"), dir.join(CHECKPOINT_FILE)]
            .into_iter()
            .find(|p| p.exists())
            .ok_or("missing checkpoint")?;
        let trainer = Trainer::load(&ckpt).map_err(|e| e.to_string())?;
        let mut sampler = NetworkSampler::new(trainer.ema_generator().map_err(|e| e.to_string())?, TruncationSpec::unbounded());
        for (i, &y) in [0.25, 0.30, 0.35, 0.27, 0.33].iter().enumerate() {
            let mut r = rng(seed);
            r.set_stream(i as u64);
            let grids = sampler.generate(y, 2000, &mut r).map_err(|e| e.to_string())?;
            let mean = grids.iter().map(|g| facies_proportion(g, CHANNEL)).sum::<f64>() / grids.len() as f64;
            let dev = 100.0 * (mean - y).abs();
            if i < 3 {
                worst_rep = worst_rep.max(dev);
            } else {
                worst_int = worst_int.max(dev);
            }
        }
    }
    let a_ok = worst_rep <= 1.5 && worst_int <= 2.0;
    let wins = best_cont.iter().zip(&best_disc).filter(|(c, d)| c < d).count();
    let b_ok = 3 * wins >= 2 * best_cont.len();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let c_ok = mean(&best_cont) <= mean(&best_std);
    let detail = format!(
        "(a) worst |mean - target| {worst_rep:.2} pp represented, {worst_int:.2} pp interpolated: {a_ok}; \
         (b) continuous beats discrete in {wins}/{} seeds ({:.2} vs {:.2}): {b_ok}; \
         (c) cbn_fixed {:.2} vs cbn_standard {:.2}: {c_ok}; epochs {}, seeds {}",
        best_cont.len(),
        mean(&best_cont),
        mean(&best_disc),
        mean(&best_cont),
        mean(&best_std),
        base.train.epochs,
        base.experiment.seeds.len(),
    );
    Ok((a_ok && b_ok && c_ok, detail))
}
