use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::grid::facies_proportion;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[test]
fn channel_target_is_hit() {
    let p = ChannelParams::default();
    for seed in 0..20 {
        let r = generate_channel_realization(&p, 64, 0.30, 0.005, &mut rng(seed)).unwrap();
        let prop = facies_proportion(&r.grid, CHANNEL);
        assert!((0.295..=0.305).contains(&prop), "seed {seed}: {prop}");
        assert!(r.grid.cells().iter().all(|&c| c <= CHANNEL));
    }
}

#[test]
fn same_seed_same_grid() {
    let p = ChannelParams::default();
    let a = generate_channel_realization(&p, 64, 0.30, 0.005, &mut rng(9)).unwrap();
    let b = generate_channel_realization(&p, 64, 0.30, 0.005, &mut rng(9)).unwrap();
    assert_eq!(a.grid.to_pgm(), b.grid.to_pgm());
}

#[test]
fn proportion_spread_over_seeds() {
    let p = ChannelParams::default();
    let props: Vec<f64> = (0..200)
        .map(|s| facies_proportion(&generate_channel_realization(&p, 64, 0.30, 0.005, &mut rng(s)).unwrap().grid, CHANNEL))
        .collect();
    let mean = props.iter().sum::<f64>() / props.len() as f64;
    let var = props.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (props.len() - 1) as f64;
    assert!(var.sqrt() <= 0.005, "std {}", var.sqrt());
    assert!(var.sqrt() > 0.0005, "classes should not collapse onto one value");
}

#[test]
fn every_body_spans_the_grid() {
    let p = ChannelParams { orientation: 0.2, orientation_spread: 0.3, amplitude: 9.0, ..Default::default() };
    for seed in 0..30 {
        let r = generate_channel_realization(&p, 64, 0.25, 0.005, &mut rng(seed)).unwrap();
        for mask in r.body_masks() {
            let col_hit = |c: usize| (0..64).any(|row| mask[row * 64 + c]);
            assert!(col_hit(0) && col_hit(63), "seed {seed}: body does not span");
            assert!((0..64).all(col_hit), "seed {seed}: body has a gap");
            for row in 0..64 {
                for col in 0..64 {
                    if mask[row * 64 + col] {
                        assert_eq!(r.grid.get(row, col), CHANNEL);
                    }
                }
            }
        }
    }
}

#[test]
fn rejects_bad_inputs() {
    let p = ChannelParams::default();
    assert!(generate_channel_realization(&p, 64, 0.0, 0.005, &mut rng(0)).is_err());
    assert!(generate_channel_realization(&p, 64, 0.3, 0.0, &mut rng(0)).is_err());
    let wide = ChannelParams { orientation: 0.5, orientation_spread: 0.2, ..Default::default() };
    assert!(wide.validate().is_err());
    let jitter = ChannelParams { width_jitter: 1.0, ..Default::default() };
    assert!(jitter.validate().is_err());
    assert!(generate_splay_realization(&p, 64, 0.9, 0.007, &mut rng(0)).is_err());
}

#[test]
fn non_convergence_is_reported() {
    let p = ChannelParams { num_channels: 1, max_iterations: 1, ..Default::default() };
    let err = generate_channel_realization(&p, 64, 0.9, 0.005, &mut rng(0)).unwrap_err();
    assert!(matches!(err, Error::NonConvergence { .. }), "{err}");
}

fn components(grid: &FaciesGrid, code: u8) -> Vec<Vec<(usize, usize)>> {
    let (h, w) = (grid.height(), grid.width());
    let mut seen = vec![false; h * w];
    let mut out = Vec::new();
    for start in 0..h * w {
        if seen[start] || grid.cells()[start] != code {
            continue;
        }
        let mut stack = vec![start];
        seen[start] = true;
        let mut comp = Vec::new();
        while let Some(i) = stack.pop() {
            let (r, c) = (i / w, i % w);
            comp.push((r, c));
            for dr in -1i64..=1 {
                for dc in -1i64..=1 {
                    let (rr, cc) = (r as i64 + dr, c as i64 + dc);
                    if rr < 0 || cc < 0 || rr >= h as i64 || cc >= w as i64 {
                        continue;
                    }
                    let j = rr as usize * w + cc as usize;
                    if !seen[j] && grid.cells()[j] == code {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        out.push(comp);
    }
    out
}

fn near(grid: &FaciesGrid, r: usize, c: usize, radius: i64, code: u8) -> bool {
    (-radius..=radius).any(|dr| {
        (-radius..=radius).any(|dc| {
            let (rr, cc) = (r as i64 + dr, c as i64 + dc);
            rr >= 0
                && cc >= 0
                && rr < grid.height() as i64
                && cc < grid.width() as i64
                && grid.get(rr as usize, cc as usize) == code
        })
    })
}

#[test]
fn splay_targets_and_geometry() {
    let p = ChannelParams::default();
    for (target, seed) in [(0.04, 1), (0.07, 2), (0.04, 3), (0.07, 4), (0.05, 5)] {
        let r = generate_splay_realization(&p, 64, target, 0.007, &mut rng(seed)).unwrap();
        let g = &r.grid;
        let prop = facies_proportion(g, SPLAY);
        assert!((prop - target).abs() <= 0.007, "target {target}: {prop}");
        assert!(facies_proportion(g, CHANNEL) > 0.1);
        assert!(g.count(LEVEE) > 0);
        for row in 0..64 {
            for col in 0..64 {
                if g.get(row, col) == LEVEE {
                    assert!(near(g, row, col, p.levee_width.ceil() as i64, CHANNEL));
                }
            }
        }
        for comp in components(g, SPLAY) {
            assert!(
                comp.iter().any(|&(r, c)| near(g, r, c, 1, CHANNEL)),
                "splay lobe detached from channels"
            );
        }
    }
}

#[test]
fn zero_splays_means_zero_proportion() {
    let p = ChannelParams { splay_count: 0, ..Default::default() };
    let r = generate_splay_realization(&p, 64, 0.04, 0.007, &mut rng(3)).unwrap();
    assert_eq!(facies_proportion(&r.grid, SPLAY), 0.0);
    assert!(r.grid.count(LEVEE) > 0);
}

#[test]
fn dataset_layout_and_labels() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("ds");
    let spec = DatasetSpec::channels(6, 32, 11);
    let manifest = build_dataset(&spec, &root).unwrap();
    assert_eq!(manifest.entries.len(), 18);
    for (class, c) in spec.classes.iter().enumerate() {
        let n = manifest.entries.iter().filter(|e| e.class_index == class).count();
        assert_eq!(n, c.count);
    }
    let back = DatasetManifest::read(&root).unwrap();
    assert_eq!(back, manifest);
    let ds = Dataset::load(&root).unwrap();
    for (e, g) in manifest.entries.iter().zip(&ds.grids) {
        let target = spec.classes[e.class_index].target;
        assert_eq!(facies_proportion(g, CHANNEL), e.proportion_label);
        assert!((e.proportion_label - target).abs() <= spec.tolerance);
    }

    let again = dir.path().join("ds2");
    build_dataset(&spec, &again).unwrap();
    for e in &manifest.entries {
        let a = std::fs::read(root.join(&e.file_path)).unwrap();
        let b = std::fs::read(again.join(&e.file_path)).unwrap();
        assert_eq!(a, b);
    }
    assert_eq!(
        std::fs::read(root.join(MANIFEST_FILE)).unwrap(),
        std::fs::read(again.join(MANIFEST_FILE)).unwrap()
    );
}

#[test]
fn dataset_validation() {
    let mut spec = DatasetSpec::channels(0, 32, 1);
    assert!(spec.validate().is_err());
    spec = DatasetSpec::channels(3, 32, 1);
    spec.classes.swap(0, 1);
    assert!(spec.validate().is_err());
    spec = DatasetSpec::splays(3, 32, 1);
    spec.classes[0].facies = CHANNEL;
    assert!(spec.validate().is_err());
    assert!(DatasetSpec::splays(3, 64, 1).validate().is_ok());
}

#[test]
fn failed_build_cleans_up() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("broken");
    let mut spec = DatasetSpec::channels(2, 32, 5);
    spec.classes.push(ClassSpec { target: 0.95, count: 2, facies: CHANNEL });
    spec.channel = Some(ChannelParams { max_iterations: 2, ..ChannelParams::for_resolution(32) });
    assert!(build_dataset(&spec, &root).is_err());
    assert!(!root.exists());
}
