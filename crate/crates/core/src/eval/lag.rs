use std::collections::VecDeque;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::FaciesGrid;

/// Neighbourhood used to label connected components.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Neighborhood {
    Four,
    #[default]
    Eight,
}

/// A statistic per integer lag with the number of pixel pairs behind it.
#[derive(Clone, Debug, PartialEq)]
pub struct LagCurve {
    pub lags: Vec<usize>,
    pub values: Vec<f64>,
    pub pair_counts: Vec<u64>,
}

impl LagCurve {
    pub fn to_rows(&self) -> Vec<String> {
        self.lags
            .iter()
            .zip(&self.values)
            .zip(&self.pair_counts)
            .map(|((l, v), p)| format!("{l}\t{v}\t{p}"))
            .collect()
    }

    pub fn write(&self, path: &Path, comments: &[String]) -> Result<()> {
        super::write_table(path, comments, "lag\tvalue\tpairs", &self.to_rows())
    }
}

/// Isotropic lag bin of a displacement with squared length `d2`: the
/// Euclidean distance rounded to the nearest integer.
pub fn lag_bin(d2: usize) -> usize {
    (d2 as f64).sqrt().round() as usize
}

/// Probability that two pixels at each lag both carry `code`.
pub fn two_point_probability(grids: &[FaciesGrid], code: u8, max_lag: usize) -> Result<LagCurve> {
    lag_statistic(grids, max_lag, |g| {
        let cells = g.cells().iter().map(|&c| u32::from(c == code)).collect();
        PairTest { labels: cells }
    })
}

/// Probability that two pixels at each lag both carry `code` and belong to
/// the same connected component of that code.
pub fn connectivity_function(
    grids: &[FaciesGrid],
    code: u8,
    max_lag: usize,
    neighborhood: Neighborhood,
) -> Result<LagCurve> {
    lag_statistic(grids, max_lag, |g| PairTest {
        labels: component_labels(g, code, neighborhood),
    })
}

/// Pixels pair up when both labels are equal and non-zero.
struct PairTest {
    labels: Vec<u32>,
}

fn lag_statistic(grids: &[FaciesGrid], max_lag: usize, prepare: impl Fn(&FaciesGrid) -> PairTest) -> Result<LagCurve> {
    let first = grids.first().ok_or_else(|| Error::invalid("no grids to evaluate"))?;
    let (h, w) = (first.height(), first.width());
    if grids.iter().any(|g| (g.height(), g.width()) != (h, w)) {
        return Err(Error::invalid("grids must share one size"));
    }
    if max_lag >= h.min(w) {
        return Err(Error::invalid(format!("max_lag {max_lag} must be below the grid size {}", h.min(w))));
    }
    // Each unordered pair once: the zero displacement plus the half plane
    // dy > 0 or (dy == 0 and dx > 0).
    let reach = max_lag as isize + 1;
    let mut displacements = vec![(0isize, 0isize, 0usize)];
    for dy in 0..=reach {
        for dx in -reach..=reach {
            if dy == 0 && dx <= 0 {
                continue;
            }
            let bin = lag_bin((dy * dy + dx * dx) as usize);
            if bin <= max_lag {
                displacements.push((dy, dx, bin));
            }
        }
    }
    let mut hits = vec![0u64; max_lag + 1];
    let mut pairs = vec![0u64; max_lag + 1];
    for g in grids {
        let PairTest { labels } = prepare(g);
        for &(dy, dx, bin) in &displacements {
            let (dy, dxu) = (dy as usize, dx.unsigned_abs());
            let cols = w - dxu;
            let rows = h - dy;
            pairs[bin] += (rows * cols) as u64;
            let (c0, c1) = if dx >= 0 { (0, dxu) } else { (dxu, 0) };
            let mut n = 0u64;
            for r in 0..rows {
                let a = &labels[r * w + c0..r * w + c0 + cols];
                let b = &labels[(r + dy) * w + c1..(r + dy) * w + c1 + cols];
                n += a.iter().zip(b).filter(|&(&x, &y)| x != 0 && x == y).count() as u64;
            }
            hits[bin] += n;
        }
    }
    let lags: Vec<usize> = (0..=max_lag).filter(|&l| pairs[l] > 0).collect();
    Ok(LagCurve {
        values: lags.iter().map(|&l| hits[l] as f64 / pairs[l] as f64).collect(),
        pair_counts: lags.iter().map(|&l| pairs[l]).collect(),
        lags,
    })
}

/// Component labels (1-based) of the pixels equal to `code`; 0 elsewhere.
pub(crate) fn component_labels(g: &FaciesGrid, code: u8, neighborhood: Neighborhood) -> Vec<u32> {
    let (h, w) = (g.height(), g.width());
    let cells = g.cells();
    let mut labels = vec![0u32; h * w];
    let mut next = 0;
    let mut queue = VecDeque::new();
    for start in 0..h * w {
        if cells[start] != code || labels[start] != 0 {
            continue;
        }
        next += 1;
        labels[start] = next;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            let (r, c) = ((i / w) as isize, (i % w) as isize);
            for dr in -1..=1isize {
                for dc in -1..=1isize {
                    if (dr, dc) == (0, 0) || (neighborhood == Neighborhood::Four && dr != 0 && dc != 0) {
                        continue;
                    }
                    let (nr, nc) = (r + dr, c + dc);
                    if nr < 0 || nc < 0 || nr >= h as isize || nc >= w as isize {
                        continue;
                    }
                    let j = nr as usize * w + nc as usize;
                    if cells[j] == code && labels[j] == 0 {
                        labels[j] = next;
                        queue.push_back(j);
                    }
                }
            }
        }
    }
    labels
}
