//! Object-based synthesis of channelized facies realizations.
//!
//! Channels are sinusoidal centerlines with a smoothly varying width that run
//! border to border along the horizontal axis, tilted by at most 30 degrees.
//! Levees are dilation rings around the channel union and crevasse splays are
//! lobate half-ellipses rooted on channel margins. Proportions are hit by
//! adding or removing whole objects and then bisecting a global size scale,
//! which is monotone in the number of painted cells.

mod dataset;

use std::f64::consts::{FRAC_PI_6, TAU};
use std::ops::RangeInclusive;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{FaciesGrid, CHANNEL, FLOODPLAIN, LEVEE, SPLAY};

pub use dataset::{
    build_dataset, generate_entry, ClassSpec, Dataset, DatasetManifest, DatasetSpec,
    ManifestEntry, MANIFEST_FILE, SPEC_FILE,
};

const SCALE_MIN: f64 = 0.25;
const SCALE_MAX: f64 = 3.0;
const BISECTION_STEPS: usize = 60;

/// Geometry of the channel, levee and splay objects, in pixels and radians.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelParams {
    /// Channels placed before proportion targeting starts.
    pub num_channels: usize,
    pub amplitude: f64,
    pub wavelength: f64,
    pub width_mean: f64,
    /// Relative width variation, both between channels and along one channel.
    pub width_jitter: f64,
    /// Mean tilt from the horizontal axis.
    pub orientation: f64,
    /// Half-range of the per-channel tilt around `orientation`.
    pub orientation_spread: f64,
    pub levee_width: f64,
    pub splay_count: usize,
    pub splay_radius_mean: f64,
    /// Channel proportion used underneath splays in multi-facies realizations.
    pub channel_budget: f64,
    /// Cap on object add/remove/redraw rounds before giving up.
    pub max_iterations: usize,
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self {
            num_channels: 3,
            amplitude: 5.0,
            wavelength: 40.0,
            width_mean: 6.0,
            width_jitter: 0.25,
            orientation: 0.0,
            orientation_spread: 0.35,
            levee_width: 2.0,
            splay_count: 3,
            splay_radius_mean: 5.0,
            channel_budget: 0.2,
            max_iterations: 200,
        }
    }
}

impl ChannelParams {
    /// Defaults rescaled from a 64-pixel reference grid.
    pub fn for_resolution(resolution: usize) -> Self {
        let k = resolution as f64 / 64.0;
        let d = Self::default();
        Self {
            amplitude: d.amplitude * k,
            wavelength: d.wavelength * k,
            width_mean: d.width_mean * k,
            levee_width: (d.levee_width * k).max(1.0),
            splay_radius_mean: d.splay_radius_mean * k,
            ..d
        }
    }

    pub fn validate(&self) -> Result<()> {
        let lengths = [
            ("amplitude", self.amplitude),
            ("wavelength", self.wavelength),
            ("width_mean", self.width_mean),
            ("levee_width", self.levee_width),
            ("splay_radius_mean", self.splay_radius_mean),
        ];
        for (name, v) in lengths {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if self.num_channels == 0 {
            return Err(Error::invalid("num_channels must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.width_jitter) {
            return Err(Error::invalid("width_jitter must lie in [0, 1)"));
        }
        if self.orientation_spread < 0.0
            || self.orientation.abs() + self.orientation_spread > FRAC_PI_6 + 1e-12
        {
            return Err(Error::invalid(
                "channel tilt must stay within 30 degrees of the horizontal axis",
            ));
        }
        if !(self.channel_budget > 0.0 && self.channel_budget < 1.0) {
            return Err(Error::invalid("channel_budget must lie in (0, 1)"));
        }
        if self.max_iterations == 0 {
            return Err(Error::invalid("max_iterations must be positive"));
        }
        Ok(())
    }
}

/// One sinusoidal channel object spanning the grid from column 0 to the last
/// column.
#[derive(Clone, Debug)]
pub struct ChannelBody {
    offset: f64,
    slope: f64,
    amplitude: f64,
    wavenumber: f64,
    phase: f64,
    width: f64,
    jitter: f64,
    width_wavenumber: f64,
    width_phase: f64,
    mid: f64,
}

impl ChannelBody {
    fn random<R: Rng + ?Sized>(p: &ChannelParams, height: usize, width: usize, rng: &mut R) -> Self {
        let angle = p.orientation + p.orientation_spread * rng.random_range(-1.0..=1.0);
        let mut body = Self {
            offset: 0.0,
            slope: angle.tan(),
            amplitude: p.amplitude * rng.random_range(0.6..1.4),
            wavenumber: TAU / (p.wavelength * rng.random_range(0.7..1.3)),
            phase: rng.random_range(0.0..TAU),
            width: p.width_mean * (1.0 + p.width_jitter * rng.random_range(-1.0..=1.0)),
            jitter: 0.5 * p.width_jitter,
            width_wavenumber: TAU / (p.wavelength * rng.random_range(0.5..1.5)),
            width_phase: rng.random_range(0.0..TAU),
            mid: (width as f64 - 1.0) / 2.0,
        };
        let span_limit = height as f64 - 1.0;
        let (mut lo, mut hi) = body.excursion(width);
        if hi - lo > span_limit {
            let shrink = span_limit / (hi - lo);
            body.slope *= shrink;
            body.amplitude *= shrink;
            (lo, hi) = body.excursion(width);
        }
        let room = (span_limit - hi + lo).max(0.0);
        body.offset = -lo + room * rng.random::<f64>();
        body
    }

    fn excursion(&self, width: usize) -> (f64, f64) {
        (0..width)
            .map(|x| self.shape(x as f64))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
    }

    fn shape(&self, x: f64) -> f64 {
        self.slope * (x - self.mid) + self.amplitude * (self.wavenumber * x + self.phase).sin()
    }

    /// Centerline row at column `x`.
    pub fn center(&self, x: f64) -> f64 {
        self.offset + self.shape(x)
    }

    fn derivative(&self, x: f64) -> f64 {
        self.slope + self.amplitude * self.wavenumber * (self.wavenumber * x + self.phase).cos()
    }

    /// Vertical half-thickness at column `x`; never below half a pixel so
    /// every column keeps at least one cell.
    fn half_width(&self, x: f64, scale: f64) -> f64 {
        let local = self.width * (1.0 + self.jitter * (self.width_wavenumber * x + self.width_phase).sin());
        let d = self.derivative(x);
        (0.5 * scale * local * (1.0 + d * d).sqrt()).max(0.5)
    }

    fn rows(&self, col: usize, scale: f64, height: usize) -> RangeInclusive<usize> {
        let x = col as f64;
        let c = self.center(x);
        let hw = self.half_width(x, scale);
        let lo = (c - hw).ceil().max(0.0) as usize;
        let hi = (c + hw).floor().min(height as f64 - 1.0) as usize;
        lo..=hi
    }

    /// Cells covered by this body alone.
    pub fn mask(&self, height: usize, width: usize, scale: f64) -> Vec<bool> {
        let mut mask = vec![false; height * width];
        self.paint(&mut mask, height, width, scale);
        mask
    }

    fn paint(&self, mask: &mut [bool], height: usize, width: usize, scale: f64) {
        for col in 0..width {
            for row in self.rows(col, scale, height) {
                mask[row * width + col] = true;
            }
        }
    }
}

/// Channel union painted from a set of bodies at a common width scale.
fn channel_mask(bodies: &[ChannelBody], height: usize, width: usize, scale: f64) -> Vec<bool> {
    let mut mask = vec![false; height * width];
    for b in bodies {
        b.paint(&mut mask, height, width, scale);
    }
    mask
}

/// A generated grid together with the objects that produced it.
#[derive(Clone, Debug)]
pub struct Realization {
    pub grid: FaciesGrid,
    pub bodies: Vec<ChannelBody>,
    pub channel_scale: f64,
}

impl Realization {
    pub fn body_masks(&self) -> Vec<Vec<bool>> {
        let (h, w) = (self.grid.height(), self.grid.width());
        self.bodies.iter().map(|b| b.mask(h, w, self.channel_scale)).collect()
    }
}

enum Miss {
    TooFew,
    TooMany,
    Gap,
}

/// Bisection for a scale whose (monotone) cell count lands inside `window`.
fn bisect_scale(window: &RangeInclusive<usize>, mut count: impl FnMut(f64) -> usize) -> Result<f64, Miss> {
    let (mut lo, mut hi) = (SCALE_MIN, SCALE_MAX);
    if count(lo) > *window.end() {
        return Err(Miss::TooMany);
    }
    if count(hi) < *window.start() {
        return Err(Miss::TooFew);
    }
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        let c = count(mid);
        if window.contains(&c) {
            return Ok(mid);
        }
        if c < *window.start() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Miss::Gap)
}

/// Cell-count window for a target proportion. The aim point is jittered
/// inside the tolerance band so that class histograms have natural spread.
fn count_window<R: Rng + ?Sized>(target: f64, tolerance: f64, cells: usize, rng: &mut R) -> Result<RangeInclusive<usize>> {
    let n = cells as f64;
    let outer_lo = ((target - tolerance) * n).ceil().max(0.0) as usize;
    let outer_hi = ((target + tolerance) * n).floor().min(n) as usize;
    if outer_lo > outer_hi {
        return Err(Error::invalid(format!(
            "tolerance {tolerance} is finer than one cell of a {cells}-cell grid"
        )));
    }
    let aim = target + 0.8 * tolerance * rng.random_range(-1.0..=1.0);
    let lo = ((aim - 0.2 * tolerance) * n).ceil().max(outer_lo as f64) as usize;
    let hi = ((aim + 0.2 * tolerance) * n).floor().min(outer_hi as f64) as usize;
    Ok(if lo <= hi { lo..=hi } else { outer_lo..=outer_hi })
}

fn check_fraction(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} must lie in (0, 1), got {v}")))
    }
}

fn place_channels<R: Rng + ?Sized>(
    params: &ChannelParams,
    size: usize,
    target: f64,
    tolerance: f64,
    rng: &mut R,
) -> Result<(Vec<ChannelBody>, f64, Vec<bool>)> {
    let cells = size * size;
    let window = count_window(target, tolerance, cells, rng)?;
    let mut bodies: Vec<ChannelBody> = (0..params.num_channels)
        .map(|_| ChannelBody::random(params, size, size, rng))
        .collect();
    let count_at = |bodies: &[ChannelBody], s: f64| {
        channel_mask(bodies, size, size, s).iter().filter(|&&b| b).count()
    };
    for _ in 0..params.max_iterations {
        match bisect_scale(&window, |s| count_at(&bodies, s)) {
            Ok(scale) => {
                let mask = channel_mask(&bodies, size, size, scale);
                return Ok((bodies, scale, mask));
            }
            Err(Miss::TooFew) => bodies.push(ChannelBody::random(params, size, size, rng)),
            Err(Miss::TooMany) if bodies.len() > 1 => {
                bodies.pop();
            }
            Err(_) => {
                let last = bodies.len() - 1;
                bodies[last] = ChannelBody::random(params, size, size, rng);
            }
        }
    }
    Err(Error::NonConvergence {
        what: "channel proportion targeting",
        iterations: params.max_iterations,
        detail: format!("target {target} +/- {tolerance}, {} channels placed", bodies.len()),
    })
}

/// Binary channel/floodplain realization whose channel proportion lies within
/// `tolerance` of `target`.
pub fn generate_channel_realization<R: Rng + ?Sized>(
    params: &ChannelParams,
    resolution: usize,
    target: f64,
    tolerance: f64,
    rng: &mut R,
) -> Result<Realization> {
    params.validate()?;
    check_fraction("target", target)?;
    if !(tolerance > 0.0) {
        return Err(Error::invalid("tolerance must be positive"));
    }
    let (bodies, scale, mask) = place_channels(params, resolution, target, tolerance, rng)?;
    let cells = mask.iter().map(|&m| if m { CHANNEL } else { FLOODPLAIN }).collect();
    Ok(Realization {
        grid: FaciesGrid::from_cells(resolution, resolution, cells)?,
        bodies,
        channel_scale: scale,
    })
}

/// Lobate half-ellipse rooted on a channel margin and opening away from it.
#[derive(Clone, Debug)]
struct SplayLobe {
    root: (f64, f64),
    dir: (f64, f64),
    length: f64,
    breadth: f64,
}

impl SplayLobe {
    fn random<R: Rng + ?Sized>(
        bodies: &[ChannelBody],
        channel_scale: f64,
        params: &ChannelParams,
        size: usize,
        rng: &mut R,
    ) -> Self {
        let body = &bodies[rng.random_range(0..bodies.len())];
        let x = rng.random_range(0..size) as f64;
        let side = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let d = body.derivative(x);
        let norm = (1.0 + d * d).sqrt();
        // the vertical half-thickness already includes the slope correction
        let row = body.center(x) + side * body.half_width(x, channel_scale);
        let radius = params.splay_radius_mean * rng.random_range(0.7..1.3);
        Self {
            root: (row, x),
            dir: (side / norm, -side * d / norm),
            length: radius * rng.random_range(1.2..1.8),
            breadth: radius * rng.random_range(0.8..1.2),
        }
    }

    fn paint(&self, mask: &mut [bool], size: usize, scale: f64) {
        let (a, b) = (self.length * scale, self.breadth * scale);
        let reach = a.max(b).ceil() as i64 + 1;
        let (r0, c0) = (self.root.0.round() as i64, self.root.1.round() as i64);
        for r in (r0 - reach).max(0)..=(r0 + reach).min(size as i64 - 1) {
            for c in (c0 - reach).max(0)..=(c0 + reach).min(size as i64 - 1) {
                let (dr, dc) = (r as f64 - self.root.0, c as f64 - self.root.1);
                let t = dr * self.dir.0 + dc * self.dir.1;
                let u = -dr * self.dir.1 + dc * self.dir.0;
                if t >= -0.5 && (t / a).powi(2) + (u / b).powi(2) <= 1.0 {
                    mask[r as usize * size + c as usize] = true;
                }
            }
        }
    }
}

fn dilate(mask: &[bool], size: usize, radius: f64) -> Vec<bool> {
    let reach = radius.floor() as i64;
    let r2 = radius * radius;
    let mut out = vec![false; mask.len()];
    for r in 0..size as i64 {
        for c in 0..size as i64 {
            if !mask[(r as usize) * size + c as usize] {
                continue;
            }
            for dr in -reach..=reach {
                for dc in -reach..=reach {
                    let (rr, cc) = (r + dr, c + dc);
                    if (dr * dr + dc * dc) as f64 <= r2
                        && (0..size as i64).contains(&rr)
                        && (0..size as i64).contains(&cc)
                    {
                        out[rr as usize * size + cc as usize] = true;
                    }
                }
            }
        }
    }
    out
}

fn paint_multi(channel: &[bool], levee: &[bool], lobes: &[SplayLobe], size: usize, scale: f64) -> Vec<u8> {
    let mut splay = vec![false; size * size];
    for lobe in lobes {
        lobe.paint(&mut splay, size, scale);
    }
    (0..size * size)
        .map(|i| {
            if channel[i] {
                CHANNEL
            } else if splay[i] {
                SPLAY
            } else if levee[i] {
                LEVEE
            } else {
                FLOODPLAIN
            }
        })
        .collect()
}

/// Multi-facies realization (floodplain, channel, levee, splay) whose splay
/// proportion lies within `tolerance` of `splay_target`. The channel belt is
/// held near `params.channel_budget`.
pub fn generate_splay_realization<R: Rng + ?Sized>(
    params: &ChannelParams,
    resolution: usize,
    splay_target: f64,
    tolerance: f64,
    rng: &mut R,
) -> Result<Realization> {
    params.validate()?;
    check_fraction("splay_target", splay_target)?;
    if !(tolerance > 0.0) {
        return Err(Error::invalid("tolerance must be positive"));
    }
    let size = resolution;
    let belt_tolerance = (0.25 * params.channel_budget).max(2.0 / (size * size) as f64);
    if splay_target + params.channel_budget + belt_tolerance >= 1.0 {
        return Err(Error::invalid(format!(
            "splay target {splay_target} plus channel budget {} leaves no floodplain",
            params.channel_budget
        )));
    }
    let (bodies, channel_scale, channel) =
        place_channels(params, size, params.channel_budget, belt_tolerance, rng)?;
    let levee = dilate(&channel, size, params.levee_width);

    let finish = |cells: Vec<u8>, bodies: Vec<ChannelBody>| -> Result<Realization> {
        Ok(Realization {
            grid: FaciesGrid::from_cells(size, size, cells)?,
            bodies,
            channel_scale,
        })
    };
    if params.splay_count == 0 {
        return finish(paint_multi(&channel, &levee, &[], size, 1.0), bodies);
    }

    let window = count_window(splay_target, tolerance, size * size, rng)?;
    let mut lobes: Vec<SplayLobe> = (0..params.splay_count)
        .map(|_| SplayLobe::random(&bodies, channel_scale, params, size, rng))
        .collect();
    let splay_count_at = |lobes: &[SplayLobe], s: f64| {
        paint_multi(&channel, &levee, lobes, size, s)
            .iter()
            .filter(|&&c| c == SPLAY)
            .count()
    };
    for _ in 0..params.max_iterations {
        match bisect_scale(&window, |s| splay_count_at(&lobes, s)) {
            Ok(scale) => return finish(paint_multi(&channel, &levee, &lobes, size, scale), bodies),
            Err(Miss::TooFew) => lobes.push(SplayLobe::random(&bodies, channel_scale, params, size, rng)),
            Err(Miss::TooMany) if lobes.len() > 1 => {
                lobes.pop();
            }
            Err(_) => {
                let last = lobes.len() - 1;
                lobes[last] = SplayLobe::random(&bodies, channel_scale, params, size, rng);
            }
        }
    }
    Err(Error::NonConvergence {
        what: "splay proportion targeting",
        iterations: params.max_iterations,
        detail: format!("target {splay_target} +/- {tolerance}, {} lobes placed", lobes.len()),
    })
}

#[cfg(test)]
mod tests;
