//! SVG charts and PNG sample mosaics. Every file carries provenance lines:
//! an SVG `<desc>` element or PNG text chunks.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use plotters::prelude::*;

use crate::error::{Error, Result};
use crate::eval::Histogram;
use crate::grid::FaciesGrid;

/// A named polyline.
#[derive(Clone, Debug)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub dashed: bool,
}

impl Series {
    pub fn new(label: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Self {
            label: label.into(),
            points,
            dashed: false,
        }
    }

    pub fn dashed(mut self) -> Self {
        self.dashed = true;
        self
    }
}

const SIZE: (u32, u32) = (720, 450);

fn plot_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::format(path, format!("plot: {e}"))
}

fn color(i: usize) -> RGBColor {
    const COLORS: [RGBColor; 8] = [
        RGBColor(31, 119, 180),
        RGBColor(255, 127, 14),
        RGBColor(44, 160, 44),
        RGBColor(214, 39, 40),
        RGBColor(148, 103, 189),
        RGBColor(140, 86, 75),
        RGBColor(227, 119, 194),
        RGBColor(127, 127, 127),
    ];
    COLORS[i % COLORS.len()]
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let pad = if hi > lo { 0.05 * (hi - lo) } else { 0.5 * lo.abs().max(1e-3) };
    (lo - pad, hi + pad)
}

fn dashes(points: &[(f64, f64)]) -> Vec<Vec<(f64, f64)>> {
    points.chunks(2).filter(|c| c.len() == 2).map(|c| c.to_vec()).collect()
}

/// Line chart of one or more series.
pub fn line_plot(
    path: &Path,
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[Series],
    provenance: &[String],
) -> Result<()> {
    let (x0, x1) = bounds(series.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
    let (y0, y1) = bounds(series.iter().flat_map(|s| s.points.iter().map(|p| p.1)));
    {
        let root = SVGBackend::new(path, SIZE).into_drawing_area();
        root.fill(&WHITE).map_err(|e| plot_err(path, e))?;
        let mut chart = ChartBuilder::on(&root)
            .caption(title, ("sans-serif", 18))
            .margin(12)
            .x_label_area_size(40)
            .y_label_area_size(56)
            .build_cartesian_2d(x0..x1, y0..y1)
            .map_err(|e| plot_err(path, e))?;
        chart
            .configure_mesh()
            .x_desc(x_label)
            .y_desc(y_label)
            .draw()
            .map_err(|e| plot_err(path, e))?;
        for (i, s) in series.iter().enumerate() {
            let c = color(i);
            let style = c.stroke_width(2);
            let drawn = if s.dashed {
                chart
                    .draw_series(dashes(&s.points).into_iter().map(move |seg| PathElement::new(seg, style)))
                    .map_err(|e| plot_err(path, e))?
            } else {
                chart
                    .draw_series(LineSeries::new(s.points.clone(), style))
                    .map_err(|e| plot_err(path, e))?
            };
            drawn
                .label(s.label.clone())
                .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], c.stroke_width(2)));
        }
        chart
            .configure_series_labels()
            .background_style(WHITE.mix(0.85))
            .border_style(BLACK)
            .draw()
            .map_err(|e| plot_err(path, e))?;
        root.present().map_err(|e| plot_err(path, e))?;
    }
    embed_svg_provenance(path, provenance)
}

/// Overlaid histograms with vertical markers at `targets`.
pub fn histogram_plot(
    path: &Path,
    title: &str,
    x_label: &str,
    hists: &[(String, &Histogram)],
    targets: &[f64],
    provenance: &[String],
) -> Result<()> {
    let (x0, x1) = bounds(
        hists
            .iter()
            .flat_map(|(_, h)| h.edges.iter().copied())
            .chain(targets.iter().copied()),
    );
    let y1 = hists
        .iter()
        .flat_map(|(_, h)| h.counts.iter().copied())
        .max()
        .unwrap_or(1)
        .max(1) as f64
        * 1.1;
    {
        let root = SVGBackend::new(path, SIZE).into_drawing_area();
        root.fill(&WHITE).map_err(|e| plot_err(path, e))?;
        let mut chart = ChartBuilder::on(&root)
            .caption(title, ("sans-serif", 18))
            .margin(12)
            .x_label_area_size(40)
            .y_label_area_size(56)
            .build_cartesian_2d(x0..x1, 0.0..y1)
            .map_err(|e| plot_err(path, e))?;
        chart
            .configure_mesh()
            .x_desc(x_label)
            .y_desc("count")
            .draw()
            .map_err(|e| plot_err(path, e))?;
        for (i, (label, h)) in hists.iter().enumerate() {
            let c = color(i);
            let bars = h.counts.iter().enumerate().filter(|(_, &n)| n > 0).map(move |(k, &n)| {
                Rectangle::new([(h.edges[k], 0.0), (h.edges[k + 1], n as f64)], c.mix(0.5).filled())
            });
            chart
                .draw_series(bars)
                .map_err(|e| plot_err(path, e))?
                .label(label.clone())
                .legend(move |(x, y)| Rectangle::new([(x, y - 5), (x + 14, y + 5)], c.mix(0.5).filled()));
        }
        for &t in targets {
            chart
                .draw_series(dashes(&(0..=20).map(|k| (t, y1 * k as f64 / 20.0)).collect::<Vec<_>>())
                    .into_iter()
                    .map(|seg| PathElement::new(seg, BLACK.stroke_width(1))))
                .map_err(|e| plot_err(path, e))?;
        }
        chart
            .configure_series_labels()
            .background_style(WHITE.mix(0.85))
            .border_style(BLACK)
            .draw()
            .map_err(|e| plot_err(path, e))?;
        root.present().map_err(|e| plot_err(path, e))?;
    }
    embed_svg_provenance(path, provenance)
}

fn escape_xml(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn embed_svg_provenance(path: &Path, lines: &[String]) -> Result<()> {
    let svg = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let end = svg.find('>').ok_or_else(|| Error::format(path, "svg without root element"))? + 1;
    let desc = format!("\n<desc>{}</desc>", escape_xml(&lines.join("\n")));
    let out = format!("{}{}{}", &svg[..end], desc, &svg[end..]);
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Display colours for facies codes 0..=3.
pub const FACIES_COLORS: [[u8; 3]; 4] = [[238, 222, 176], [33, 102, 172], [90, 160, 90], [230, 130, 40]];

/// Rows of grids tiled into one PNG, each cell scaled `scale` times, with a
/// `gap`-pixel white border between tiles.
pub fn write_mosaic(path: &Path, rows: &[Vec<FaciesGrid>], scale: usize, gap: usize, provenance: &[String]) -> Result<()> {
    let first = rows
        .first()
        .and_then(|r| r.first())
        .ok_or_else(|| Error::invalid("empty mosaic"))?;
    let (gh, gw) = (first.height(), first.width());
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let (tw, th) = (gw * scale + gap, gh * scale + gap);
    let (width, height) = (cols * tw + gap, rows.len() * th + gap);
    let mut pixels = vec![255u8; width * height * 3];
    for (ri, row) in rows.iter().enumerate() {
        for (ci, g) in row.iter().enumerate() {
            if (g.height(), g.width()) != (gh, gw) {
                return Err(Error::invalid("mosaic grids differ in size"));
            }
            for y in 0..gh * scale {
                for x in 0..gw * scale {
                    let rgb = FACIES_COLORS[g.get(y / scale, x / scale) as usize % 4];
                    let (px, py) = (gap + ci * tw + x, gap + ri * th + y);
                    let o = (py * width + px) * 3;
                    pixels[o..o + 3].copy_from_slice(&rgb);
                }
            }
        }
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), width as u32, height as u32);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let png_err = |e: png::EncodingError| Error::format(path, format!("png: {e}"));
    for (i, line) in provenance.iter().enumerate() {
        enc.add_text_chunk(format!("provenance{i}"), line.clone()).map_err(png_err)?;
    }
    let mut w = enc.write_header().map_err(png_err)?;
    w.write_image_data(&pixels).map_err(png_err)?;
    w.finish().map_err(png_err)
}
