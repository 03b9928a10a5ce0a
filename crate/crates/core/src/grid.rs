//! Categorical facies grids and their binary graymap file format.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Facies codes in use. Anything above [`FaciesGrid::MAX_CODE`] is rejected.
pub const FLOODPLAIN: u8 = 0;
pub const CHANNEL: u8 = 1;
pub const LEVEE: u8 = 2;
pub const SPLAY: u8 = 3;

/// A 2D field of facies codes stored row-major.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct FaciesGrid {
    height: usize,
    width: usize,
    cells: Vec<u8>,
}

impl FaciesGrid {
    pub const MAX_CODE: u8 = SPLAY;

    pub fn filled(height: usize, width: usize, code: u8) -> Result<Self> {
        Self::from_cells(height, width, vec![code; height * width])
    }

    pub fn from_cells(height: usize, width: usize, cells: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::invalid("grid dimensions must be positive"));
        }
        if cells.len() != height * width {
            return Err(Error::Shape(format!(
                "{} cells for a {height}x{width} grid",
                cells.len()
            )));
        }
        if let Some(bad) = cells.iter().find(|&&c| c > Self::MAX_CODE) {
            return Err(Error::invalid(format!("facies code {bad} out of range")));
        }
        Ok(Self {
            height,
            width,
            cells,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn cells(&self) -> &[u8] {
        &self.cells
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.cells[row * self.width + col]
    }

    pub fn count(&self, code: u8) -> usize {
        self.cells.iter().filter(|&&c| c == code).count()
    }

    /// Encode as a binary portable graymap whose gray levels are the codes.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5 {} {} 255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.cells);
        out
    }

    pub fn from_pgm(bytes: &[u8]) -> std::result::Result<Self, String> {
        let mut pos = 0;
        let mut fields = [0usize; 3];
        let next_token = |pos: &mut usize| -> std::result::Result<String, String> {
            loop {
                while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
                    *pos += 1;
                }
                if *pos < bytes.len() && bytes[*pos] == b'#' {
                    while *pos < bytes.len() && bytes[*pos] != b'\n' {
                        *pos += 1;
                    }
                    continue;
                }
                break;
            }
            let start = *pos;
            while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
                *pos += 1;
            }
            if start == *pos {
                return Err("truncated header".into());
            }
            Ok(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
        };
        if next_token(&mut pos)? != "P5" {
            return Err("not a binary graymap (expected P5)".into());
        }
        for field in fields.iter_mut() {
            let tok = next_token(&mut pos)?;
            *field = tok.parse().map_err(|_| format!("bad header field {tok:?}"))?;
        }
        let [width, height, maxval] = fields;
        if maxval != 255 {
            return Err(format!("unsupported maxval {maxval}"));
        }
        // exactly one whitespace byte separates the header from the raster
        pos += 1;
        let raster = bytes.get(pos..).unwrap_or_default();
        if raster.len() != width * height {
            return Err(format!(
                "raster has {} bytes, expected {}",
                raster.len(),
                width * height
            ));
        }
        Self::from_cells(height, width, raster.to_vec()).map_err(|e| e.to_string())
    }

    pub fn write_pgm(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_pgm()).map_err(|e| Error::io(path, e))
    }

    pub fn read_pgm(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_pgm(&bytes).map_err(|msg| Error::format(path, msg))
    }
}

/// Fraction of cells equal to `code`.
pub fn facies_proportion(grid: &FaciesGrid, code: u8) -> f64 {
    grid.count(code) as f64 / (grid.height * grid.width) as f64
}
