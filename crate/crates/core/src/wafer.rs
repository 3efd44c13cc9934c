//! The 256x256 wafer bin map and its raster form.
//!
//! Images are 8-bit grayscale PNG, one pixel per die: 0 = off-wafer,
//! 128 = pass, 255 = fail.

use std::io::{BufWriter, Cursor};
use std::path::Path;

use thiserror::Error;

pub const GRID: usize = 256;
/// Wafer radius in die.
pub const RADIUS: f64 = 128.0;
/// Normalized radius beyond which a die counts as edge band.
pub const EDGE_BAND: f64 = 0.88;

pub const GRAY_OFF: u8 = 0;
pub const GRAY_PASS: u8 = 128;
pub const GRAY_FAIL: u8 = 255;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Cell {
    OffWafer = 0,
    Pass = 1,
    Fail = 2,
}

#[derive(Debug, Error)]
pub enum MapError {
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("unreadable image: {0}")]
    Decode(String),
    #[error("unsupported image: {0}")]
    Unsupported(String),
}

/// Center offset of cell `(row, col)` in die units, relative to the wafer center.
#[inline]
pub fn cell_offset(row: usize, col: usize) -> (f64, f64) {
    (col as f64 + 0.5 - RADIUS, row as f64 + 0.5 - RADIUS)
}

/// Normalized radius of a cell center (0 at the center, 1 at the rim).
#[inline]
pub fn normalized_radius(row: usize, col: usize) -> f64 {
    let (x, y) = cell_offset(row, col);
    (x * x + y * y).sqrt() / RADIUS
}

#[inline]
pub fn on_wafer(row: usize, col: usize) -> bool {
    normalized_radius(row, col) < 1.0
}

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct WaferMap {
    cells: Vec<Cell>,
}

impl std::fmt::Debug for WaferMap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "WaferMap {{ fail: {}, on_wafer: {} }}",
            self.fail_count(),
            self.on_wafer_count()
        )
    }
}

impl Default for WaferMap {
    fn default() -> Self {
        Self::all_pass()
    }
}

impl WaferMap {
    /// Every on-wafer die passes.
    pub fn all_pass() -> Self {
        let mut cells = vec![Cell::OffWafer; GRID * GRID];
        for r in 0..GRID {
            for c in 0..GRID {
                if on_wafer(r, c) {
                    cells[r * GRID + c] = Cell::Pass;
                }
            }
        }
        WaferMap { cells }
    }

    pub fn get(&self, row: usize, col: usize) -> Cell {
        self.cells[row * GRID + col]
    }

    /// Mark a die failed; off-wafer positions are ignored.
    pub fn fail(&mut self, row: usize, col: usize) {
        let cell = &mut self.cells[row * GRID + col];
        if *cell != Cell::OffWafer {
            *cell = Cell::Fail;
        }
    }

    /// Mark a die passing; off-wafer positions are ignored.
    pub fn pass(&mut self, row: usize, col: usize) {
        let cell = &mut self.cells[row * GRID + col];
        if *cell != Cell::OffWafer {
            *cell = Cell::Pass;
        }
    }

    pub fn is_fail(&self, row: usize, col: usize) -> bool {
        self.get(row, col) == Cell::Fail
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    /// `(row, col)` of every failed die in row-major order.
    pub fn fail_positions(&self) -> Vec<(usize, usize)> {
        self.cells
            .iter()
            .enumerate()
            .filter(|(_, c)| **c == Cell::Fail)
            .map(|(i, _)| (i / GRID, i % GRID))
            .collect()
    }

    pub fn fail_count(&self) -> usize {
        self.cells.iter().filter(|c| **c == Cell::Fail).count()
    }

    pub fn on_wafer_count(&self) -> usize {
        self.cells.iter().filter(|c| **c != Cell::OffWafer).count()
    }

    pub fn fail_fraction(&self) -> f64 {
        self.fail_count() as f64 / self.on_wafer_count() as f64
    }

    pub fn to_gray(&self) -> Vec<u8> {
        self.cells
            .iter()
            .map(|c| match c {
                Cell::OffWafer => GRAY_OFF,
                Cell::Pass => GRAY_PASS,
                Cell::Fail => GRAY_FAIL,
            })
            .collect()
    }

    /// Rebuild from 256x256 gray levels. The wafer mask is re-imposed; inside
    /// it, levels above 191 are failures.
    pub fn from_gray(gray: &[u8]) -> Result<Self, MapError> {
        if gray.len() != GRID * GRID {
            return Err(MapError::Unsupported(format!(
                "expected {} pixels, got {}",
                GRID * GRID,
                gray.len()
            )));
        }
        let mut map = WaferMap::all_pass();
        for (i, &g) in gray.iter().enumerate() {
            if g > 191 {
                map.fail(i / GRID, i % GRID);
            }
        }
        Ok(map)
    }

    pub fn to_png(&self) -> Vec<u8> {
        let mut out = Vec::new();
        {
            let mut enc = png::Encoder::new(BufWriter::new(&mut out), GRID as u32, GRID as u32);
            enc.set_color(png::ColorType::Grayscale);
            enc.set_depth(png::BitDepth::Eight);
            let mut writer = enc.write_header().expect("in-memory png header");
            writer.write_image_data(&self.to_gray()).expect("in-memory png data");
        }
        out
    }

    pub fn save_png(&self, path: &Path) -> Result<(), MapError> {
        std::fs::write(path, self.to_png()).map_err(|source| MapError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    /// Decode any 8-bit PNG. Color is reduced to luma and other sizes are
    /// resampled to 256x256 by nearest neighbour.
    pub fn from_png(bytes: &[u8]) -> Result<Self, MapError> {
        let mut decoder = png::Decoder::new(Cursor::new(bytes));
        decoder.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
        let mut reader = decoder.read_info().map_err(|e| MapError::Decode(e.to_string()))?;
        let mut buf = vec![0; reader.output_buffer_size()];
        let info = reader
            .next_frame(&mut buf)
            .map_err(|e| MapError::Decode(e.to_string()))?;
        let (w, h) = (info.width as usize, info.height as usize);
        if w == 0 || h == 0 {
            return Err(MapError::Unsupported("empty image".into()));
        }
        let channels = match info.color_type {
            png::ColorType::Grayscale => 1,
            png::ColorType::GrayscaleAlpha => 2,
            png::ColorType::Rgb => 3,
            png::ColorType::Rgba => 4,
            png::ColorType::Indexed => return Err(MapError::Unsupported("indexed color after expansion".into())),
        };
        let luma = |x: usize, y: usize| -> u8 {
            let p = &buf[(y * w + x) * channels..];
            if channels >= 3 {
                ((p[0] as u32 * 299 + p[1] as u32 * 587 + p[2] as u32 * 114) / 1000) as u8
            } else {
                p[0]
            }
        };
        let mut gray = vec![0u8; GRID * GRID];
        for r in 0..GRID {
            for c in 0..GRID {
                gray[r * GRID + c] = luma(c * w / GRID, r * h / GRID);
            }
        }
        Self::from_gray(&gray)
    }

    pub fn load(path: &Path) -> Result<Self, MapError> {
        let bytes = std::fs::read(path).map_err(|source| MapError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_png(&bytes)
    }
}
