//! Rectilinear target generators.

use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

use crate::analysis::TargetPattern;
use crate::error::{IltError, Result};
use crate::optics::GridSpec;

/// Pixel pitch at which the built-in geometries are specified. On other
/// grids the lengths are rescaled so the layout keeps its size in nm.
pub const REFERENCE_DX_NM: f64 = 12.5;

/// Free margin kept between a generated layout and the window edge.
pub const MIN_MARGIN_PX: usize = 2;

/// Axis-aligned rectangle in pixels: rows `[row, row + height)`,
/// columns `[col, col + width)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rect {
    pub row: usize,
    pub col: usize,
    pub height: usize,
    pub width: usize,
}

impl Rect {
    pub const fn new(row: usize, col: usize, height: usize, width: usize) -> Self {
        Self {
            row,
            col,
            height,
            width,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetSpec {
    /// A C-shaped feature, stroke 10 px, wrapped around a 13 px vertical
    /// bar with 12 px spacing (lengths at 12.5 nm pitch).
    #[default]
    Target1Like,
    /// Four features: a large block flanked by bars, 8 px minimum width
    /// and 6 px minimum spacing (lengths at 12.5 nm pitch).
    Target2Like,
    CustomRects {
        rects: Vec<Rect>,
    },
    /// Binary raster read from a PBM or PGM file.
    File {
        path: String,
    },
}

/// Target1 layout in reference pixels, relative to its bounding box.
const TARGET1: [[f64; 4]; 4] = [
    [0.0, 0.0, 10.0, 47.0],
    [70.0, 0.0, 10.0, 47.0],
    [0.0, 0.0, 80.0, 10.0],
    [22.0, 22.0, 36.0, 13.0],
];

const TARGET2: [[f64; 4]; 4] = [
    [0.0, 0.0, 44.0, 40.0],
    [0.0, 46.0, 44.0, 8.0],
    [50.0, 0.0, 8.0, 54.0],
    [0.0, 60.0, 58.0, 8.0],
];

pub fn generate_target(spec: &TargetSpec, grid: &GridSpec) -> Result<TargetPattern> {
    grid.validate()?;
    match spec {
        TargetSpec::Target1Like => centered(grid, &TARGET1),
        TargetSpec::Target2Like => centered(grid, &TARGET2),
        TargetSpec::CustomRects { rects } => custom_rects(grid, rects),
        TargetSpec::File { path } => {
            let mask = super::raster::read_mask(path)?;
            if mask.dim() != (grid.n, grid.n) {
                return Err(IltError::DimensionMismatch(format!(
                    "target raster {path} is {}x{}, grid is {n}x{n}",
                    mask.nrows(),
                    mask.ncols(),
                    n = grid.n
                )));
            }
            TargetPattern::new(*grid, mask)
        }
    }
}

pub fn custom_rects(grid: &GridSpec, rects: &[Rect]) -> Result<TargetPattern> {
    let n = grid.n;
    let mut ind = Array2::from_elem((n, n), false);
    for r in rects {
        if r.height == 0 || r.width == 0 {
            return Err(IltError::InvalidParameter(format!("empty rectangle {r:?}")));
        }
        if r.row == 0 || r.col == 0 || r.row + r.height >= n || r.col + r.width >= n {
            return Err(IltError::GeometryOverflow(format!(
                "rectangle {r:?} does not fit strictly inside the {n}x{n} window"
            )));
        }
        ind.slice_mut(s![r.row..r.row + r.height, r.col..r.col + r.width])
            .fill(true);
    }
    TargetPattern::new(*grid, ind)
}

fn centered(grid: &GridSpec, layout: &[[f64; 4]]) -> Result<TargetPattern> {
    let scale = REFERENCE_DX_NM / grid.dx_nm;
    let px = |v: f64| (v * scale).round() as usize;
    let rects: Vec<Rect> = layout
        .iter()
        .map(|[r, c, h, w]| Rect::new(px(*r), px(*c), px(*h).max(1), px(*w).max(1)))
        .collect();
    let rows = rects.iter().map(|r| r.row + r.height).max().unwrap_or(0);
    let cols = rects.iter().map(|r| r.col + r.width).max().unwrap_or(0);
    let n = grid.n;
    if rows + 2 * MIN_MARGIN_PX > n || cols + 2 * MIN_MARGIN_PX > n {
        return Err(IltError::GeometryOverflow(format!(
            "layout needs {rows}x{cols} px plus margins, window is {n}x{n}"
        )));
    }
    let (r0, c0) = ((n - rows) / 2, (n - cols) / 2);
    let shifted: Vec<Rect> = rects
        .iter()
        .map(|r| Rect::new(r.row + r0, r.col + c0, r.height, r.width))
        .collect();
    custom_rects(grid, &shifted)
}
