//! Vector-to-grid rasterization.

use serde::{Deserialize, Serialize};

use crate::defaults;
use crate::error::{invalid_config, Result};
use crate::geometry::{point_segment_distance, segments, Point};
use crate::grid::{GridMap, GridSpec};
use crate::map::{LocalVectorMap, PolyInstance};

// Guards the exact-boundary case against rounding in the distance.
const DIST_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RasterConfig {
    pub grid: GridSpec,
    /// Instances with a confidence below this are not drawn.
    pub threshold: f64,
    /// Stroke width in cells; a cell is drawn when its center lies within
    /// `stroke_cells` half cell-diagonals of the polyline.
    pub stroke_cells: f64,
}

impl Default for RasterConfig {
    fn default() -> Self {
        Self {
            grid: GridSpec::default(),
            threshold: defaults::RASTER_THRESHOLD,
            stroke_cells: defaults::STROKE_CELLS,
        }
    }
}

impl RasterConfig {
    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        if !(self.stroke_cells.is_finite() && self.stroke_cells > 0.0) {
            return invalid_config("stroke width must be > 0");
        }
        if !self.threshold.is_finite() {
            return invalid_config("raster threshold must be finite");
        }
        Ok(())
    }

    /// Distance from the polyline within which a cell center is drawn.
    pub fn stroke_radius(&self) -> f64 {
        self.stroke_cells * self.grid.resolution * std::f64::consts::SQRT_2 / 2.0
    }
}

fn cell_range(lo: f64, hi: f64, origin: f64, res: f64, n: usize) -> Option<(usize, usize)> {
    // Cells whose centers can fall inside [lo, hi].
    let first = ((lo - origin) / res - 0.5).ceil().max(0.0);
    let last = ((hi - origin) / res - 0.5).floor().min(n as f64 - 1.0);
    (first <= last).then_some((first as usize, last as usize))
}

fn draw_segment(grid: &mut GridMap, a: Point, b: Point, radius: f64) {
    let spec = grid.spec;
    let cols = cell_range(
        a[0].min(b[0]) - radius,
        a[0].max(b[0]) + radius,
        spec.x_min,
        spec.resolution,
        spec.width,
    );
    let rows = cell_range(
        a[1].min(b[1]) - radius,
        a[1].max(b[1]) + radius,
        spec.y_min,
        spec.resolution,
        spec.height,
    );
    let (Some((c0, c1)), Some((r0, r1))) = (cols, rows) else {
        return;
    };
    for row in r0..=r1 {
        for col in c0..=c1 {
            if point_segment_distance(spec.cell_center(col, row), a, b) <= radius + DIST_EPS {
                grid.set(col, row, 1.0);
            }
        }
    }
}

/// Draws the instance into `grid` (cell-wise max). Closed instances draw
/// only their boundary.
pub fn draw_instance(grid: &mut GridMap, inst: &PolyInstance, cfg: &RasterConfig) {
    let radius = cfg.stroke_radius();
    if inst.points.len() == 1 {
        draw_segment(grid, inst.points[0], inst.points[0], radius);
    }
    for (a, b) in segments(&inst.points, inst.closed) {
        draw_segment(grid, a, b, radius);
    }
}

pub fn rasterize_instance(inst: &PolyInstance, cfg: &RasterConfig) -> Result<GridMap> {
    cfg.validate()?;
    inst.validate()?;
    let mut grid = GridMap::zeros(cfg.grid);
    draw_instance(&mut grid, inst, cfg);
    Ok(grid)
}

/// Whether an instance is confident enough to be drawn. Instances without a
/// score or class probabilities (ground truth) always are.
pub fn passes_threshold(inst: &PolyInstance, threshold: f64) -> bool {
    if inst.score.is_none() && inst.class_probs.is_none() {
        return true;
    }
    inst.confidence() >= threshold
}

pub fn rasterize_instances<'a>(
    instances: impl IntoIterator<Item = &'a PolyInstance>,
    cfg: &RasterConfig,
) -> Result<GridMap> {
    cfg.validate()?;
    let mut grid = GridMap::zeros(cfg.grid);
    for inst in instances {
        inst.validate()?;
        if passes_threshold(inst, cfg.threshold) {
            draw_instance(&mut grid, inst, cfg);
        }
    }
    Ok(grid)
}

pub fn rasterize_map(map: &LocalVectorMap, cfg: &RasterConfig) -> Result<GridMap> {
    rasterize_instances(&map.instances, cfg)
}
