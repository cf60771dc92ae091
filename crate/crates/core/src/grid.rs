//! Occupancy grids in the ego frame.
//!
//! Column index runs along x, row index along y, and cell `(0, 0)` has its
//! lower-left corner at `(x_min, y_min)`. Values are stored row-major.

use serde::{Deserialize, Serialize};

use crate::defaults;
use crate::error::{invalid_config, invalid_input, Result};
use crate::geometry::{Extent, Point};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    pub width: usize,
    pub height: usize,
    pub resolution: f64,
    pub x_min: f64,
    pub y_min: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        let (w, h) = defaults::GRID_SIZE;
        GridSpec::centered(w, h, defaults::GRID_RESOLUTION)
    }
}

impl GridSpec {
    /// Grid of `width × height` cells centered on the ego origin.
    pub fn centered(width: usize, height: usize, resolution: f64) -> Self {
        Self {
            width,
            height,
            resolution,
            x_min: -(width as f64) * resolution / 2.0,
            y_min: -(height as f64) * resolution / 2.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return invalid_config("grid must have at least one cell");
        }
        if !(self.resolution.is_finite() && self.resolution > 0.0) {
            return invalid_config(format!("grid resolution {} must be > 0", self.resolution));
        }
        if !(self.x_min.is_finite() && self.y_min.is_finite()) {
            return invalid_config("grid origin must be finite");
        }
        Ok(())
    }

    pub fn extent(&self) -> Extent {
        Extent {
            x_min: self.x_min,
            x_max: self.x_min + self.width as f64 * self.resolution,
            y_min: self.y_min,
            y_max: self.y_min + self.height as f64 * self.resolution,
        }
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, col: usize, row: usize) -> usize {
        col + row * self.width
    }

    #[inline]
    pub fn cell_center(&self, col: usize, row: usize) -> Point {
        [
            self.x_min + (col as f64 + 0.5) * self.resolution,
            self.y_min + (row as f64 + 0.5) * self.resolution,
        ]
    }

    /// Continuous cell coordinates of a metric point, with integer values at
    /// cell centers.
    #[inline]
    pub fn to_cell_coords(&self, p: Point) -> (f64, f64) {
        (
            (p[0] - self.x_min) / self.resolution - 0.5,
            (p[1] - self.y_min) / self.resolution - 0.5,
        )
    }

    pub fn same_geometry(&self, other: &GridSpec) -> bool {
        self.width == other.width
            && self.height == other.height
            && (self.resolution - other.resolution).abs() <= 1e-12
            && (self.x_min - other.x_min).abs() <= 1e-9
            && (self.y_min - other.y_min).abs() <= 1e-9
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridMap {
    pub spec: GridSpec,
    pub values: Vec<f64>,
}

impl GridMap {
    pub fn zeros(spec: GridSpec) -> Self {
        Self {
            spec,
            values: vec![0.0; spec.len()],
        }
    }

    pub fn from_values(spec: GridSpec, values: Vec<f64>) -> Result<Self> {
        spec.validate()?;
        if values.len() != spec.len() {
            return invalid_input(format!(
                "grid expects {} values, got {}",
                spec.len(),
                values.len()
            ));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return invalid_input(format!("grid value {v} is outside [0, 1]"));
        }
        Ok(Self { spec, values })
    }

    #[inline]
    pub fn get(&self, col: usize, row: usize) -> f64 {
        self.values[self.spec.index(col, row)]
    }

    #[inline]
    pub fn set(&mut self, col: usize, row: usize, v: f64) {
        let i = self.spec.index(col, row);
        self.values[i] = v;
    }

    pub fn occupied_count(&self, threshold: f64) -> usize {
        self.values.iter().filter(|&&v| v >= threshold).count()
    }

    /// Cell-wise maximum with another grid of identical geometry.
    pub fn max_assign(&mut self, other: &GridMap) {
        debug_assert!(self.spec.same_geometry(&other.spec));
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a = a.max(*b);
        }
    }
}
