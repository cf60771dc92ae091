//! Grid files: an ASCII graymap (P2) holding values scaled to 0..=255, with a
//! JSON sidecar describing the geometry.
//!
//! The image is written north-up: its first line is the grid row with the
//! largest `y` (left of the ego vehicle), and columns run along `+x`.

use std::path::{Path, PathBuf};

use mapcons::geometry::Extent;
use mapcons::{GridMap, GridSpec, Pose2};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::files::{read_json, write_atomic, write_json};

const MAX_VALUE: u32 = 255;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSidecar {
    pub width: usize,
    pub height: usize,
    pub resolution: f64,
    pub extent: Extent,
    pub pose: Pose2,
}

impl GridSidecar {
    pub fn new(spec: &GridSpec, pose: Pose2) -> Self {
        Self {
            width: spec.width,
            height: spec.height,
            resolution: spec.resolution,
            extent: spec.extent(),
            pose,
        }
    }

    pub fn spec(&self) -> GridSpec {
        GridSpec {
            width: self.width,
            height: self.height,
            resolution: self.resolution,
            x_min: self.extent.x_min,
            y_min: self.extent.y_min,
        }
    }
}

pub fn sidecar_path(pgm: &Path) -> PathBuf {
    let mut s = pgm.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn quantize(v: f64) -> u32 {
    (v.clamp(0.0, 1.0) * MAX_VALUE as f64).round() as u32
}

pub fn encode(grid: &GridMap) -> String {
    let spec = &grid.spec;
    let mut out = format!("P2\n# mapcons occupancy grid\n{} {}\n{MAX_VALUE}\n", spec.width, spec.height);
    for row in (0..spec.height).rev() {
        let line: Vec<String> = (0..spec.width).map(|col| quantize(grid.get(col, row)).to_string()).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

/// Parses a P2 body into `(width, height, values in row-major grid order)`.
pub fn decode(path: &Path, text: &str) -> CliResult<(usize, usize, Vec<f64>)> {
    let parse_err = |line: usize, field: &str, message: String| CliError::Parse {
        path: path.to_path_buf(),
        line,
        column: 1,
        field: field.to_string(),
        message,
    };
    let mut tokens = text.lines().enumerate().flat_map(|(i, l)| {
        let l = l.split('#').next().unwrap_or("");
        l.split_whitespace().map(move |t| (i + 1, t))
    });
    let mut next = |field: &str| {
        tokens
            .next()
            .ok_or_else(|| parse_err(text.lines().count().max(1), field, "unexpected end of file".into()))
    };
    let (line, magic) = next("magic")?;
    if magic != "P2" {
        return Err(parse_err(line, "magic", format!("expected P2, found {magic}")));
    }
    let mut number = |field: &str| -> CliResult<u32> {
        let (line, t) = next(field)?;
        t.parse().map_err(|_| parse_err(line, field, format!("`{t}` is not a nonnegative integer")))
    };
    let width = number("width")? as usize;
    let height = number("height")? as usize;
    let maxval = number("maxval")?;
    if maxval == 0 {
        return Err(parse_err(line, "maxval", "maximum value must be positive".into()));
    }
    let mut values = vec![0.0; width * height];
    for r in 0..height {
        let row = height - 1 - r;
        for col in 0..width {
            let p = number("pixel")?;
            if p > maxval {
                return Err(CliError::Validation(format!(
                    "{}: pixel {p} exceeds maximum {maxval}",
                    path.display()
                )));
            }
            values[col + row * width] = p as f64 / maxval as f64;
        }
    }
    Ok((width, height, values))
}

pub fn write_grid(path: &Path, grid: &GridMap, pose: Pose2) -> CliResult<()> {
    write_atomic(path, encode(grid).as_bytes())?;
    write_json(&sidecar_path(path), &GridSidecar::new(&grid.spec, pose))
}

pub fn read_grid(path: &Path) -> CliResult<(GridMap, Pose2)> {
    let meta: GridSidecar = read_json(&sidecar_path(path))?;
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let (w, h, values) = decode(path, &text)?;
    if (w, h) != (meta.width, meta.height) {
        return Err(CliError::Validation(format!(
            "{}: image is {w}x{h} but sidecar says {}x{}",
            path.display(),
            meta.width,
            meta.height
        )));
    }
    Ok((GridMap::from_values(meta.spec(), values)?, meta.pose))
}
