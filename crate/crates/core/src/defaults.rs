//! Published constants and the conventional defaults built on them.
//!
//! Every default used elsewhere in the crate is read from here.

/// Chamfer-distance thresholds for AP, in meters.
pub const CD_THRESHOLDS: [f64; 3] = [0.5, 1.0, 1.5];
/// Full width of the evaluation range along x (forward), meters.
pub const RANGE_X: f64 = 60.0;
/// Full width of the evaluation range along y (left), meters.
pub const RANGE_Y: f64 = 30.0;
/// Points per instance before Chamfer distance.
pub const EVAL_RESAMPLE: usize = 100;

/// Grid cell size in meters.
pub const GRID_RESOLUTION: f64 = 0.15;
/// Grid size as (width, height) cells.
pub const GRID_SIZE: (usize, usize) = (400, 200);
/// Minimum confidence for an instance to be rasterized.
pub const RASTER_THRESHOLD: f64 = 0.4;

/// Loss weights in order cls, pts, dirs, cst, ol, var, dist.
pub const LOSS_WEIGHTS: [f64; 7] = [2.0, 5.0, 0.005, 0.1, 1.0, 1.0, 0.1];

/// Maximum anchors per category for the contrastive objective.
pub const MAX_ANCHORS_PER_LABEL: usize = 3;
/// Negatives taken from each other category.
pub const NEGATIVES_PER_LABEL: usize = 3;
/// Search radius for the positive sample, meters.
pub const POSITIVE_RADIUS: f64 = 5.0;
/// Point error at which the instance score reaches zero, meters.
pub const INSTANCE_SCORE_TAU: f64 = 1.0;

pub const FOCAL_ALPHA: f64 = 0.25;
pub const FOCAL_GAMMA: f64 = 2.0;
pub const DELTA_VAR: f64 = 0.5;
pub const DELTA_DIST: f64 = 3.0;

/// Points per instance used for matching and point losses.
pub const MATCH_POINTS: usize = 20;
pub const MATCH_CLS_WEIGHT: f64 = 2.0;
pub const MATCH_PTS_WEIGHT: f64 = 5.0;

/// History frames in the occupancy consistency loss.
pub const TEMPORAL_WINDOW: usize = 2;
/// Raster stroke width in cells.
pub const STROKE_CELLS: f64 = 1.0;
