//! Planar rigid transforms and polyline utilities.
//!
//! Ego frame convention: x forward, y left. Poses are world-frame placements of
//! the ego vehicle, so `pose.apply(p)` maps an ego-frame point into the world.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid_input, Error, Result};

pub type Point = [f64; 2];

/// Wraps an angle into `(-pi, pi]`.
pub fn normalize_angle(angle: f64) -> f64 {
    let a = angle.rem_euclid(2.0 * PI);
    if a > PI {
        a - 2.0 * PI
    } else {
        a
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

impl Default for Pose2 {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose2 {
    pub fn new(x: f64, y: f64, yaw: f64) -> Self {
        Self {
            x,
            y,
            yaw: normalize_angle(yaw),
        }
    }

    pub fn identity() -> Self {
        Self {
            x: 0.0,
            y: 0.0,
            yaw: 0.0,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.yaw.is_finite()
    }

    #[inline]
    pub fn apply(&self, p: Point) -> Point {
        let (s, c) = self.yaw.sin_cos();
        [c * p[0] - s * p[1] + self.x, s * p[0] + c * p[1] + self.y]
    }

    /// `self ∘ other`: first apply `other`, then `self`.
    pub fn compose(&self, other: &Pose2) -> Pose2 {
        let t = self.apply([other.x, other.y]);
        Pose2::new(t[0], t[1], self.yaw + other.yaw)
    }

    pub fn inverse(&self) -> Pose2 {
        let (s, c) = self.yaw.sin_cos();
        // R^T * (-t)
        let x = -(c * self.x + s * self.y);
        let y = -(-s * self.x + c * self.y);
        Pose2::new(x, y, -self.yaw)
    }
}

/// Maps every point through `pose`: `R(yaw) p + (x, y)`.
pub fn transform_points(pose: &Pose2, pts: &[Point]) -> Result<Vec<Point>> {
    if !pose.is_finite() {
        return invalid_input("pose has non-finite components");
    }
    pts.iter()
        .enumerate()
        .map(|(i, p)| {
            if p[0].is_finite() && p[1].is_finite() {
                Ok(pose.apply(*p))
            } else {
                invalid_input(format!("point {i} is not finite"))
            }
        })
        .collect()
}

/// Transform taking coordinates expressed in frame `b` into frame `a`,
/// where both poses are given in a common world frame.
pub fn relative_pose(a: &Pose2, b: &Pose2) -> Pose2 {
    a.inverse().compose(b)
}

#[inline]
pub fn distance(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Euclidean distance from `p` to the segment `a`–`b`.
pub fn point_segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let dx = b[0] - a[0];
    let dy = b[1] - a[1];
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        return distance(p, a);
    }
    let t = (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0);
    distance(p, [a[0] + t * dx, a[1] + t * dy])
}

/// Segments of a polyline, including the wrap-around edge when closed.
pub fn segments(points: &[Point], closed: bool) -> impl Iterator<Item = (Point, Point)> + '_ {
    let n = points.len();
    let count = match (n, closed) {
        (0 | 1, _) => 0,
        (2, true) => 1,
        (_, true) => n,
        (_, false) => n - 1,
    };
    (0..count).map(move |i| (points[i], points[(i + 1) % n]))
}

pub fn polyline_length(points: &[Point], closed: bool) -> f64 {
    segments(points, closed).map(|(a, b)| distance(a, b)).sum()
}

/// Axis-aligned rectangle `[x_min, x_max] × [y_min, y_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extent {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Extent {
    /// Rectangle of the given full widths centered on the origin.
    pub fn centered(range_x: f64, range_y: f64) -> Self {
        Self {
            x_min: -range_x / 2.0,
            x_max: range_x / 2.0,
            y_min: -range_y / 2.0,
            y_max: range_y / 2.0,
        }
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn contains(&self, p: Point) -> bool {
        p[0] >= self.x_min && p[0] <= self.x_max && p[1] >= self.y_min && p[1] <= self.y_max
    }

    /// Liang–Barsky clip of segment `a`–`b`. Returns the clipped endpoints and
    /// their parameters along the original segment.
    fn clip_segment(&self, a: Point, b: Point) -> Option<(Point, Point, f64, f64)> {
        let dx = b[0] - a[0];
        let dy = b[1] - a[1];
        let mut t0 = 0.0f64;
        let mut t1 = 1.0f64;
        for (p, q) in [
            (-dx, a[0] - self.x_min),
            (dx, self.x_max - a[0]),
            (-dy, a[1] - self.y_min),
            (dy, self.y_max - a[1]),
        ] {
            if p == 0.0 {
                if q < 0.0 {
                    return None;
                }
            } else {
                let r = q / p;
                if p < 0.0 {
                    t0 = t0.max(r);
                } else {
                    t1 = t1.min(r);
                }
            }
        }
        if t0 > t1 {
            return None;
        }
        let at = |t: f64| [a[0] + t * dx, a[1] + t * dy];
        let start = if t0 == 0.0 { a } else { at(t0) };
        let end = if t1 == 1.0 { b } else { at(t1) };
        Some((start, end, t0, t1))
    }

    /// Clips a polyline against the rectangle, returning every inside piece
    /// with nonzero length. Closed polylines are clipped along their boundary.
    pub fn clip_polyline(&self, points: &[Point], closed: bool) -> Vec<Vec<Point>> {
        let mut pieces = Vec::new();
        let mut current: Vec<Point> = Vec::new();
        let mut finish = |current: &mut Vec<Point>| {
            if current.len() >= 2 && polyline_length(current, false) > 0.0 {
                pieces.push(std::mem::take(current));
            } else {
                current.clear();
            }
        };
        for (a, b) in segments(points, closed) {
            match self.clip_segment(a, b) {
                None => finish(&mut current),
                Some((s, e, t0, t1)) => {
                    if current.is_empty() || t0 > 0.0 {
                        finish(&mut current);
                        current.push(s);
                    }
                    if current.last() != Some(&e) {
                        current.push(e);
                    }
                    if t1 < 1.0 {
                        finish(&mut current);
                    }
                }
            }
        }
        finish(&mut current);
        pieces
    }
}

/// Axis-aligned bounding box stored as center plus half-extents.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub center: Point,
    pub half_extents: [f64; 2],
}

impl BBox {
    pub fn from_points(points: &[Point]) -> Option<BBox> {
        let first = points.first()?;
        let (mut lo, mut hi) = (*first, *first);
        for p in &points[1..] {
            lo = [lo[0].min(p[0]), lo[1].min(p[1])];
            hi = [hi[0].max(p[0]), hi[1].max(p[1])];
        }
        Some(BBox {
            center: [(lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0],
            half_extents: [(hi[0] - lo[0]) / 2.0, (hi[1] - lo[1]) / 2.0],
        })
    }
}

/// Arc-length coordinates, measured along the source polyline, of the points
/// produced by [`resample_points`].
pub fn resample_arc_positions(total_length: f64, closed: bool, n: usize) -> Vec<f64> {
    if closed {
        (0..n).map(|k| total_length * k as f64 / n as f64).collect()
    } else {
        (0..n)
            .map(|k| {
                if k + 1 == n {
                    total_length
                } else {
                    total_length * k as f64 / (n - 1) as f64
                }
            })
            .collect()
    }
}

/// `n` points equally spaced in arc length along the polyline. Open polylines
/// keep both endpoints; closed ones start at the first vertex and do not repeat it.
pub fn resample_points(points: &[Point], closed: bool, n: usize) -> Result<Vec<Point>> {
    if n < 2 {
        return invalid_input(format!("resample count must be >= 2, got {n}"));
    }
    if points.is_empty() {
        return Err(Error::DegenerateGeometry("polyline has no points".into()));
    }
    let segs: Vec<(Point, Point, f64)> = segments(points, closed)
        .map(|(a, b)| (a, b, distance(a, b)))
        .collect();
    let total: f64 = segs.iter().map(|s| s.2).sum();
    if !total.is_finite() {
        return invalid_input("polyline has non-finite coordinates");
    }
    if total <= 0.0 {
        return Err(Error::DegenerateGeometry(
            "polyline has zero arc length".into(),
        ));
    }

    let targets = resample_arc_positions(total, closed, n);
    let mut out = Vec::with_capacity(n);
    let mut seg = 0usize;
    let mut seg_start = 0.0f64;
    for (k, &s) in targets.iter().enumerate() {
        if !closed && k + 1 == n {
            out.push(*points.last().unwrap());
            continue;
        }
        while seg + 1 < segs.len() && seg_start + segs[seg].2 < s {
            seg_start += segs[seg].2;
            seg += 1;
        }
        let (a, b, len) = segs[seg];
        let t = if len > 0.0 {
            ((s - seg_start) / len).clamp(0.0, 1.0)
        } else {
            0.0
        };
        out.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
    }
    Ok(out)
}
