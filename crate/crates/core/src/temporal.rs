//! Ego-motion alignment of past occupancy grids, the occupancy consistency
//! loss and multi-frame merging.

use serde::{Deserialize, Serialize};

use crate::error::{invalid_input, Result};
use crate::geometry::{relative_pose, Pose2};
use crate::grid::{GridMap, GridSpec};

// Tolerance on the sampling window so exact border samples stay valid.
const EDGE_EPS: f64 = 1e-9;

/// A past grid resampled into the current frame. Cells whose sample fell
/// outside the past grid are invalid and excluded from every reduction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignedGrid {
    pub spec: GridSpec,
    pub values: Vec<f64>,
    pub valid: Vec<bool>,
}

impl AlignedGrid {
    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    /// Aligned grid that is the given grid with every cell valid.
    pub fn identity(grid: &GridMap) -> Self {
        Self {
            spec: grid.spec,
            values: grid.values.clone(),
            valid: vec![true; grid.values.len()],
        }
    }
}

/// Bilinear sample at continuous cell coordinates, `None` outside the
/// convex hull of the cell centers.
fn bilinear(grid: &GridMap, u: f64, v: f64) -> Option<f64> {
    let spec = &grid.spec;
    let max_u = (spec.width - 1) as f64;
    let max_v = (spec.height - 1) as f64;
    if !(u >= -EDGE_EPS && u <= max_u + EDGE_EPS && v >= -EDGE_EPS && v <= max_v + EDGE_EPS) {
        return None;
    }
    let u = u.clamp(0.0, max_u);
    let v = v.clamp(0.0, max_v);
    let c0 = (u.floor() as usize).min(spec.width.saturating_sub(2));
    let r0 = (v.floor() as usize).min(spec.height.saturating_sub(2));
    let c1 = (c0 + 1).min(spec.width - 1);
    let r1 = (r0 + 1).min(spec.height - 1);
    let fu = u - c0 as f64;
    let fv = v - r0 as f64;
    let top = grid.get(c0, r0) * (1.0 - fu) + grid.get(c1, r0) * fu;
    let bottom = grid.get(c0, r1) * (1.0 - fu) + grid.get(c1, r1) * fu;
    Some(top * (1.0 - fv) + bottom * fv)
}

/// Resamples `past` (observed at `past_pose`) onto the grid of a frame at
/// `cur_pose`, both grids sharing the same ego-relative geometry.
pub fn align_grid(past: &GridMap, past_pose: &Pose2, cur_pose: &Pose2) -> AlignedGrid {
    let spec = past.spec;
    let to_past = relative_pose(past_pose, cur_pose);
    let mut values = vec![0.0; spec.len()];
    let mut valid = vec![false; spec.len()];
    for row in 0..spec.height {
        for col in 0..spec.width {
            let p = to_past.apply(spec.cell_center(col, row));
            let (u, v) = spec.to_cell_coords(p);
            if let Some(s) = bilinear(past, u, v) {
                let i = spec.index(col, row);
                values[i] = s;
                valid[i] = true;
            }
        }
    }
    AlignedGrid { spec, values, valid }
}

/// [`align_grid`] with a check that `past` matches the current grid geometry.
pub fn align_grid_to(past: &GridMap, past_pose: &Pose2, current: &GridSpec, cur_pose: &Pose2) -> Result<AlignedGrid> {
    if !past.spec.same_geometry(current) {
        return invalid_input("past and current grids have different geometry");
    }
    Ok(align_grid(past, past_pose, cur_pose))
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MoLoss {
    pub value: f64,
    /// Per-history mean absolute difference over valid cells.
    pub terms: Vec<f64>,
    /// Histories with no valid cell; they contribute 0.
    pub empty_terms: usize,
}

fn check_history(current: &GridMap, history: &[AlignedGrid]) -> Result<()> {
    if history.is_empty() {
        return invalid_input("occupancy loss needs at least one history frame");
    }
    for (i, h) in history.iter().enumerate() {
        if !h.spec.same_geometry(&current.spec)
            || h.values.len() != current.values.len()
            || h.valid.len() != current.values.len()
        {
            return invalid_input(format!("history frame {i} does not match the current grid"));
        }
    }
    Ok(())
}

/// `Σ_i mean_{valid_i} |current − aligned_i|`.
pub fn mo_loss(current: &GridMap, history: &[AlignedGrid]) -> Result<MoLoss> {
    check_history(current, history)?;
    let mut out = MoLoss::default();
    for h in history {
        let mut sum = 0.0;
        let mut n = 0usize;
        for ((c, a), &ok) in current.values.iter().zip(&h.values).zip(&h.valid) {
            if ok {
                sum += (c - a).abs();
                n += 1;
            }
        }
        let term = if n == 0 {
            out.empty_terms += 1;
            0.0
        } else {
            sum / n as f64
        };
        out.terms.push(term);
        out.value += term;
    }
    Ok(out)
}

/// Subgradient of [`mo_loss`] with respect to the current grid values, with
/// `sign(0) = 0`.
pub fn mo_loss_grad(current: &GridMap, history: &[AlignedGrid]) -> Result<Vec<f64>> {
    check_history(current, history)?;
    let mut grad = vec![0.0; current.values.len()];
    for h in history {
        let n = h.valid_count();
        if n == 0 {
            continue;
        }
        let w = 1.0 / n as f64;
        for (i, ((c, a), &ok)) in current.values.iter().zip(&h.values).zip(&h.valid).enumerate() {
            if ok {
                let d = c - a;
                if d > 0.0 {
                    grad[i] += w;
                } else if d < 0.0 {
                    grad[i] -= w;
                }
            }
        }
    }
    Ok(grad)
}

/// Aligns every frame into `target_pose`, sums the valid samples and clamps
/// to `[0, 1]`.
pub fn merge_grids(sequence: &[(GridMap, Pose2)], target_pose: &Pose2) -> Result<GridMap> {
    let Some((first, _)) = sequence.first() else {
        return invalid_input("merging needs at least one frame");
    };
    let spec = first.spec;
    let mut acc = vec![0.0; spec.len()];
    for (i, (grid, pose)) in sequence.iter().enumerate() {
        if !grid.spec.same_geometry(&spec) {
            return invalid_input(format!("frame {i} has a different grid geometry"));
        }
        let aligned = align_grid(grid, pose, target_pose);
        for ((a, v), ok) in acc.iter_mut().zip(&aligned.values).zip(&aligned.valid) {
            if *ok {
                *a += v;
            }
        }
    }
    acc.iter_mut().for_each(|a| *a = a.clamp(0.0, 1.0));
    Ok(GridMap { spec, values: acc })
}

/// Cells valid in every aligned frame.
pub fn common_valid(aligned: &[AlignedGrid]) -> Vec<bool> {
    let n = aligned.first().map_or(0, |a| a.valid.len());
    (0..n).map(|i| aligned.iter().all(|a| a.valid[i])).collect()
}

/// Intersection over union of the cells `>= threshold` in both grids,
/// restricted to `mask`. Two empty sets give an IoU of 1.
pub fn masked_iou(a: &[f64], b: &[f64], mask: &[bool], threshold: f64) -> f64 {
    let mut inter = 0usize;
    let mut union = 0usize;
    for ((x, y), &m) in a.iter().zip(b).zip(mask) {
        if !m {
            continue;
        }
        let (p, q) = (*x >= threshold, *y >= threshold);
        inter += (p && q) as usize;
        union += (p || q) as usize;
    }
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}
