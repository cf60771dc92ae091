//! Instance-level optimal assignment and ordering-aware point correspondence.

use serde::{Deserialize, Serialize};

use crate::defaults;
use crate::error::{invalid_config, invalid_input, Result};
use crate::geometry::Point;
use crate::map::{validate_probs, PolyInstance};

/// Minimum-cost one-to-one assignment on a dense `n × m` matrix.
///
/// Returns `min(n, m)` `(row, col)` pairs sorted by row. Uses the
/// shortest-augmenting-path Hungarian method with potentials, O(n²m).
pub fn solve_assignment(cost: &[Vec<f64>]) -> Result<Vec<(usize, usize)>> {
    let n = cost.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let m = cost[0].len();
    if cost.iter().any(|r| r.len() != m) {
        return invalid_input("cost matrix rows have different lengths");
    }
    if m == 0 {
        return Ok(Vec::new());
    }
    if cost.iter().flatten().any(|c| !c.is_finite()) {
        return invalid_input("cost matrix has non-finite entries");
    }

    if n <= m {
        Ok(hungarian(n, m, |i, j| cost[i][j]))
    } else {
        let mut pairs: Vec<(usize, usize)> = hungarian(m, n, |i, j| cost[j][i])
            .into_iter()
            .map(|(c, r)| (r, c))
            .collect();
        pairs.sort_unstable();
        Ok(pairs)
    }
}

// Requires rows <= cols.
fn hungarian(rows: usize, cols: usize, cost: impl Fn(usize, usize) -> f64) -> Vec<(usize, usize)> {
    let mut u = vec![0.0f64; rows + 1];
    let mut v = vec![0.0f64; cols + 1];
    // p[j]: row (1-based) assigned to column j; 0 = free.
    let mut p = vec![0usize; cols + 1];
    let mut way = vec![0usize; cols + 1];

    for i in 1..=rows {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; cols + 1];
        let mut used = vec![false; cols + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=cols {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=cols {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut pairs: Vec<(usize, usize)> = (1..=cols)
        .filter(|&j| p[j] != 0)
        .map(|j| (p[j] - 1, j - 1))
        .collect();
    pairs.sort_unstable();
    pairs
}

pub fn assignment_cost(cost: &[Vec<f64>], pairs: &[(usize, usize)]) -> f64 {
    pairs.iter().map(|&(r, c)| cost[r][c]).sum()
}

/// How the ground-truth point sequence is re-indexed to line up with the
/// prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointOrder {
    Forward,
    Reversed,
    /// Closed polygons only: prediction point `j` pairs with gt point
    /// `(shift + j) mod n`, or `(shift - j) mod n` when `reversed`.
    CyclicShift { shift: usize, reversed: bool },
}

impl PointOrder {
    /// Index into the gt sequence paired with prediction point `j`.
    #[inline]
    pub fn gt_index(&self, j: usize, n: usize) -> usize {
        match *self {
            PointOrder::Forward => j,
            PointOrder::Reversed => n - 1 - j,
            PointOrder::CyclicShift { shift, reversed } => {
                if reversed {
                    (shift + n - j % n) % n
                } else {
                    (shift + j) % n
                }
            }
        }
    }

    /// The gt sequence re-indexed so that element `j` pairs with prediction `j`.
    pub fn apply(&self, gt: &[Point]) -> Vec<Point> {
        let n = gt.len();
        (0..n).map(|j| gt[self.gt_index(j, n)]).collect()
    }

    fn closed(shift: usize, reversed: bool, n: usize) -> PointOrder {
        match (shift, reversed) {
            (0, false) => PointOrder::Forward,
            (s, true) if s + 1 == n => PointOrder::Reversed,
            _ => PointOrder::CyclicShift { shift, reversed },
        }
    }
}

#[inline]
pub fn manhattan(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).abs() + (a[1] - b[1]).abs()
}

fn ordered_cost(pred: &[Point], gt: &[Point], order: PointOrder) -> f64 {
    let n = gt.len();
    pred.iter()
        .enumerate()
        .map(|(j, p)| manhattan(*p, gt[order.gt_index(j, n)]))
        .sum()
}

/// Admissible orderings in tie-break priority: forward before reversed, then
/// increasing shift.
pub fn admissible_orders(n: usize, closed: bool) -> Vec<PointOrder> {
    if closed && n > 0 {
        let fwd = (0..n).map(|s| PointOrder::closed(s, false, n));
        let rev = (0..n).map(|s| PointOrder::closed(s, true, n));
        fwd.chain(rev).collect()
    } else {
        vec![PointOrder::Forward, PointOrder::Reversed]
    }
}

/// Ordering of `gt` minimizing the summed Manhattan distance to `pred`.
pub fn match_points(pred: &[Point], gt: &[Point], closed: bool) -> Result<(PointOrder, f64)> {
    if pred.len() != gt.len() {
        return invalid_input(format!(
            "point counts differ: pred {} vs gt {}",
            pred.len(),
            gt.len()
        ));
    }
    if pred.is_empty() {
        return invalid_input("cannot match empty point sequences");
    }
    let mut best = (PointOrder::Forward, f64::INFINITY);
    for order in admissible_orders(gt.len(), closed) {
        let c = ordered_cost(pred, gt, order);
        if c < best.1 {
            best = (order, c);
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatchConfig {
    /// Points each instance is resampled to before comparison.
    pub n_points: usize,
    pub cls_weight: f64,
    pub pts_weight: f64,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            n_points: defaults::MATCH_POINTS,
            cls_weight: defaults::MATCH_CLS_WEIGHT,
            pts_weight: defaults::MATCH_PTS_WEIGHT,
        }
    }
}

impl MatchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_points < 2 {
            return invalid_config("n_points must be >= 2");
        }
        if !(self.cls_weight >= 0.0 && self.pts_weight >= 0.0)
            || !self.cls_weight.is_finite()
            || !self.pts_weight.is_finite()
        {
            return invalid_config("matching weights must be finite and >= 0");
        }
        Ok(())
    }
}

fn require_probs(pred: &PolyInstance) -> Result<[f64; 3]> {
    let probs = pred
        .class_probs
        .ok_or_else(|| crate::Error::InvalidInput("prediction lacks class probabilities".into()))?;
    validate_probs(&probs)?;
    Ok(probs)
}

/// Matching cost between a prediction and a ground-truth instance from
/// already resampled point sets.
pub fn instance_cost_resampled(
    probs: &[f64; 3],
    pred_pts: &[Point],
    gt: &PolyInstance,
    gt_pts: &[Point],
    cfg: &MatchConfig,
) -> Result<f64> {
    let (_, pts_cost) = match_points(pred_pts, gt_pts, gt.closed)?;
    Ok(cfg.cls_weight * (1.0 - probs[gt.category.index()])
        + cfg.pts_weight * pts_cost / gt_pts.len() as f64)
}

pub fn instance_cost(pred: &PolyInstance, gt: &PolyInstance, cfg: &MatchConfig) -> Result<f64> {
    let probs = require_probs(pred)?;
    let pred_pts = pred.resample(cfg.n_points)?;
    let gt_pts = gt.resample(cfg.n_points)?;
    instance_cost_resampled(&probs, &pred_pts, gt, &gt_pts, cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub pred: usize,
    pub gt: usize,
    pub order: PointOrder,
    /// Summed Manhattan distance under `order`, meters.
    pub point_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub pairs: Vec<MatchedPair>,
    pub total_cost: f64,
    /// Resampled points of every prediction and gt instance, in input order.
    pub pred_points: Vec<Vec<Point>>,
    pub gt_points: Vec<Vec<Point>>,
}

impl MatchResult {
    pub fn gt_for_pred(&self, pred: usize) -> Option<&MatchedPair> {
        self.pairs.iter().find(|p| p.pred == pred)
    }

    /// Ground-truth points of a pair re-ordered to line up with the prediction.
    pub fn aligned_gt(&self, pair: &MatchedPair) -> Vec<Point> {
        pair.order.apply(&self.gt_points[pair.gt])
    }
}

/// Matches predictions to ground truth: builds the instance cost matrix,
/// solves the assignment and records each pair's point ordering.
pub fn match_instances(
    preds: &[PolyInstance],
    gts: &[PolyInstance],
    cfg: &MatchConfig,
) -> Result<MatchResult> {
    cfg.validate()?;
    let probs: Vec<[f64; 3]> = preds.iter().map(require_probs).collect::<Result<_>>()?;
    let pred_points: Vec<Vec<Point>> = preds
        .iter()
        .map(|p| p.resample(cfg.n_points))
        .collect::<Result<_>>()?;
    let gt_points: Vec<Vec<Point>> = gts
        .iter()
        .map(|g| g.resample(cfg.n_points))
        .collect::<Result<_>>()?;

    let cost: Vec<Vec<f64>> = (0..preds.len())
        .map(|i| {
            (0..gts.len())
                .map(|j| {
                    instance_cost_resampled(&probs[i], &pred_points[i], &gts[j], &gt_points[j], cfg)
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;

    let assignment = solve_assignment(&cost)?;
    let total_cost = assignment_cost(&cost, &assignment);
    let pairs = assignment
        .into_iter()
        .map(|(i, j)| {
            let (order, point_cost) = match_points(&pred_points[i], &gt_points[j], gts[j].closed)?;
            Ok(MatchedPair {
                pred: i,
                gt: j,
                order,
                point_cost,
            })
        })
        .collect::<Result<_>>()?;

    Ok(MatchResult {
        pairs,
        total_cost,
        pred_points,
        gt_points,
    })
}
