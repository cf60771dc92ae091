//! Supervised loss terms and their weighted combination.

use serde::{Deserialize, Serialize};

use crate::defaults;
use crate::error::{invalid_config, invalid_input, Result};
use crate::geometry::{segments, Point};
use crate::map::{validate_probs, Category, ClassProbs};
use crate::matching::{manhattan, MatchResult};

const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FocalParams {
    pub alpha: f64,
    pub gamma: f64,
}

impl Default for FocalParams {
    fn default() -> Self {
        Self {
            alpha: defaults::FOCAL_ALPHA,
            gamma: defaults::FOCAL_GAMMA,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FocalLoss {
    pub value: f64,
    /// Number of evaluations where the target probability hit the log floor.
    pub clamped: usize,
}

/// `-alpha (1 - p_t)^gamma ln p_t`, where `p_t` is the probability of `target`
/// and `None` targets the background mass `1 - sum(probs)`.
pub fn focal_loss(probs: &ClassProbs, target: Option<Category>, params: FocalParams) -> Result<FocalLoss> {
    validate_probs(probs)?;
    let p_t = match target {
        Some(c) => probs[c.index()],
        None => (1.0 - probs.iter().sum::<f64>()).max(0.0),
    };
    let clamped = p_t < PROB_FLOOR;
    let p = p_t.max(PROB_FLOOR);
    let value = -params.alpha * (1.0 - p).powf(params.gamma) * p.ln();
    Ok(FocalLoss {
        value: value.max(0.0),
        clamped: clamped as usize,
    })
}

/// Summed focal loss over all predictions: matched ones target their gt
/// category, unmatched ones the background.
pub fn classification_loss(
    probs: &[ClassProbs],
    targets: &[Option<Category>],
    params: FocalParams,
) -> Result<FocalLoss> {
    if probs.len() != targets.len() {
        return invalid_input("probabilities and targets differ in length");
    }
    let mut total = FocalLoss::default();
    for (p, t) in probs.iter().zip(targets) {
        let f = focal_loss(p, *t, params)?;
        total.value += f.value;
        total.clamped += f.clamped;
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointLoss {
    /// Sum over points of `|dx| + |dy|`.
    pub sum: f64,
    /// `sum` divided by the point count.
    pub mean: f64,
}

pub fn point_loss(pred: &[Point], gt: &[Point]) -> Result<PointLoss> {
    if pred.len() != gt.len() {
        return invalid_input(format!(
            "point counts differ: pred {} vs gt {}",
            pred.len(),
            gt.len()
        ));
    }
    let sum: f64 = pred.iter().zip(gt).map(|(a, b)| manhattan(*a, *b)).sum();
    let mean = if pred.is_empty() { 0.0 } else { sum / pred.len() as f64 };
    Ok(PointLoss { sum, mean })
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DirectionLoss {
    /// Mean of `1 - cos` over the edges that were scored.
    pub value: f64,
    pub edges: usize,
    /// Edges skipped because either side had zero length.
    pub skipped: usize,
}

/// Mean `1 - cos` between corresponding edges; closed shapes include the
/// closing edge.
pub fn direction_loss(pred: &[Point], gt: &[Point], closed: bool) -> Result<DirectionLoss> {
    if pred.len() != gt.len() {
        return invalid_input("point counts differ");
    }
    if pred.len() < 2 {
        return invalid_input("direction loss needs at least 2 points");
    }
    let mut out = DirectionLoss::default();
    let mut sum = 0.0;
    for ((a0, a1), (b0, b1)) in segments(pred, closed).zip(segments(gt, closed)) {
        let e = [a1[0] - a0[0], a1[1] - a0[1]];
        let g = [b1[0] - b0[0], b1[1] - b0[1]];
        let ne = e[0].hypot(e[1]);
        let ng = g[0].hypot(g[1]);
        if ne == 0.0 || ng == 0.0 {
            out.skipped += 1;
            continue;
        }
        let cos = ((e[0] * g[0] + e[1] * g[1]) / (ne * ng)).clamp(-1.0, 1.0);
        sum += 1.0 - cos;
        out.edges += 1;
    }
    if out.edges > 0 {
        out.value = sum / out.edges as f64;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Margins {
    pub delta_var: f64,
    pub delta_dist: f64,
}

impl Default for Margins {
    fn default() -> Self {
        Self {
            delta_var: defaults::DELTA_VAR,
            delta_dist: defaults::DELTA_DIST,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct InstanceMapLoss {
    pub var: f64,
    pub dist: f64,
}

fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Discriminative clustering loss over per-instance embedding sets.
///
/// The pull term averages `[‖μ_c − f‖ − δ_v]₊²` inside each instance and then
/// over instances; the push term sums `[2δ_d − ‖μ_a − μ_b‖]₊²` over ordered
/// pairs of distinct instances and divides by `C (C − 1)`.
pub fn instance_map_loss(instances: &[Vec<Vec<f64>>], margins: Margins) -> Result<InstanceMapLoss> {
    let c = instances.len();
    if c == 0 {
        return Ok(InstanceMapLoss::default());
    }
    let dim = match instances.iter().find_map(|inst| inst.first()) {
        Some(f) => f.len(),
        None => return invalid_input("every instance needs at least one embedding"),
    };
    let mut means = Vec::with_capacity(c);
    for (i, inst) in instances.iter().enumerate() {
        if inst.is_empty() {
            return invalid_input(format!("instance {i} has no embeddings"));
        }
        if inst.iter().any(|f| f.len() != dim) {
            return invalid_input(format!("instance {i} has embeddings of the wrong dimension"));
        }
        let mut mu = vec![0.0; dim];
        for f in inst {
            for (m, x) in mu.iter_mut().zip(f) {
                *m += x;
            }
        }
        mu.iter_mut().for_each(|m| *m /= inst.len() as f64);
        means.push(mu);
    }

    let var = instances
        .iter()
        .zip(&means)
        .map(|(inst, mu)| {
            inst.iter()
                .map(|f| (l2(mu, f) - margins.delta_var).max(0.0).powi(2))
                .sum::<f64>()
                / inst.len() as f64
        })
        .sum::<f64>()
        / c as f64;

    let mut dist = 0.0;
    if c > 1 {
        for a in 0..c {
            for b in 0..c {
                if a != b {
                    dist += (2.0 * margins.delta_dist - l2(&means[a], &means[b])).max(0.0).powi(2);
                }
            }
        }
        dist /= (c * (c - 1)) as f64;
    }
    Ok(InstanceMapLoss { var, dist })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub cls: f64,
    pub pts: f64,
    pub dirs: f64,
    pub cst: f64,
    pub ol: f64,
    pub var: f64,
    pub dist: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        let [cls, pts, dirs, cst, ol, var, dist] = defaults::LOSS_WEIGHTS;
        Self {
            cls,
            pts,
            dirs,
            cst,
            ol,
            var,
            dist,
        }
    }
}

impl LossWeights {
    pub fn as_array(&self) -> [f64; 7] {
        [self.cls, self.pts, self.dirs, self.cst, self.ol, self.var, self.dist]
    }

    pub fn validate(&self) -> Result<()> {
        for (name, w) in LossParts::NAMES.iter().zip(self.as_array()) {
            if !w.is_finite() || w < 0.0 {
                return invalid_config(format!("loss weight {name} = {w} must be finite and >= 0"));
            }
        }
        Ok(())
    }
}

/// Unweighted loss terms.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossParts {
    pub cls: f64,
    pub pts: f64,
    pub dirs: f64,
    pub cst: f64,
    pub ol: f64,
    pub var: f64,
    pub dist: f64,
}

impl LossParts {
    pub const NAMES: [&'static str; 7] = ["cls", "pts", "dirs", "cst", "ol", "var", "dist"];

    pub fn as_array(&self) -> [f64; 7] {
        [self.cls, self.pts, self.dirs, self.cst, self.ol, self.var, self.dist]
    }
}

pub fn combine_losses(parts: &LossParts, w: &LossWeights) -> Result<f64> {
    w.validate()?;
    let values = parts.as_array();
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return invalid_input(format!("loss term {} is not finite", LossParts::NAMES[i]));
    }
    Ok(values.iter().zip(w.as_array()).map(|(v, w)| v * w).sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DetectionLosses {
    pub cls: f64,
    pub pts: f64,
    pub pts_mean: f64,
    pub dirs: f64,
    pub focal_clamped: usize,
    pub skipped_edges: usize,
}

/// Classification, point and direction terms for one frame given a matching.
/// Point and direction terms are summed over matched pairs.
pub fn detection_losses(
    probs: &[ClassProbs],
    gt_categories: &[Category],
    gt_closed: &[bool],
    matching: &MatchResult,
    focal: FocalParams,
) -> Result<DetectionLosses> {
    let mut targets = vec![None; probs.len()];
    for pair in &matching.pairs {
        targets[pair.pred] = Some(gt_categories[pair.gt]);
    }
    let cls = classification_loss(probs, &targets, focal)?;
    let mut out = DetectionLosses {
        cls: cls.value,
        focal_clamped: cls.clamped,
        ..Default::default()
    };
    let mut n_points = 0usize;
    for pair in &matching.pairs {
        let pred = &matching.pred_points[pair.pred];
        let gt = matching.aligned_gt(pair);
        let p = point_loss(pred, &gt)?;
        out.pts += p.sum;
        n_points += pred.len();
        // The aligned gt of a closed shape keeps its cyclic structure.
        let d = direction_loss(pred, &gt, gt_closed[pair.gt])?;
        out.dirs += d.value;
        out.skipped_edges += d.skipped;
    }
    if n_points > 0 {
        out.pts_mean = out.pts / n_points as f64;
    }
    Ok(out)
}
