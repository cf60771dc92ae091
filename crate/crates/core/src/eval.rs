//! Chamfer-distance average precision over categories and thresholds.
//!
//! Predictions are pooled across all frames per category. For each Chamfer
//! threshold, predictions are visited by descending score and greedily take
//! the closest still-unmatched ground truth of the same frame. AP is the area
//! under the monotone precision envelope (all-point interpolation).

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::defaults;
use crate::error::{invalid_config, invalid_input, Result};
use crate::geometry::{distance, Extent, Point};
use crate::map::{Category, LocalVectorMap, PolyInstance};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub cd_thresholds: Vec<f64>,
    pub range_x: f64,
    pub range_y: f64,
    pub resample_n: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            cd_thresholds: defaults::CD_THRESHOLDS.to_vec(),
            range_x: defaults::RANGE_X,
            range_y: defaults::RANGE_Y,
            resample_n: defaults::EVAL_RESAMPLE,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.cd_thresholds.is_empty() {
            return invalid_config("at least one Chamfer threshold is required");
        }
        if self.cd_thresholds.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
            return invalid_config("Chamfer thresholds must be positive");
        }
        if self.cd_thresholds.windows(2).any(|w| w[1] <= w[0]) {
            return invalid_config("Chamfer thresholds must be strictly increasing");
        }
        if !(self.range_x > 0.0 && self.range_y > 0.0) {
            return invalid_config("evaluation range must be positive");
        }
        if self.resample_n < 2 {
            return invalid_config("resample_n must be >= 2");
        }
        Ok(())
    }

    pub fn extent(&self) -> Extent {
        Extent::centered(self.range_x, self.range_y)
    }
}

/// `½ (mean_a min_b ‖a − b‖ + mean_b min_a ‖a − b‖)`.
pub fn chamfer_distance(a: &[Point], b: &[Point]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return invalid_input("Chamfer distance needs two nonempty point sets");
    }
    let one_way = |from: &[Point], to: &[Point]| {
        from.iter()
            .map(|p| to.iter().map(|q| distance(*p, *q)).fold(f64::INFINITY, f64::min))
            .sum::<f64>()
            / from.len() as f64
    };
    Ok(0.5 * (one_way(a, b) + one_way(b, a)))
}

/// Greedy one-to-one matching of scored predictions against ground truth
/// given their Chamfer distances `cd[pred][gt]`. Returns the TP flag of every
/// prediction in input order.
pub fn match_for_eval(scores: &[f64], cd: &[Vec<f64>], n_gt: usize, threshold: f64) -> Vec<bool> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|a, b| {
        scores[*b]
            .partial_cmp(&scores[*a])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(b))
    });
    let mut taken = vec![false; n_gt];
    let mut tp = vec![false; scores.len()];
    for i in order {
        let best = (0..n_gt)
            .filter(|&j| !taken[j])
            .map(|j| (j, cd[i][j]))
            .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(Ordering::Equal));
        if let Some((j, d)) = best {
            if d <= threshold {
                taken[j] = true;
                tp[i] = true;
            }
        }
    }
    tp
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApResult {
    pub ap: f64,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    /// No ground truth: AP is reported as 0.
    pub undefined: bool,
}

/// All-point interpolated AP of scored TP/FP flags against `n_gt` targets.
pub fn ap_single(scores: &[f64], tp: &[bool], n_gt: usize) -> ApResult {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|a, b| {
        scores[*b]
            .partial_cmp(&scores[*a])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(b))
    });
    let n_tp = tp.iter().filter(|&&t| t).count();
    let mut out = ApResult {
        ap: 0.0,
        tp: n_tp,
        fp: tp.len() - n_tp,
        fn_: n_gt.saturating_sub(n_tp),
        undefined: n_gt == 0,
    };
    if n_gt == 0 || scores.is_empty() {
        return out;
    }

    let mut precision = Vec::with_capacity(order.len());
    let (mut ctp, mut cfp) = (0usize, 0usize);
    for &i in &order {
        if tp[i] {
            ctp += 1;
        } else {
            cfp += 1;
        }
        precision.push(ctp as f64 / (ctp + cfp) as f64);
    }
    for k in (0..precision.len().saturating_sub(1)).rev() {
        precision[k] = precision[k].max(precision[k + 1]);
    }
    // Recall only advances at true positives, each by 1 / n_gt.
    let ap = order
        .iter()
        .zip(&precision)
        .filter(|(i, _)| tp[**i])
        .map(|(_, p)| p)
        .sum::<f64>()
        / n_gt as f64;
    out.ap = ap.clamp(0.0, 1.0);
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdAp {
    pub threshold: f64,
    pub ap: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryReport {
    pub category: Category,
    pub n_gt: usize,
    pub n_pred: usize,
    pub per_threshold: Vec<ThresholdAp>,
    /// Mean over thresholds.
    pub ap: f64,
    /// False when the category has no ground truth; such categories are
    /// left out of the mAP.
    pub defined: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub categories: Vec<CategoryReport>,
    pub map: f64,
    pub thresholds: Vec<f64>,
    pub frames: usize,
    /// How predictions were aggregated across frames.
    pub pooling: String,
}

impl EvalReport {
    pub fn category(&self, c: Category) -> &CategoryReport {
        self.categories
            .iter()
            .find(|r| r.category == c)
            .expect("report covers every category")
    }

    /// Mean over defined categories of the AP at the `k`-th threshold.
    pub fn map_at(&self, k: usize) -> f64 {
        let defined: Vec<&CategoryReport> = self.categories.iter().filter(|c| c.defined).collect();
        if defined.is_empty() {
            return 0.0;
        }
        defined.iter().map(|c| c.per_threshold[k].ap).sum::<f64>() / defined.len() as f64
    }
}

/// Restricts instances to the evaluation range. Open polylines are clipped to
/// the rectangle (a polyline may split into several pieces); closed shapes
/// are kept whole when any vertex is inside.
pub fn clip_to_range(instances: &[PolyInstance], extent: &Extent) -> Vec<PolyInstance> {
    let mut out = Vec::new();
    for inst in instances {
        if inst.closed {
            if inst.points.iter().any(|p| extent.contains(*p)) {
                out.push(inst.clone());
            }
            continue;
        }
        if inst.points.iter().all(|p| extent.contains(*p)) {
            out.push(inst.clone());
            continue;
        }
        for piece in extent.clip_polyline(&inst.points, false) {
            out.push(PolyInstance {
                points: piece,
                ..inst.clone()
            });
        }
    }
    out
}

struct FrameCategory {
    pred_scores: Vec<f64>,
    cd: Vec<Vec<f64>>,
    n_gt: usize,
}

fn resample_all(instances: &[&PolyInstance], n: usize) -> Result<Vec<Vec<Point>>> {
    instances.iter().map(|i| i.resample(n)).collect()
}

pub fn evaluate(preds: &[LocalVectorMap], gts: &[LocalVectorMap], cfg: &EvalConfig) -> Result<EvalReport> {
    cfg.validate()?;
    if preds.len() != gts.len() {
        return invalid_input(format!(
            "prediction has {} frames but ground truth has {}",
            preds.len(),
            gts.len()
        ));
    }
    for (k, (p, g)) in preds.iter().zip(gts).enumerate() {
        if p.frame_id != g.frame_id {
            return invalid_input(format!(
                "frame {k}: prediction frame_id {} does not match ground truth {}",
                p.frame_id, g.frame_id
            ));
        }
    }

    let extent = cfg.extent();
    let mut categories = Vec::with_capacity(Category::COUNT);
    for category in Category::ALL {
        let mut frames = Vec::with_capacity(preds.len());
        for (p, g) in preds.iter().zip(gts) {
            let p_inst = clip_to_range(&p.instances, &extent);
            let g_inst = clip_to_range(&g.instances, &extent);
            let p_cat: Vec<&PolyInstance> = p_inst.iter().filter(|i| i.category == category).collect();
            let g_cat: Vec<&PolyInstance> = g_inst.iter().filter(|i| i.category == category).collect();
            let p_pts = resample_all(&p_cat, cfg.resample_n)?;
            let g_pts = resample_all(&g_cat, cfg.resample_n)?;
            let cd = p_pts
                .iter()
                .map(|a| g_pts.iter().map(|b| chamfer_distance(a, b)).collect::<Result<Vec<f64>>>())
                .collect::<Result<Vec<_>>>()?;
            frames.push(FrameCategory {
                pred_scores: p_cat.iter().map(|i| i.confidence()).collect(),
                cd,
                n_gt: g_cat.len(),
            });
        }

        let n_gt: usize = frames.iter().map(|f| f.n_gt).sum();
        let n_pred: usize = frames.iter().map(|f| f.pred_scores.len()).sum();
        let mut per_threshold = Vec::with_capacity(cfg.cd_thresholds.len());
        for &t in &cfg.cd_thresholds {
            let mut scores = Vec::with_capacity(n_pred);
            let mut flags = Vec::with_capacity(n_pred);
            for f in &frames {
                flags.extend(match_for_eval(&f.pred_scores, &f.cd, f.n_gt, t));
                scores.extend_from_slice(&f.pred_scores);
            }
            let r = ap_single(&scores, &flags, n_gt);
            per_threshold.push(ThresholdAp {
                threshold: t,
                ap: r.ap,
                tp: r.tp,
                fp: r.fp,
                fn_: r.fn_,
            });
        }
        let ap = per_threshold.iter().map(|t| t.ap).sum::<f64>() / per_threshold.len() as f64;
        categories.push(CategoryReport {
            category,
            n_gt,
            n_pred,
            per_threshold,
            ap,
            defined: n_gt > 0,
        });
    }

    let defined: Vec<f64> = categories.iter().filter(|c| c.defined).map(|c| c.ap).collect();
    let map = if defined.is_empty() {
        0.0
    } else {
        defined.iter().sum::<f64>() / defined.len() as f64
    };
    Ok(EvalReport {
        categories,
        map,
        thresholds: cfg.cd_thresholds.clone(),
        frames: preds.len(),
        pooling: "pooled_across_frames".into(),
    })
}
