//! Cross-frame instance contrastive learning: anchor selection, positive and
//! negative mining, the loss and its exact gradient.
//!
//! For each category, the highest-scoring current instances act as anchors
//! `v`. An anchor's positive is the nearest same-category instance of the
//! history (by box center), and its negatives are the top-scoring current
//! instances of every other category. The loss is
//! `log(1 + Σ_anchors Σ_neg exp(v·k⁻ − v·k⁺))`.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::defaults;
use crate::error::{invalid_input, Result};
use crate::geometry::distance;
use crate::map::{Category, ClassProbs, InstanceEmbedding, PolyInstance};
use crate::matching::match_points;

/// Instance quality in `[0, 1]`: `p[gt] · max(0, 1 − mean_l1 / tau)`.
pub fn compute_instance_score(probs: &ClassProbs, gt_category: Category, mean_point_l1: f64, tau: f64) -> f64 {
    let p = probs[gt_category.index()].clamp(0.0, 1.0);
    let loc = (1.0 - mean_point_l1 / tau).max(0.0);
    (p * loc).clamp(0.0, 1.0)
}

/// Score of a prediction against its matched gt, or 0 when unmatched.
pub fn instance_score(pred: &PolyInstance, gt: Option<&PolyInstance>, n_points: usize, tau: f64) -> Result<f64> {
    let Some(gt) = gt else {
        return Ok(0.0);
    };
    let probs = pred
        .class_probs
        .ok_or_else(|| crate::Error::InvalidInput("prediction lacks class probabilities".into()))?;
    let p = pred.resample(n_points)?;
    let g = gt.resample(n_points)?;
    let (_, cost) = match_points(&p, &g, gt.closed)?;
    Ok(compute_instance_score(&probs, gt.category, cost / n_points as f64, tau))
}

fn by_score_desc(items: &[InstanceEmbedding]) -> impl Fn(&usize, &usize) -> Ordering + '_ {
    |a, b| {
        items[*b]
            .score
            .partial_cmp(&items[*a].score)
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(b))
    }
}

fn top_of_category(items: &[InstanceEmbedding], category: Category, k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..items.len())
        .filter(|&i| items[i].category == category)
        .collect();
    idx.sort_by(by_score_desc(items));
    idx.truncate(k);
    idx
}

/// Up to `max_per_label` highest-scoring instances of each category, grouped
/// by category in enum order.
pub fn select_anchors(current: &[InstanceEmbedding], max_per_label: usize) -> Vec<usize> {
    Category::ALL
        .iter()
        .flat_map(|&c| top_of_category(current, c, max_per_label))
        .collect()
}

/// Same-category history instance with the nearest box center, if within
/// `r_max` meters.
pub fn find_positive(anchor: &InstanceEmbedding, history: &[InstanceEmbedding], r_max: f64) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, h) in history.iter().enumerate() {
        if h.category != anchor.category {
            continue;
        }
        let d = distance(h.bbox.center, anchor.bbox.center);
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((i, d));
        }
    }
    best.filter(|(_, d)| *d <= r_max).map(|(i, _)| i)
}

/// Top `k_per_label` current instances of every category other than the
/// anchor's.
pub fn find_negatives(anchor: &InstanceEmbedding, current: &[InstanceEmbedding], k_per_label: usize) -> Vec<usize> {
    Category::ALL
        .iter()
        .filter(|&&c| c != anchor.category)
        .flat_map(|&c| top_of_category(current, c, k_per_label))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reduction {
    #[default]
    Sum,
    /// Divide by the number of anchors that have a positive.
    Mean,
}

/// One anchor with its mined samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContrastiveTerm {
    pub anchor: Vec<f64>,
    pub positive: Option<Vec<f64>>,
    pub negatives: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ContrastiveConfig {
    pub max_anchors_per_label: usize,
    pub negatives_per_label: usize,
    pub positive_radius: f64,
    pub reduction: Reduction,
}

impl Default for ContrastiveConfig {
    fn default() -> Self {
        Self {
            max_anchors_per_label: defaults::MAX_ANCHORS_PER_LABEL,
            negatives_per_label: defaults::NEGATIVES_PER_LABEL,
            positive_radius: defaults::POSITIVE_RADIUS,
            reduction: Reduction::Sum,
        }
    }
}

/// Mines anchors, positives and negatives. History boxes must already be
/// expressed in the current ego frame.
pub fn mine_terms(
    current: &[InstanceEmbedding],
    history: &[InstanceEmbedding],
    cfg: &ContrastiveConfig,
) -> Vec<ContrastiveTerm> {
    select_anchors(current, cfg.max_anchors_per_label)
        .into_iter()
        .map(|a| {
            let anchor = &current[a];
            ContrastiveTerm {
                anchor: anchor.feature.clone(),
                positive: find_positive(anchor, history, cfg.positive_radius)
                    .map(|p| history[p].feature.clone()),
                negatives: find_negatives(anchor, current, cfg.negatives_per_label)
                    .into_iter()
                    .map(|n| current[n].feature.clone())
                    .collect(),
            }
        })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_dims(terms: &[ContrastiveTerm]) -> Result<()> {
    let Some(dim) = terms.first().map(|t| t.anchor.len()) else {
        return Ok(());
    };
    for (i, t) in terms.iter().enumerate() {
        let bad = t.anchor.len() != dim
            || t.positive.as_ref().is_some_and(|p| p.len() != dim)
            || t.negatives.iter().any(|n| n.len() != dim);
        if bad {
            return invalid_input(format!("term {i} has vectors of inconsistent dimension"));
        }
        let finite = t.anchor.iter().all(|x| x.is_finite())
            && t.positive.iter().flatten().all(|x| x.is_finite())
            && t.negatives.iter().flatten().all(|x| x.is_finite());
        if !finite {
            return invalid_input(format!("term {i} has non-finite values"));
        }
    }
    Ok(())
}

/// Logits `v·k⁻ − v·k⁺` of every contributing (anchor, negative) pair.
fn logits(terms: &[ContrastiveTerm]) -> Vec<Vec<f64>> {
    terms
        .iter()
        .map(|t| match &t.positive {
            Some(pos) => {
                let vp = dot(&t.anchor, pos);
                t.negatives.iter().map(|n| dot(&t.anchor, n) - vp).collect()
            }
            None => Vec::new(),
        })
        .collect()
}

/// `ln(1 + Σ exp z)`, evaluated without overflow.
fn log1p_sum_exp(z: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = z.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return 0.0;
    }
    let lse = m + z.map(|x| (x - m).exp()).sum::<f64>().ln();
    // softplus(lse)
    lse.max(0.0) + (-lse.abs()).exp().ln_1p()
}

fn scale(terms: &[ContrastiveTerm], reduction: Reduction) -> f64 {
    match reduction {
        Reduction::Sum => 1.0,
        Reduction::Mean => {
            let n = terms.iter().filter(|t| t.positive.is_some()).count();
            if n == 0 {
                1.0
            } else {
                1.0 / n as f64
            }
        }
    }
}

pub fn contrastive_loss(terms: &[ContrastiveTerm], reduction: Reduction) -> Result<f64> {
    check_dims(terms)?;
    let z = logits(terms);
    let loss = log1p_sum_exp(z.iter().flatten().copied());
    Ok(loss * scale(terms, reduction))
}

/// Gradients with the same layout as the input terms. Terms without a
/// positive get zero gradients and `positive: None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContrastiveGrad {
    pub loss: f64,
    pub terms: Vec<ContrastiveTerm>,
}

pub fn contrastive_loss_grad(terms: &[ContrastiveTerm], reduction: Reduction) -> Result<ContrastiveGrad> {
    check_dims(terms)?;
    let z = logits(terms);
    let loss = log1p_sum_exp(z.iter().flatten().copied());
    let s = scale(terms, reduction);

    let grads = terms
        .iter()
        .zip(&z)
        .map(|(t, zt)| {
            let dim = t.anchor.len();
            let mut g_anchor = vec![0.0; dim];
            let mut g_pos = t.positive.as_ref().map(|_| vec![0.0; dim]);
            let mut g_negs = vec![vec![0.0; dim]; t.negatives.len()];
            if let (Some(pos), Some(gp)) = (&t.positive, g_pos.as_mut()) {
                for ((neg, gn), &zi) in t.negatives.iter().zip(&mut g_negs).zip(zt) {
                    // dL/dz_i = exp(z_i) / (1 + S) = exp(z_i - L)
                    let w = s * (zi - loss).exp();
                    for d in 0..dim {
                        g_anchor[d] += w * (neg[d] - pos[d]);
                        gp[d] -= w * t.anchor[d];
                        gn[d] += w * t.anchor[d];
                    }
                }
            }
            ContrastiveTerm {
                anchor: g_anchor,
                positive: g_pos,
                negatives: g_negs,
            }
        })
        .collect();

    Ok(ContrastiveGrad {
        loss: loss * s,
        terms: grads,
    })
}
