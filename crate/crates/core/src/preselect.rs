//! Point preselection from per-instance score maps.
//!
//! Each instance channel of a score map contributes its `P` highest-scoring
//! cells as initial reference points. The feature at each selected cell is
//! gathered from a flattened feature field and summed with a sinusoidal
//! encoding of the normalized cell coordinates to form the point query.

use std::cmp::Ordering;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid_config, invalid_input, Result};

/// Normalized `(col, row)` coordinates in `[0, 1]²`.
pub type NormCoord = [f64; 2];

/// `channels × height × width` scores, channel-major then row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreMap {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
}

impl ScoreMap {
    pub fn new(channels: usize, height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != channels * height * width {
            return invalid_input(format!(
                "score map expects {} values, got {}",
                channels * height * width,
                values.len()
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return invalid_input("score map has non-finite values");
        }
        Ok(Self {
            channels,
            height,
            width,
            values,
        })
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.values[c * n..(c + 1) * n]
    }
}

/// `(height · width) × dim` features, one row per cell in row-major order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureField {
    pub height: usize,
    pub width: usize,
    pub dim: usize,
    pub values: Vec<f64>,
}

impl FeatureField {
    pub fn new(height: usize, width: usize, dim: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != height * width * dim {
            return invalid_input(format!(
                "feature field expects {} values, got {}",
                height * width * dim,
                values.len()
            ));
        }
        Ok(Self {
            height,
            width,
            dim,
            values,
        })
    }

    pub fn zeros(height: usize, width: usize, dim: usize) -> Self {
        Self {
            height,
            width,
            dim,
            values: vec![0.0; height * width * dim],
        }
    }
}

/// The `k` highest-scoring cells of one channel as `(col / W, row / H)`.
/// Ties go to the smaller row-major index.
pub fn topk_coords(scores: &[f64], width: usize, height: usize, k: usize) -> Result<Vec<NormCoord>> {
    let n = width * height;
    if scores.len() != n {
        return invalid_input(format!("channel expects {n} scores, got {}", scores.len()));
    }
    if k > n {
        return invalid_input(format!("k = {k} exceeds the {n} cells"));
    }
    if k == 0 {
        return Ok(Vec::new());
    }
    let by_rank = |a: &usize, b: &usize| {
        scores[*b]
            .partial_cmp(&scores[*a])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(b))
    };
    let mut idx: Vec<usize> = (0..n).collect();
    if k < n {
        idx.select_nth_unstable_by(k - 1, by_rank);
        idx.truncate(k);
    }
    idx.sort_unstable_by(by_rank);
    Ok(idx
        .into_iter()
        .map(|i| [(i % width) as f64 / width as f64, (i / width) as f64 / height as f64])
        .collect())
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FlatIndices {
    pub indices: Vec<usize>,
    /// Coordinates that fell outside the grid and were clamped to its border.
    pub clamped: usize,
}

// Absorbs the representation error of col / W * W.
const CELL_EPS: f64 = 1e-9;

fn cell_of(x: f64, size: usize, clamped: &mut usize) -> usize {
    let c = (x * size as f64 + CELL_EPS).floor();
    if c < 0.0 {
        *clamped += 1;
        0
    } else if c > (size - 1) as f64 {
        *clamped += 1;
        size - 1
    } else {
        c as usize
    }
}

/// Flat row-major cell index `col + row · W` of each normalized coordinate.
///
/// A coordinate maps to the cell it falls in, so both `col / W` (cell
/// origin) and `(col + 0.5) / W` (cell center) resolve to column `col`.
pub fn flat_indices(coords: &[NormCoord], width: usize, height: usize) -> Result<FlatIndices> {
    if width == 0 || height == 0 {
        return invalid_input("grid must have at least one cell");
    }
    let mut out = FlatIndices::default();
    for c in coords {
        if !(c[0].is_finite() && c[1].is_finite()) {
            return invalid_input("coordinate is not finite");
        }
        let col = cell_of(c[0], width, &mut out.clamped);
        let row = cell_of(c[1], height, &mut out.clamped);
        out.indices.push(col + row * width);
    }
    Ok(out)
}

/// Row-gather from a flattened feature field.
pub fn gather_features(field: &FeatureField, indices: &[usize]) -> Result<Vec<Vec<f64>>> {
    let n = field.height * field.width;
    indices
        .iter()
        .map(|&i| {
            if i >= n {
                invalid_input(format!("index {i} out of range for {n} cells"))
            } else {
                Ok(field.values[i * field.dim..(i + 1) * field.dim].to_vec())
            }
        })
        .collect()
}

/// Angular frequency of encoding slot `k` out of `slots`. All frequencies lie
/// in `(0, pi]`, so each sin/cos pair is injective over `[0, 1]`.
fn frequency(k: usize, slots: usize) -> f64 {
    let per_axis = slots.div_ceil(2).max(1);
    let level = k / 2;
    PI * 100f64.powf(-(level as f64) / per_axis as f64)
}

/// Sinusoidal encoding of normalized coordinates into `dim` values.
///
/// Slot `k` (dims `2k`, `2k + 1`) holds `sin`, `cos` of `f_k · u`, where `u`
/// alternates between col (even `k`) and row (odd `k`).
pub fn encode_positions(coords: &[NormCoord], dim: usize) -> Result<Vec<Vec<f64>>> {
    if dim == 0 || !dim.is_multiple_of(2) {
        return invalid_config(format!("encoding dimension must be even and > 0, got {dim}"));
    }
    let slots = dim / 2;
    Ok(coords
        .iter()
        .map(|c| {
            let mut v = Vec::with_capacity(dim);
            for k in 0..slots {
                let (s, co) = (frequency(k, slots) * c[k % 2]).sin_cos();
                v.push(s);
                v.push(co);
            }
            v
        })
        .collect())
}

/// Point queries for every instance channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointQuery {
    pub instances: usize,
    pub points: usize,
    pub dim: usize,
    /// `instances × points` reference points.
    pub coords: Vec<NormCoord>,
    /// `instances × points × dim` query features.
    pub features: Vec<f64>,
}

impl PointQuery {
    pub fn coord(&self, instance: usize, point: usize) -> NormCoord {
        self.coords[instance * self.points + point]
    }

    pub fn feature(&self, instance: usize, point: usize) -> &[f64] {
        let start = (instance * self.points + point) * self.dim;
        &self.features[start..start + self.dim]
    }
}

pub fn build_point_queries(scores: &ScoreMap, field: &FeatureField, points: usize) -> Result<PointQuery> {
    if scores.height != field.height || scores.width != field.width {
        return invalid_input(format!(
            "score map is {}x{} but feature field is {}x{}",
            scores.width, scores.height, field.width, field.height
        ));
    }
    let mut coords = Vec::with_capacity(scores.channels * points);
    let mut features = Vec::with_capacity(scores.channels * points * field.dim);
    for c in 0..scores.channels {
        let sel = topk_coords(scores.channel(c), scores.width, scores.height, points)?;
        let flat = flat_indices(&sel, scores.width, scores.height)?;
        let gathered = gather_features(field, &flat.indices)?;
        let encoded = encode_positions(&sel, field.dim)?;
        for (g, e) in gathered.iter().zip(&encoded) {
            features.extend(g.iter().zip(e).map(|(a, b)| a + b));
        }
        coords.extend(sel);
    }
    Ok(PointQuery {
        instances: scores.channels,
        points,
        dim: field.dim,
        coords,
        features,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn topk_single_cell() {
        let mut s = vec![0.0; 100];
        s[3 + 2 * 10] = 1.0;
        let c = topk_coords(&s, 10, 10, 1).unwrap();
        assert_eq!(c, vec![[0.3, 0.2]]);
    }

    #[test]
    fn topk_tie_break_and_errors() {
        let mut s = vec![0.0; 12];
        s[7] = 2.0;
        s[2] = 2.0;
        let c = topk_coords(&s, 4, 3, 2).unwrap();
        assert_eq!(c, vec![[0.5, 0.0], [0.75, 1.0 / 3.0]]);
        assert!(topk_coords(&s, 4, 3, 13).is_err());
        assert!(topk_coords(&s, 4, 3, 0).unwrap().is_empty());
        assert_eq!(topk_coords(&s, 4, 3, 12).unwrap().len(), 12);
    }

    #[test]
    fn flat_index_examples() {
        let f = flat_indices(&[[0.2, 0.3], [0.0, 0.0], [0.9, 0.9]], 10, 10).unwrap();
        assert_eq!(f.indices, vec![32, 0, 99]);
        assert_eq!(f.clamped, 0);
        let f = flat_indices(&[[1.0, 1.0], [-0.2, 0.5]], 10, 10).unwrap();
        assert_eq!(f.indices, vec![99, 50]);
        assert_eq!(f.clamped, 3);
    }

    #[test]
    fn flat_index_representation_error() {
        // 1/49 * 49 evaluates just below 1.0.
        let f = flat_indices(&[[1.0 / 49.0, 0.0]], 49, 1).unwrap();
        assert_eq!(f.indices, vec![1]);
    }

    #[test]
    fn gather_examples() {
        let field = FeatureField::new(1, 3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(gather_features(&field, &[0]).unwrap(), vec![vec![1.0, 2.0]]);
        assert_eq!(
            gather_features(&field, &[2, 2]).unwrap(),
            vec![vec![5.0, 6.0], vec![5.0, 6.0]]
        );
        assert!(gather_features(&field, &[3]).is_err());
    }

    #[test]
    fn encoding_at_origin() {
        let e = encode_positions(&[[0.0, 0.0]], 8).unwrap();
        assert_eq!(e[0], vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
        assert!(matches!(encode_positions(&[[0.0, 0.0]], 7), Err(crate::Error::InvalidConfig(_))));
        let a = encode_positions(&[[0.3, 0.7], [0.3, 0.7]], 32).unwrap();
        assert_eq!(a[0], a[1]);
    }

    #[test]
    fn one_hot_query_with_zero_features() {
        let mut s = vec![0.0; 2 * 4 * 5];
        s[7] = 1.0; // channel 0: col 2, row 1
        s[20 + 19] = 1.0; // channel 1: col 4, row 3
        let scores = ScoreMap::new(2, 4, 5, s).unwrap();
        let field = FeatureField::zeros(4, 5, 16);
        let q = build_point_queries(&scores, &field, 1).unwrap();
        assert_eq!(q.coord(0, 0), [0.4, 0.25]);
        assert_eq!(q.coord(1, 0), [0.8, 0.75]);
        let enc = encode_positions(&[[0.4, 0.25]], 16).unwrap();
        assert_eq!(q.feature(0, 0), &enc[0][..]);
    }

    #[test]
    fn shape_mismatch() {
        let scores = ScoreMap::new(1, 2, 2, vec![0.0; 4]).unwrap();
        let field = FeatureField::zeros(2, 3, 4);
        assert!(build_point_queries(&scores, &field, 1).is_err());
        assert!(ScoreMap::new(1, 2, 2, vec![0.0; 3]).is_err());
    }
}
