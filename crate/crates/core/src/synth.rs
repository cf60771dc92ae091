//! Deterministic synthetic scenes: a static road layout observed along an ego
//! trajectory, noisy predictions and clustered instance embeddings.
//!
//! All randomness comes from ChaCha8 seeded with the scene seed, with a
//! separate stream per purpose and frame so that each frame can be generated
//! independently.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid_config, Result};
use crate::geometry::{polyline_length, Extent, Point, Pose2};
use crate::map::{bbox_of, Category, ClassProbs, InstanceEmbedding, LocalVectorMap, PolyInstance};

const STREAM_LAYOUT: u64 = 0;
const STREAM_PRED: u64 = 1 << 32;
const STREAM_EMB: u64 = 2 << 32;
const STREAM_POINT_EMB: u64 = 3 << 32;

/// Pieces shorter than this after clipping are dropped, meters.
const MIN_PIECE_LENGTH: f64 = 1.0;
/// World polyline vertex spacing, meters.
const VERTEX_SPACING: f64 = 1.0;
const CROSSING_DEPTH: f64 = 4.0;

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn frame_stream(base: u64, frame_id: i64) -> u64 {
    base | (frame_id as u64 & 0xffff_ffff)
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    /// Per-coordinate Gaussian jitter, meters.
    pub point_sigma: f64,
    pub drop_prob: f64,
    /// Expected false positives per ground-truth instance.
    pub fp_rate: f64,
    /// Scale of the half-normal deduction from a true positive's score.
    pub score_noise: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            point_sigma: 0.2,
            drop_prob: 0.05,
            fp_rate: 0.1,
            score_noise: 0.2,
        }
    }
}

impl NoiseConfig {
    pub fn exact() -> Self {
        Self {
            point_sigma: 0.0,
            drop_prob: 0.0,
            fp_rate: 0.0,
            score_noise: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.point_sigma >= 0.0 && self.point_sigma.is_finite()) {
            return invalid_config("point sigma must be >= 0");
        }
        if !(0.0..=1.0).contains(&self.drop_prob) || !(0.0..=1.0).contains(&self.fp_rate) {
            return invalid_config("drop and false-positive rates must lie in [0, 1]");
        }
        if !(self.score_noise >= 0.0 && self.score_noise.is_finite()) {
            return invalid_config("score noise must be >= 0");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneConfig {
    pub seed: u64,
    pub n_frames: usize,
    /// Inclusive ranges of instance counts per category.
    pub dividers: (usize, usize),
    pub crossings: (usize, usize),
    pub boundaries: (usize, usize),
    pub lane_width: f64,
    /// Ego travel per frame, meters.
    pub ego_step: f64,
    /// Ego heading change per frame, radians.
    pub yaw_rate: f64,
    /// Seconds between frames.
    pub frame_interval: f64,
    pub range_x: f64,
    pub range_y: f64,
    pub noise: NoiseConfig,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_frames: 5,
            dividers: (1, 3),
            crossings: (1, 2),
            boundaries: (2, 2),
            lane_width: 3.5,
            ego_step: 2.0,
            yaw_rate: 0.02,
            frame_interval: 0.5,
            range_x: crate::defaults::RANGE_X,
            range_y: crate::defaults::RANGE_Y,
            noise: NoiseConfig::default(),
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        self.noise.validate()?;
        if self.n_frames == 0 {
            return invalid_config("scene needs at least one frame");
        }
        for (name, (lo, hi)) in [
            ("dividers", self.dividers),
            ("crossings", self.crossings),
            ("boundaries", self.boundaries),
        ] {
            if lo > hi {
                return invalid_config(format!("{name} range ({lo}, {hi}) is empty"));
            }
        }
        if !(self.lane_width > 0.0 && self.range_x > 0.0 && self.range_y > 0.0) {
            return invalid_config("lane width and range must be positive");
        }
        if !(self.ego_step >= 0.0 && self.ego_step.is_finite() && self.yaw_rate.is_finite()) {
            return invalid_config("ego motion must be finite with a nonnegative step");
        }
        let lanes = self.dividers.1 + 1;
        if lanes as f64 * self.lane_width + 2.0 * self.lane_width >= self.range_y {
            return invalid_config("road is wider than the perception range");
        }
        Ok(())
    }

    pub fn extent(&self) -> Extent {
        Extent::centered(self.range_x, self.range_y)
    }
}

/// The static world-frame layout and the ego poses observing it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct World {
    pub instances: Vec<PolyInstance>,
    pub poses: Vec<Pose2>,
}

/// Constant-curvature centerline: heading `kappa * s`, starting at the origin.
fn centerline(kappa: f64, s: f64) -> Pose2 {
    if kappa.abs() < 1e-12 {
        return Pose2::new(s, 0.0, 0.0);
    }
    let th = kappa * s;
    Pose2::new(th.sin() / kappa, (1.0 - th.cos()) / kappa, th)
}

fn offset_curve(kappa: f64, s0: f64, s1: f64, lateral: f64) -> Vec<Point> {
    let n = ((s1 - s0) / VERTEX_SPACING).ceil().max(1.0) as usize;
    (0..=n)
        .map(|k| {
            let s = s0 + (s1 - s0) * k as f64 / n as f64;
            centerline(kappa, s).apply([0.0, lateral])
        })
        .collect()
}

fn count_in(rng: &mut ChaCha8Rng, (lo, hi): (usize, usize)) -> usize {
    rng.random_range(lo..=hi)
}

pub fn generate_world(cfg: &SceneConfig) -> Result<World> {
    cfg.validate()?;
    let mut rng = rng_for(cfg.seed, STREAM_LAYOUT);
    let kappa = if cfg.ego_step > 0.0 {
        cfg.yaw_rate / cfg.ego_step
    } else {
        0.0
    };
    let s_last = cfg.ego_step * (cfg.n_frames - 1) as f64;
    let margin = cfg.range_x / 2.0 + 10.0;
    let (s0, s1) = (-margin, s_last + margin);

    let n_div = count_in(&mut rng, cfg.dividers);
    let n_cross = count_in(&mut rng, cfg.crossings);
    let n_bound = count_in(&mut rng, cfg.boundaries);
    let lanes = n_div + 1;
    let half_width = lanes as f64 * cfg.lane_width / 2.0;
    // Ego drives in the middle of a random lane.
    let ego_lane = rng.random_range(0..lanes);
    let road_center = half_width - (ego_lane as f64 + 0.5) * cfg.lane_width;

    let mut instances = Vec::new();
    for d in 1..=n_div {
        let lat = road_center - half_width + d as f64 * cfg.lane_width;
        instances.push(PolyInstance::new(Category::Divider, offset_curve(kappa, s0, s1, lat), false)?);
    }
    for b in 0..n_bound {
        let ring = (b / 2) as f64 * 1.5;
        let lat = if b % 2 == 0 {
            road_center + half_width + ring
        } else {
            road_center - half_width - ring
        };
        instances.push(PolyInstance::new(Category::Boundary, offset_curve(kappa, s0, s1, lat), false)?);
    }
    for _ in 0..n_cross {
        let s = rng.random_range(-cfg.range_x / 4.0..=s_last + cfg.range_x / 4.0);
        let (a, b) = (s - CROSSING_DEPTH / 2.0, s + CROSSING_DEPTH / 2.0);
        let (l, r) = (road_center + half_width, road_center - half_width);
        let pts = vec![
            centerline(kappa, a).apply([0.0, r]),
            centerline(kappa, b).apply([0.0, r]),
            centerline(kappa, b).apply([0.0, l]),
            centerline(kappa, a).apply([0.0, l]),
        ];
        instances.push(PolyInstance::new(Category::PedestrianCrossing, pts, true)?);
    }

    let poses = (0..cfg.n_frames)
        .map(|k| centerline(kappa, cfg.ego_step * k as f64))
        .collect();
    Ok(World { instances, poses })
}

/// Expresses world instances in the frame of `pose`, restricted to `extent`.
/// Open polylines are clipped; closed shapes are kept only when entirely
/// inside.
pub fn observe(world: &[PolyInstance], pose: &Pose2, extent: &Extent) -> Vec<PolyInstance> {
    let to_ego = pose.inverse();
    let mut out = Vec::new();
    for inst in world {
        let local = inst.transformed(&to_ego);
        if local.closed {
            if local.points.iter().all(|p| extent.contains(*p)) {
                out.push(local);
            }
            continue;
        }
        for piece in extent.clip_polyline(&local.points, false) {
            if polyline_length(&piece, false) >= MIN_PIECE_LENGTH {
                out.push(PolyInstance {
                    points: piece,
                    ..local.clone()
                });
            }
        }
    }
    out
}

/// Ground-truth local maps for every frame of the scene.
pub fn generate_scene(cfg: &SceneConfig) -> Result<Vec<LocalVectorMap>> {
    let world = generate_world(cfg)?;
    let extent = cfg.extent();
    Ok(world
        .poses
        .iter()
        .enumerate()
        .map(|(k, pose)| LocalVectorMap {
            frame_id: k as i64,
            timestamp: k as f64 * cfg.frame_interval,
            ego_pose: *pose,
            instances: observe(&world.instances, pose, &extent),
        })
        .collect())
}

fn probs_for(category: Category, score: f64) -> ClassProbs {
    let rest = (1.0 - score) / 3.0;
    let mut p = [rest; 3];
    p[category.index()] = score;
    p
}

fn random_false_positive(rng: &mut ChaCha8Rng, extent: &Extent) -> PolyInstance {
    let category = Category::ALL[rng.random_range(0..Category::COUNT)];
    let score = rng.random_range(0.0..0.6);
    let cx = rng.random_range(extent.x_min + 5.0..extent.x_max - 5.0);
    let cy = rng.random_range(extent.y_min + 3.0..extent.y_max - 3.0);
    let heading = rng.random_range(-PI..PI);
    let len = rng.random_range(3.0..10.0);
    let place = Pose2::new(cx, cy, heading);
    let (points, closed) = if category == Category::PedestrianCrossing {
        let w = rng.random_range(2.0..5.0);
        let pts = [[-len / 2.0, -w / 2.0], [len / 2.0, -w / 2.0], [len / 2.0, w / 2.0], [-len / 2.0, w / 2.0]];
        (pts.iter().map(|p| place.apply(*p)).collect(), true)
    } else {
        let n = 6;
        let pts = (0..n).map(|k| place.apply([len * (k as f64 / (n - 1) as f64 - 0.5), 0.0]));
        (pts.collect(), false)
    };
    PolyInstance {
        category,
        closed,
        score: Some(score),
        class_probs: Some(probs_for(category, score)),
        points,
    }
}

/// Noisy detections of a ground-truth frame: jittered points, dropped
/// instances, injected false positives and perturbed scores.
pub fn simulate_predictions(gt: &LocalVectorMap, noise: &NoiseConfig, seed: u64) -> Result<LocalVectorMap> {
    noise.validate()?;
    let mut rng = rng_for(seed, frame_stream(STREAM_PRED, gt.frame_id));
    let extent = Extent::centered(crate::defaults::RANGE_X, crate::defaults::RANGE_Y);
    let mut out = LocalVectorMap {
        instances: Vec::with_capacity(gt.instances.len()),
        ..gt.clone()
    };
    for inst in &gt.instances {
        // Draw every variate regardless of the outcome so that streams stay
        // aligned across noise settings.
        let drop_draw: f64 = rng.random();
        let fp_draw: f64 = rng.random();
        let score_draw = normal(&mut rng).abs();
        let points: Vec<Point> = inst
            .points
            .iter()
            .map(|p| {
                let dx = normal(&mut rng);
                let dy = normal(&mut rng);
                [p[0] + noise.point_sigma * dx, p[1] + noise.point_sigma * dy]
            })
            .collect();
        let fp = random_false_positive(&mut rng, &extent);

        if drop_draw >= noise.drop_prob {
            let score = (1.0 - noise.score_noise * score_draw).clamp(0.0, 1.0);
            out.instances.push(PolyInstance {
                category: inst.category,
                closed: inst.closed,
                score: Some(score),
                class_probs: Some(probs_for(inst.category, score)),
                points,
            });
        }
        if fp_draw < noise.fp_rate {
            out.instances.push(fp);
        }
    }
    Ok(out)
}

pub fn simulate_sequence(gts: &[LocalVectorMap], noise: &NoiseConfig, seed: u64) -> Result<Vec<LocalVectorMap>> {
    gts.iter().map(|g| simulate_predictions(g, noise, seed)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbeddingConfig {
    pub dim: usize,
    /// Distance between the cluster means of any two categories.
    pub separation: f64,
    /// Per-dimension spread inside a cluster.
    pub sigma: f64,
    pub seed: u64,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        Self {
            dim: 8,
            separation: 4.0,
            sigma: 0.3,
            seed: 0,
        }
    }
}

impl EmbeddingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim < 2 {
            return invalid_config("embedding dimension must be >= 2");
        }
        if !(self.separation >= 0.0 && self.sigma >= 0.0) {
            return invalid_config("separation and sigma must be >= 0");
        }
        Ok(())
    }

    /// Cluster mean of a category: three points on a circle in the first two
    /// dimensions, pairwise `separation` apart.
    pub fn category_mean(&self, category: Category) -> Vec<f64> {
        let r = self.separation / 3f64.sqrt();
        let th = 2.0 * PI * category.index() as f64 / Category::COUNT as f64;
        let mut m = vec![0.0; self.dim];
        m[0] = r * th.cos();
        m[1] = r * th.sin();
        m
    }
}

/// One embedding per instance, drawn around its category mean.
pub fn generate_embeddings(map: &LocalVectorMap, cfg: &EmbeddingConfig) -> Result<Vec<InstanceEmbedding>> {
    cfg.validate()?;
    let mut rng = rng_for(cfg.seed, frame_stream(STREAM_EMB, map.frame_id));
    Ok(map
        .instances
        .iter()
        .map(|inst| {
            let mut feature = cfg.category_mean(inst.category);
            for f in feature.iter_mut() {
                *f += cfg.sigma * normal(&mut rng);
            }
            InstanceEmbedding {
                feature,
                category: inst.category,
                score: inst.confidence(),
                bbox: bbox_of(inst),
            }
        })
        .collect())
}

/// `per_instance` embeddings for every instance: each instance gets its own
/// mean (category mean plus an offset) and its points scatter around it.
pub fn generate_point_embeddings(
    map: &LocalVectorMap,
    cfg: &EmbeddingConfig,
    per_instance: usize,
) -> Result<Vec<Vec<Vec<f64>>>> {
    cfg.validate()?;
    let mut rng = rng_for(cfg.seed, frame_stream(STREAM_POINT_EMB, map.frame_id));
    Ok(map
        .instances
        .iter()
        .map(|inst| {
            let mut center = cfg.category_mean(inst.category);
            for c in center.iter_mut() {
                *c += cfg.separation / 4.0 * normal(&mut rng);
            }
            (0..per_instance)
                .map(|_| center.iter().map(|c| c + cfg.sigma * normal(&mut rng)).collect())
                .collect()
        })
        .collect())
}
