//! Map element types shared across the crate.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{invalid_input, Result};
use crate::geometry::{resample_points, BBox, Point, Pose2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Divider,
    PedestrianCrossing,
    Boundary,
}

impl Category {
    pub const ALL: [Category; 3] = [
        Category::Divider,
        Category::PedestrianCrossing,
        Category::Boundary,
    ];
    pub const COUNT: usize = 3;

    pub fn index(self) -> usize {
        match self {
            Category::Divider => 0,
            Category::PedestrianCrossing => 1,
            Category::Boundary => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Category> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Category::Divider => "divider",
            Category::PedestrianCrossing => "pedestrian_crossing",
            Category::Boundary => "boundary",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Per-category probabilities of a prediction; the background mass is
/// `1 - sum`.
pub type ClassProbs = [f64; Category::COUNT];

pub fn validate_probs(probs: &ClassProbs) -> Result<()> {
    for (i, p) in probs.iter().enumerate() {
        if !(0.0..=1.0).contains(p) {
            return invalid_input(format!("class probability {i} = {p} is outside [0, 1]"));
        }
    }
    let sum: f64 = probs.iter().sum();
    if sum > 1.0 + 1e-6 {
        return invalid_input(format!("class probabilities sum to {sum} > 1"));
    }
    Ok(())
}

/// One vectorized map element. Closed polygons do not repeat their first point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyInstance {
    pub category: Category,
    #[serde(default)]
    pub closed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_probs: Option<ClassProbs>,
    pub points: Vec<Point>,
}

impl PolyInstance {
    pub fn new(category: Category, points: Vec<Point>, closed: bool) -> Result<Self> {
        let inst = Self {
            category,
            closed,
            score: None,
            class_probs: None,
            points,
        };
        inst.validate()?;
        Ok(inst)
    }

    pub fn with_score(mut self, score: f64) -> Self {
        self.score = Some(score);
        self
    }

    pub fn with_probs(mut self, probs: ClassProbs) -> Self {
        self.class_probs = Some(probs);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.len() < 2 {
            return invalid_input(format!(
                "instance needs at least 2 points, got {}",
                self.points.len()
            ));
        }
        if self.points.iter().flatten().any(|v| !v.is_finite()) {
            return invalid_input("instance has non-finite coordinates");
        }
        if self.closed && self.points.len() > 2 && self.points.first() == self.points.last() {
            return invalid_input("closed instance repeats its first point");
        }
        if let Some(s) = self.score {
            if !(0.0..=1.0).contains(&s) {
                return invalid_input(format!("score {s} is outside [0, 1]"));
            }
        }
        if let Some(p) = &self.class_probs {
            validate_probs(p)?;
        }
        Ok(())
    }

    pub fn resample(&self, n: usize) -> Result<Vec<Point>> {
        resample_points(&self.points, self.closed, n)
    }

    /// Instance-level score: explicit score, else the probability of its own
    /// category, else 1 (ground truth).
    pub fn confidence(&self) -> f64 {
        self.score
            .or_else(|| self.class_probs.map(|p| p[self.category.index()]))
            .unwrap_or(1.0)
    }

    pub fn transformed(&self, pose: &Pose2) -> PolyInstance {
        PolyInstance {
            points: self.points.iter().map(|p| pose.apply(*p)).collect(),
            ..self.clone()
        }
    }
}

pub fn bbox_of(inst: &PolyInstance) -> BBox {
    BBox::from_points(&inst.points).expect("instance has at least one point")
}

/// All map elements observed in one frame, with the ego pose in world frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalVectorMap {
    pub frame_id: i64,
    #[serde(default)]
    pub timestamp: f64,
    pub ego_pose: Pose2,
    #[serde(default)]
    pub instances: Vec<PolyInstance>,
}

impl LocalVectorMap {
    pub fn new(frame_id: i64, timestamp: f64, ego_pose: Pose2) -> Self {
        Self {
            frame_id,
            timestamp,
            ego_pose,
            instances: Vec::new(),
        }
    }

    pub fn of_category(&self, category: Category) -> impl Iterator<Item = &PolyInstance> {
        self.instances.iter().filter(move |i| i.category == category)
    }
}

/// Instance-level feature used by the cross-frame contrastive objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceEmbedding {
    pub feature: Vec<f64>,
    pub category: Category,
    pub score: f64,
    pub bbox: BBox,
}
