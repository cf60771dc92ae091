//! Geometric and numerical core for temporally consistent vectorized HD map
//! learning.
//!
//! The crate covers everything around the neural network: set matching of
//! predicted map elements, the supervised and consistency losses (with exact
//! gradients where they are needed), point preselection from score maps,
//! cross-frame instance contrastive learning, vector-to-grid rasterization,
//! ego-motion alignment and merging of occupancy grids, and Chamfer-distance
//! AP evaluation. [`synth`] provides deterministic scenes to drive all of it.

pub mod contrastive;
pub mod defaults;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod gradcheck;
pub mod grid;
pub mod losses;
pub mod map;
pub mod matching;
pub mod preselect;
pub mod raster;
pub mod synth;
pub mod temporal;

pub use error::{Error, Result};
pub use eval::{evaluate, EvalConfig, EvalReport};
pub use geometry::{relative_pose, transform_points, BBox, Extent, Point, Pose2};
pub use grid::{GridMap, GridSpec};
pub use losses::{LossParts, LossWeights};
pub use map::{bbox_of, Category, ClassProbs, InstanceEmbedding, LocalVectorMap, PolyInstance};
pub use matching::{MatchConfig, MatchResult};
