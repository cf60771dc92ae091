//! Run configuration: every tunable of every subcommand, loaded from JSON.
//! Missing fields fall back to the library defaults.

use std::path::Path;

use mapcons::contrastive::ContrastiveConfig;
use mapcons::defaults;
use mapcons::gradcheck::GradCheckConfig;
use mapcons::losses::{FocalParams, Margins};
use mapcons::raster::RasterConfig;
use mapcons::synth::{EmbeddingConfig, SceneConfig};
use mapcons::{EvalConfig, GridSpec, LossWeights, MatchConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::files::read_json;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub eval: EvalConfig,
    pub raster: RasterConfig,
    pub matching: MatchConfig,
    pub focal: FocalParams,
    pub margins: Margins,
    pub weights: LossWeights,
    pub contrastive: ContrastiveConfig,
    /// History frames compared by the occupancy consistency term.
    pub temporal_window: usize,
    pub scene: SceneConfig,
    pub embedding: EmbeddingConfig,
    /// Per-instance embeddings fed to the discriminative terms.
    pub point_embeddings: usize,
    pub gradcheck: GradCheckConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            eval: EvalConfig::default(),
            raster: RasterConfig::default(),
            matching: MatchConfig::default(),
            focal: FocalParams::default(),
            margins: Margins::default(),
            weights: LossWeights::default(),
            contrastive: ContrastiveConfig::default(),
            temporal_window: defaults::TEMPORAL_WINDOW,
            scene: SceneConfig::default(),
            embedding: EmbeddingConfig::default(),
            point_embeddings: 8,
            gradcheck: GradCheckConfig::default(),
        }
    }
}

/// Command-line overrides shared by all subcommands.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub threshold: Option<f64>,
    pub resolution: Option<f64>,
    pub grid: Option<(usize, usize)>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> CliResult<Self> {
        let mut cfg = match path {
            Some(p) => read_json(p)?,
            None => RunConfig::default(),
        };
        cfg.apply(overrides);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            self.scene.seed = seed;
            self.embedding.seed = seed;
            self.gradcheck.seed = seed;
        }
        if let Some(t) = o.threshold {
            self.raster.threshold = t;
        }
        if o.grid.is_some() || o.resolution.is_some() {
            let (w, h) = o.grid.unwrap_or((self.raster.grid.width, self.raster.grid.height));
            let res = o.resolution.unwrap_or(self.raster.grid.resolution);
            self.raster.grid = GridSpec::centered(w, h, res);
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        self.eval.validate()?;
        self.raster.validate()?;
        self.matching.validate()?;
        self.weights.validate()?;
        self.scene.validate()?;
        self.embedding.validate()?;
        if self.temporal_window == 0 {
            return Err(CliError::Validation("temporal_window must be >= 1".into()));
        }
        if self.point_embeddings == 0 {
            return Err(CliError::Validation("point_embeddings must be >= 1".into()));
        }
        Ok(())
    }
}

/// Parses `WxH`, e.g. `400x200`.
pub fn parse_grid(s: &str) -> Result<(usize, usize), String> {
    let (w, h) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected WxH, got `{s}`"))?;
    let w: usize = w.trim().parse().map_err(|_| format!("bad width in `{s}`"))?;
    let h: usize = h.trim().parse().map_err(|_| format!("bad height in `{s}`"))?;
    if w == 0 || h == 0 {
        return Err(format!("grid dimensions must be positive, got `{s}`"));
    }
    Ok((w, h))
}
