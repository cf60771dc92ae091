use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::commands::{self, CommandOutput};
use crate::config::{parse_grid, Overrides, RunConfig};
use crate::error::CliResult;

#[derive(Debug, Parser)]
#[command(name = "mapcons", version, about = "Vector map matching, losses, rasterization and evaluation")]
pub struct Cli {
    /// JSON run configuration; omitted fields take the defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output file (or directory for `simulate`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Minimum instance confidence to rasterize.
    #[arg(long, global = true)]
    pub threshold: Option<f64>,
    /// Grid cell size in meters.
    #[arg(long, global = true)]
    pub resolution: Option<f64>,
    /// Grid size in cells, as WxH.
    #[arg(long, global = true, value_parser = parse_grid)]
    pub grid: Option<(usize, usize)>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Chamfer-distance AP of predictions against ground truth.
    Evaluate {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
    },
    /// Rasterize one frame of a map file into a grid.
    Rasterize {
        #[arg(long)]
        map: PathBuf,
        #[arg(long, default_value_t = 0)]
        frame: usize,
    },
    /// Rasterize every frame and merge them into one frame.
    Merge {
        #[arg(long)]
        sequence: PathBuf,
        /// Frame index to merge into; defaults to the last frame.
        #[arg(long)]
        target_frame: Option<usize>,
    },
    /// Every training loss term and their weighted sum.
    Losses {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
    },
    /// Write a synthetic ground-truth sequence and noisy predictions.
    Simulate {
        /// Point jitter in meters, overriding the configuration.
        #[arg(long)]
        sigma: Option<f64>,
    },
    /// Compare analytic gradients with finite differences.
    GradCheck {
        /// Scale analytic gradients by this factor (negative control).
        #[arg(long)]
        corrupt: Option<f64>,
        /// Plant exact ties in the occupancy grids.
        #[arg(long)]
        with_ties: bool,
    },
}

impl Cli {
    pub fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            threshold: self.threshold,
            resolution: self.resolution,
            grid: self.grid,
        }
    }
}

pub fn run(cli: &Cli) -> CliResult<CommandOutput> {
    let mut cfg = RunConfig::load(cli.config.as_deref(), &cli.overrides())?;
    let out = cli.out.as_deref();
    match &cli.command {
        Command::Evaluate { pred, gt } => commands::evaluate(pred, gt, &cfg, out),
        Command::Rasterize { map, frame } => commands::rasterize(map, *frame, &cfg, out),
        Command::Merge { sequence, target_frame } => commands::merge(sequence, *target_frame, &cfg, out),
        Command::Losses { pred, gt } => commands::losses(pred, gt, &cfg, out),
        Command::Simulate { sigma } => {
            if let Some(s) = sigma {
                cfg.scene.noise.point_sigma = *s;
                cfg.validate()?;
            }
            commands::simulate(&cfg, out)
        }
        Command::GradCheck { corrupt, with_ties } => {
            if let Some(c) = corrupt {
                cfg.gradcheck.corrupt = *c;
            }
            cfg.gradcheck.with_ties |= *with_ties;
            commands::grad_check(&cfg, out)
        }
    }
}
