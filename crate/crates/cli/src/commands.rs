//! Subcommand implementations. Each returns the text printed on stdout and
//! writes its files atomically.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use mapcons::contrastive::{contrastive_loss, mine_terms};
use mapcons::gradcheck::{run_gradcheck, GradCheckReport};
use mapcons::losses::{detection_losses, instance_map_loss};
use mapcons::matching::match_instances;
use mapcons::map::{Category, ClassProbs, InstanceEmbedding};
use mapcons::raster::rasterize_map;
use mapcons::synth::{generate_embeddings, generate_point_embeddings, generate_scene, simulate_sequence};
use mapcons::temporal::{align_grid, common_valid, merge_grids, mo_loss};
use mapcons::{
    evaluate as evaluate_maps, relative_pose, EvalReport, GridMap, LocalVectorMap, LossParts,
    LossWeights,
};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::files::{read_map, to_json, write_atomic, write_map};
use crate::pgm::write_grid;

/// What a subcommand printed and whether it counts as success.
#[derive(Debug, Clone, PartialEq)]
pub struct CommandOutput {
    pub text: String,
    pub success: bool,
}

impl CommandOutput {
    fn ok(text: String) -> Self {
        Self { text, success: true }
    }
}

fn require_out<'a>(out: Option<&'a Path>, what: &str) -> CliResult<&'a Path> {
    out.ok_or_else(|| CliError::Validation(format!("{what} needs --out <path>")))
}

fn pick_frame<'a>(frames: &'a [LocalVectorMap], index: usize, path: &Path) -> CliResult<&'a LocalVectorMap> {
    frames.get(index).ok_or_else(|| {
        CliError::Validation(format!(
            "{}: frame index {index} out of range ({} frames)",
            path.display(),
            frames.len()
        ))
    })
}

pub fn render_report(report: &EvalReport) -> String {
    let mut s = String::new();
    let _ = write!(s, "{:<20}", "category");
    for t in &report.thresholds {
        let _ = write!(s, "{:>9}", format!("AP@{t:.1}"));
    }
    let _ = writeln!(s, "{:>9}{:>8}{:>8}", "AP", "n_gt", "n_pred");
    for c in &report.categories {
        let _ = write!(s, "{:<20}", c.category.name());
        for t in &c.per_threshold {
            if c.defined {
                let _ = write!(s, "{:>9.3}", t.ap);
            } else {
                let _ = write!(s, "{:>9}", "n/a");
            }
        }
        let ap = if c.defined { format!("{:.3}", c.ap) } else { "n/a".into() };
        let _ = writeln!(s, "{ap:>9}{:>8}{:>8}", c.n_gt, c.n_pred);
    }
    let _ = writeln!(s, "mAP {:.3} ({} frames, {})", report.map, report.frames, report.pooling);
    s
}

pub fn evaluate(pred: &Path, gt: &Path, cfg: &RunConfig, out: Option<&Path>) -> CliResult<CommandOutput> {
    let preds = read_map(pred)?;
    let gts = read_map(gt)?;
    let report = evaluate_maps(&preds.frames, &gts.frames, &cfg.eval)?;
    if let Some(out) = out {
        write_atomic(out, to_json(&report).as_bytes())?;
    }
    Ok(CommandOutput::ok(render_report(&report)))
}

pub fn rasterize(map: &Path, frame: usize, cfg: &RunConfig, out: Option<&Path>) -> CliResult<CommandOutput> {
    let out = require_out(out, "rasterize")?;
    let doc = read_map(map)?;
    let f = pick_frame(&doc.frames, frame, map)?;
    let grid = rasterize_map(f, &cfg.raster)?;
    write_grid(out, &grid, f.ego_pose)?;
    Ok(CommandOutput::ok(format!(
        "frame {} -> {}x{} grid at {} m, {} occupied cells\n",
        f.frame_id,
        grid.spec.width,
        grid.spec.height,
        grid.spec.resolution,
        grid.occupied_count(0.5)
    )))
}

pub fn merge(sequence: &Path, target: Option<usize>, cfg: &RunConfig, out: Option<&Path>) -> CliResult<CommandOutput> {
    let out = require_out(out, "merge")?;
    let doc = read_map(sequence)?;
    if doc.frames.is_empty() {
        return Err(CliError::Validation(format!("{}: no frames to merge", sequence.display())));
    }
    let target = target.unwrap_or(doc.frames.len() - 1);
    let target_frame = pick_frame(&doc.frames, target, sequence)?;
    let seq = doc
        .frames
        .iter()
        .map(|f| Ok((rasterize_map(f, &cfg.raster)?, f.ego_pose)))
        .collect::<CliResult<Vec<(GridMap, _)>>>()?;
    let merged = merge_grids(&seq, &target_frame.ego_pose)?;
    let aligned: Vec<_> = seq.iter().map(|(g, p)| align_grid(g, p, &target_frame.ego_pose)).collect();
    let mask = common_valid(&aligned);
    let iou = mapcons::temporal::masked_iou(&merged.values, &seq[target].0.values, &mask, 0.5);
    write_grid(out, &merged, target_frame.ego_pose)?;
    Ok(CommandOutput::ok(format!(
        "merged {} frames into frame {}: {} occupied cells, IoU vs single frame {:.4} over {} shared cells\n",
        seq.len(),
        target_frame.frame_id,
        merged.occupied_count(0.5),
        iou,
        mask.iter().filter(|&&m| m).count()
    )))
}

/// Class probabilities of a prediction; files without them fall back to a
/// one-hot vector scaled by the instance confidence.
fn probs_of(inst: &mapcons::PolyInstance) -> ClassProbs {
    inst.class_probs.unwrap_or_else(|| {
        let mut p = [0.0; 3];
        p[inst.category.index()] = inst.confidence();
        p
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossDiagnostics {
    pub matched_pairs: usize,
    pub unmatched_predictions: usize,
    pub focal_clamped: usize,
    pub skipped_edges: usize,
    pub contrastive_terms: usize,
    pub anchors_without_positive: usize,
    pub empty_occupancy_terms: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub frames: usize,
    pub weights: LossWeights,
    /// Per-frame means of each term.
    pub parts: LossParts,
    pub total: f64,
    pub diagnostics: LossDiagnostics,
}

fn embeddings_in(frame: &LocalVectorMap, to_current: &mapcons::Pose2, cfg: &RunConfig) -> CliResult<Vec<InstanceEmbedding>> {
    let mut emb = generate_embeddings(frame, &cfg.embedding)?;
    for e in &mut emb {
        e.bbox.center = to_current.apply(e.bbox.center);
    }
    Ok(emb)
}

/// Every loss term over a prediction sequence. The detection terms use the
/// matching against ground truth; the contrastive and discriminative terms
/// use synthetic embeddings drawn from the configured embedding model.
pub fn compute_losses(preds: &[LocalVectorMap], gts: &[LocalVectorMap], cfg: &RunConfig) -> CliResult<LossReport> {
    if preds.len() != gts.len() {
        return Err(CliError::Validation(format!(
            "prediction has {} frames but ground truth has {}",
            preds.len(),
            gts.len()
        )));
    }
    if preds.is_empty() {
        return Err(CliError::Validation("no frames".into()));
    }
    for (p, g) in preds.iter().zip(gts) {
        if p.frame_id != g.frame_id {
            return Err(CliError::Validation(format!(
                "prediction frame {} does not line up with ground truth frame {}",
                p.frame_id, g.frame_id
            )));
        }
    }
    let n = preds.len();
    let mut sum = LossParts::default();
    let mut diag = LossDiagnostics::default();

    for (p, g) in preds.iter().zip(gts) {
        let mut with_probs = p.instances.clone();
        for inst in &mut with_probs {
            inst.class_probs = Some(probs_of(inst));
        }
        let m = match_instances(&with_probs, &g.instances, &cfg.matching)?;
        let probs: Vec<ClassProbs> = with_probs.iter().map(probs_of).collect();
        let cats: Vec<Category> = g.instances.iter().map(|i| i.category).collect();
        let closed: Vec<bool> = g.instances.iter().map(|i| i.closed).collect();
        let d = detection_losses(&probs, &cats, &closed, &m, cfg.focal)?;
        sum.cls += d.cls;
        sum.pts += d.pts;
        sum.dirs += d.dirs;
        diag.matched_pairs += m.pairs.len();
        diag.unmatched_predictions += with_probs.len() - m.pairs.len();
        diag.focal_clamped += d.focal_clamped;
        diag.skipped_edges += d.skipped_edges;

        let pe = generate_point_embeddings(g, &cfg.embedding, cfg.point_embeddings)?;
        let im = instance_map_loss(&pe, cfg.margins)?;
        sum.var += im.var;
        sum.dist += im.dist;
    }

    let grids = preds
        .iter()
        .map(|p| rasterize_map(p, &cfg.raster))
        .collect::<mapcons::Result<Vec<_>>>()?;
    let mut temporal_frames = 0usize;
    for k in 1..n {
        temporal_frames += 1;
        let pose = preds[k].ego_pose;
        let current = embeddings_in(&preds[k], &mapcons::Pose2::identity(), cfg)?;
        let history = embeddings_in(&preds[k - 1], &relative_pose(&pose, &preds[k - 1].ego_pose), cfg)?;
        let terms = mine_terms(&current, &history, &cfg.contrastive);
        diag.contrastive_terms += terms.len();
        diag.anchors_without_positive += terms.iter().filter(|t| t.positive.is_none()).count();
        sum.cst += contrastive_loss(&terms, cfg.contrastive.reduction)?;

        let hist: Vec<_> = (1..=cfg.temporal_window.min(k))
            .map(|j| align_grid(&grids[k - j], &preds[k - j].ego_pose, &pose))
            .collect();
        let mo = mo_loss(&grids[k], &hist)?;
        sum.ol += mo.value;
        diag.empty_occupancy_terms += mo.empty_terms;
    }

    let per_frame = n as f64;
    let per_pair = temporal_frames.max(1) as f64;
    let parts = LossParts {
        cls: sum.cls / per_frame,
        pts: sum.pts / per_frame,
        dirs: sum.dirs / per_frame,
        cst: sum.cst / per_pair,
        ol: sum.ol / per_pair,
        var: sum.var / per_frame,
        dist: sum.dist / per_frame,
    };
    let total = mapcons::losses::combine_losses(&parts, &cfg.weights)?;
    Ok(LossReport {
        frames: n,
        weights: cfg.weights,
        parts,
        total,
        diagnostics: diag,
    })
}

pub fn render_losses(r: &LossReport) -> String {
    let w = r.weights.as_array();
    let v = r.parts.as_array();
    let mut s = String::from("weights");
    for (name, wi) in LossParts::NAMES.iter().zip(w) {
        let _ = write!(s, " {name}={wi}");
    }
    let _ = writeln!(s, "\n{:<6}{:>14}{:>10}{:>14}", "term", "value", "weight", "weighted");
    for ((name, vi), wi) in LossParts::NAMES.iter().zip(v).zip(w) {
        let _ = writeln!(s, "{name:<6}{vi:>14.6}{wi:>10}{:>14.6}", vi * wi);
    }
    let _ = writeln!(s, "{:<6}{:>38.6}", "total", r.total);
    s
}

pub fn losses(pred: &Path, gt: &Path, cfg: &RunConfig, out: Option<&Path>) -> CliResult<CommandOutput> {
    let preds = read_map(pred)?;
    let gts = read_map(gt)?;
    let report = compute_losses(&preds.frames, &gts.frames, cfg)?;
    if let Some(out) = out {
        write_atomic(out, to_json(&report).as_bytes())?;
    }
    Ok(CommandOutput::ok(render_losses(&report)))
}

/// Ground truth and simulated predictions for the configured scene.
pub fn simulate_frames(cfg: &RunConfig) -> CliResult<(Vec<LocalVectorMap>, Vec<LocalVectorMap>)> {
    let gts = generate_scene(&cfg.scene)?;
    let preds = simulate_sequence(&gts, &cfg.scene.noise, cfg.scene.seed)?;
    Ok((gts, preds))
}

pub fn simulate(cfg: &RunConfig, out: Option<&Path>) -> CliResult<CommandOutput> {
    let dir = require_out(out, "simulate")?;
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let (gts, preds) = simulate_frames(cfg)?;
    write_map(&dir.join("gt.json"), &gts)?;
    write_map(&dir.join("pred.json"), &preds)?;
    let n_gt: usize = gts.iter().map(|f| f.instances.len()).sum();
    let n_pred: usize = preds.iter().map(|f| f.instances.len()).sum();
    Ok(CommandOutput::ok(format!(
        "seed {}: {} frames, {n_gt} ground-truth and {n_pred} predicted instances\n",
        cfg.scene.seed,
        gts.len()
    )))
}

pub fn render_gradcheck(r: &GradCheckReport) -> String {
    format!(
        "contrastive  compared {:>6}  max rel error {:.3e}\n\
         occupancy    compared {:>6}  excluded {:>4}  max rel error {:.3e}\n\
         tolerance {:.1e}: {}\n",
        r.contrastive.compared,
        r.contrastive.max_rel_error,
        r.mo.compared,
        r.mo.excluded,
        r.mo.max_rel_error,
        r.tolerance,
        if r.passed { "PASS" } else { "FAIL" }
    )
}

pub fn grad_check(cfg: &RunConfig, out: Option<&Path>) -> CliResult<CommandOutput> {
    let report = run_gradcheck(&cfg.gradcheck)?;
    if let Some(out) = out {
        write_atomic(out, to_json(&report).as_bytes())?;
    }
    Ok(CommandOutput {
        text: render_gradcheck(&report),
        success: report.passed,
    })
}
