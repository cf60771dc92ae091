use std::path::Path;

use mapcons::map::{Category, PolyInstance};
use mapcons::raster::rasterize_map;
use mapcons::synth::{generate_scene, simulate_sequence, NoiseConfig, SceneConfig};
use mapcons::temporal::merge_grids;
use mapcons::{evaluate, EvalConfig, GridMap, LocalVectorMap, Pose2};
use mapcons_cli::commands::{self, compute_losses, simulate_frames};
use mapcons_cli::config::RunConfig;
use mapcons_cli::files::{read_map, to_json, write_map};
use mapcons_cli::pgm::read_grid;

fn scene(seed: u64, sigma: f64) -> (Vec<LocalVectorMap>, Vec<LocalVectorMap>) {
    let cfg = SceneConfig {
        seed,
        noise: NoiseConfig { point_sigma: sigma, ..Default::default() },
        ..Default::default()
    };
    let gts = generate_scene(&cfg).unwrap();
    let preds = simulate_sequence(&gts, &cfg.noise, seed).unwrap();
    (gts, preds)
}

#[test]
fn evaluate_report_is_byte_identical_to_library() {
    let dir = tempfile::tempdir().unwrap();
    let (gts, preds) = scene(4, 0.2);
    let (gp, pp, out) = (dir.path().join("gt.json"), dir.path().join("pred.json"), dir.path().join("r.json"));
    write_map(&gp, &gts).unwrap();
    write_map(&pp, &preds).unwrap();
    let cfg = RunConfig::default();
    let printed = commands::evaluate(&pp, &gp, &cfg, Some(&out)).unwrap();
    let lib = evaluate(&preds, &gts, &EvalConfig::default()).unwrap();
    assert_eq!(std::fs::read_to_string(&out).unwrap(), to_json(&lib));
    assert_eq!(printed.text, commands::render_report(&lib));

    let own = commands::evaluate(&gp, &gp, &cfg, None).unwrap();
    assert!(own.text.contains("mAP 1.000"), "{}", own.text);
}

#[test]
fn map_files_round_trip_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let (_, preds) = scene(6, 0.5);
    let p = dir.path().join("m.json");
    write_map(&p, &preds).unwrap();
    assert_eq!(read_map(&p).unwrap().frames, preds);
}

#[test]
fn loss_report_matches_library_composition() {
    let dir = tempfile::tempdir().unwrap();
    let (gts, preds) = scene(2, 0.2);
    let (gp, pp, out) = (dir.path().join("gt.json"), dir.path().join("pred.json"), dir.path().join("l.json"));
    write_map(&gp, &gts).unwrap();
    write_map(&pp, &preds).unwrap();
    let cfg = RunConfig::default();
    commands::losses(&pp, &gp, &cfg, Some(&out)).unwrap();
    let lib = compute_losses(&preds, &gts, &cfg).unwrap();
    assert_eq!(std::fs::read_to_string(&out).unwrap(), to_json(&lib));
    let w = [2.0, 5.0, 0.005, 0.1, 1.0, 1.0, 0.1];
    let dot: f64 = lib.parts.as_array().iter().zip(w).map(|(a, b)| a * b).sum();
    assert!((lib.total - dot).abs() <= 1e-12 * dot.abs().max(1.0));

    // Ground truth scored against itself: no classification or geometric error.
    let own = compute_losses(&gts, &gts, &cfg).unwrap();
    assert_eq!((own.parts.cls, own.parts.pts), (0.0, 0.0));
    assert!(own.parts.dirs.abs() < 1e-12);
    let text = commands::render_losses(&own);
    assert!(text.starts_with("weights cls=2 pts=5 dirs=0.005 cst=0.1 ol=1 var=1 dist=0.1\n"), "{text}");
}

#[test]
fn rasterized_grid_reads_back_equal() {
    let dir = tempfile::tempdir().unwrap();
    let (gts, _) = scene(1, 0.0);
    let mp = dir.path().join("gt.json");
    write_map(&mp, &gts).unwrap();
    let out = dir.path().join("g.pgm");
    let cfg = RunConfig::default();
    commands::rasterize(&mp, 2, &cfg, Some(&out)).unwrap();
    let (grid, pose) = read_grid(&out).unwrap();
    assert_eq!(grid, rasterize_map(&gts[2], &cfg.raster).unwrap());
    assert_eq!(pose, gts[2].ego_pose);
}

#[test]
fn rasterize_respects_threshold_and_empty_maps() {
    let dir = tempfile::tempdir().unwrap();
    let mut frame = LocalVectorMap::new(0, 0.0, Pose2::identity());
    frame.instances.push(
        PolyInstance::new(Category::Divider, vec![[0.0, 0.0], [5.0, 0.0]], false)
            .unwrap()
            .with_score(0.39),
    );
    let mp = dir.path().join("m.json");
    write_map(&mp, &[frame.clone(), LocalVectorMap::new(1, 0.5, Pose2::identity())]).unwrap();
    let out = dir.path().join("g.pgm");
    let cfg = RunConfig::default();
    for index in [0, 1] {
        commands::rasterize(&mp, index, &cfg, Some(&out)).unwrap();
        let (grid, _) = read_grid(&out).unwrap();
        assert!(grid.values.iter().all(|&v| v == 0.0));
    }
    frame.instances[0].score = Some(0.4);
    write_map(&mp, &[frame]).unwrap();
    commands::rasterize(&mp, 0, &cfg, Some(&out)).unwrap();
    assert!(read_grid(&out).unwrap().0.occupied_count(0.5) > 0);
}

#[test]
fn merge_matches_library_and_handles_trivial_cases() {
    let dir = tempfile::tempdir().unwrap();
    let (gts, _) = scene(3, 0.0);
    let sp = dir.path().join("seq.json");
    write_map(&sp, &gts).unwrap();
    let out = dir.path().join("m.pgm");
    let cfg = RunConfig::default();
    commands::merge(&sp, None, &cfg, Some(&out)).unwrap();
    let seq: Vec<(GridMap, Pose2)> = gts
        .iter()
        .map(|f| (rasterize_map(f, &cfg.raster).unwrap(), f.ego_pose))
        .collect();
    let lib = merge_grids(&seq, &gts[4].ego_pose).unwrap();
    let (grid, _) = read_grid(&out).unwrap();
    for (a, b) in grid.values.iter().zip(&lib.values) {
        assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12);
    }

    // One frame merged into itself is that frame's raster.
    write_map(&sp, &gts[..1]).unwrap();
    commands::merge(&sp, Some(0), &cfg, Some(&out)).unwrap();
    assert_eq!(read_grid(&out).unwrap().0, seq[0].0);

    // Frames at the same pose with disjoint content merge to the union.
    let mut a = LocalVectorMap::new(0, 0.0, Pose2::identity());
    a.instances.push(PolyInstance::new(Category::Divider, vec![[-20.0, 5.0], [-5.0, 5.0]], false).unwrap());
    let mut b = LocalVectorMap::new(1, 0.5, Pose2::identity());
    b.instances.push(PolyInstance::new(Category::Boundary, vec![[5.0, -5.0], [20.0, -5.0]], false).unwrap());
    write_map(&sp, &[a.clone(), b.clone()]).unwrap();
    commands::merge(&sp, Some(0), &cfg, Some(&out)).unwrap();
    let ga = rasterize_map(&a, &cfg.raster).unwrap();
    let gb = rasterize_map(&b, &cfg.raster).unwrap();
    let merged = read_grid(&out).unwrap().0;
    for i in 0..merged.values.len() {
        assert_eq!(merged.values[i], ga.values[i].max(gb.values[i]));
    }
}

#[test]
fn simulate_writes_library_frames() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig::default();
    commands::simulate(&cfg, Some(dir.path())).unwrap();
    let (gts, preds) = simulate_frames(&cfg).unwrap();
    assert_eq!(read_map(&dir.path().join("gt.json")).unwrap().frames, gts);
    assert_eq!(read_map(&dir.path().join("pred.json")).unwrap().frames, preds);
    // Shared fixtures are the default simulation.
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures");
    for f in ["gt.json", "pred.json"] {
        assert_eq!(
            std::fs::read(dir.path().join(f)).unwrap(),
            std::fs::read(fixtures.join(f)).unwrap(),
            "{f}"
        );
    }
}
