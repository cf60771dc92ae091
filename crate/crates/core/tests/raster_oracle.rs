use mapcons::geometry::point_segment_distance;
use mapcons::map::{Category, PolyInstance};
use mapcons::raster::{rasterize_instance, rasterize_instances, rasterize_map, RasterConfig};
use mapcons::synth::{generate_scene, SceneConfig};
use mapcons::{GridMap, GridSpec, Point};
use proptest::prelude::*;

/// Cells whose center is within the stroke radius of any segment, by an
/// exhaustive scan of every cell against every segment.
fn oracle_count(instances: &[PolyInstance], spec: GridSpec, radius: f64) -> (usize, Vec<bool>) {
    let segs: Vec<(Point, Point)> = instances
        .iter()
        .flat_map(|inst| {
            let n = inst.points.len();
            let m = if inst.closed { n } else { n - 1 };
            (0..m).map(move |i| (inst.points[i], inst.points[(i + 1) % n]))
        })
        .collect();
    let mut hit = vec![false; spec.len()];
    for row in 0..spec.height {
        for col in 0..spec.width {
            let c = [
                spec.x_min + (col as f64 + 0.5) * spec.resolution,
                spec.y_min + (row as f64 + 0.5) * spec.resolution,
            ];
            hit[col + row * spec.width] = segs.iter().any(|(a, b)| point_segment_distance(c, *a, *b) <= radius + 1e-9);
        }
    }
    (hit.iter().filter(|&&h| h).count(), hit)
}

#[test]
fn ground_truth_frame_matches_cell_oracle() {
    let frames = generate_scene(&SceneConfig::default()).unwrap();
    let cfg = RasterConfig::default();
    assert_eq!((cfg.grid.width, cfg.grid.height), (400, 200));
    let g = rasterize_map(&frames[2], &cfg).unwrap();
    let (count, hit) = oracle_count(&frames[2].instances, cfg.grid, cfg.stroke_radius());
    assert!(count > 0);
    assert_eq!(g.occupied_count(0.5), count);
    for (v, h) in g.values.iter().zip(&hit) {
        assert_eq!(*v == 1.0, *h);
    }
}

#[test]
fn disjoint_instances_add_up() {
    let cfg = RasterConfig::default();
    let a = PolyInstance::new(Category::Divider, vec![[-20.0, -5.0], [-5.0, -4.0]], false).unwrap();
    let b = PolyInstance::new(Category::Boundary, vec![[5.0, 6.0], [20.0, 8.0], [25.0, 12.0]], false).unwrap();
    let ga = rasterize_instance(&a, &cfg).unwrap();
    let gb = rasterize_instance(&b, &cfg).unwrap();
    let both = rasterize_instances([&a, &b], &cfg).unwrap();
    for i in 0..both.values.len() {
        assert_eq!(both.values[i], ga.values[i] + gb.values[i]);
    }
}

fn dyadic_points(n: usize) -> impl Strategy<Value = Vec<Point>> {
    // Multiples of 1/64 m inside the inner part of the grid.
    prop::collection::vec((-256i32..256, -128i32..128), n)
        .prop_map(|v| v.into_iter().map(|(x, y)| [x as f64 / 64.0, y as f64 / 64.0]).collect())
}

fn spec() -> GridSpec {
    GridSpec::centered(160, 80, 0.125)
}

proptest! {
    #[test]
    fn shift_by_whole_cells_shifts_cells(pts in dyadic_points(4), dc in -8i32..8, dr in -8i32..8) {
        prop_assume!(pts.windows(2).all(|w| w[0] != w[1]));
        let cfg = RasterConfig { grid: spec(), ..Default::default() };
        let inst = PolyInstance::new(Category::Divider, pts.clone(), false).unwrap();
        let moved: Vec<Point> = pts.iter().map(|p| [p[0] + dc as f64 * 0.125, p[1] + dr as f64 * 0.125]).collect();
        let inst2 = PolyInstance::new(Category::Divider, moved, false).unwrap();
        let a = rasterize_instance(&inst, &cfg).unwrap();
        let b = rasterize_instance(&inst2, &cfg).unwrap();
        let s = cfg.grid;
        for row in 0..s.height as i32 {
            for col in 0..s.width as i32 {
                let (c2, r2) = (col + dc, row + dr);
                if c2 < 0 || r2 < 0 || c2 >= s.width as i32 || r2 >= s.height as i32 {
                    continue;
                }
                prop_assert_eq!(a.get(col as usize, row as usize), b.get(c2 as usize, r2 as usize));
            }
        }
    }

    #[test]
    fn adding_an_instance_never_clears(first in dyadic_points(3), second in dyadic_points(3)) {
        prop_assume!(first.windows(2).all(|w| w[0] != w[1]) && second.windows(2).all(|w| w[0] != w[1]));
        let cfg = RasterConfig { grid: spec(), ..Default::default() };
        let a = PolyInstance::new(Category::Divider, first, false).unwrap();
        let b = PolyInstance::new(Category::Boundary, second, false).unwrap();
        let one = rasterize_instances([&a], &cfg).unwrap();
        let two = rasterize_instances([&a, &b], &cfg).unwrap();
        for (x, y) in one.values.iter().zip(&two.values) {
            prop_assert!(*x == 0.0 || *x == 1.0);
            prop_assert!(y >= x);
        }
    }
}

#[test]
fn empty_grid_has_no_cells() {
    let g: GridMap = rasterize_instances(std::iter::empty(), &RasterConfig::default()).unwrap();
    assert!(g.values.iter().all(|&v| v == 0.0));
}
