use mapcons::preselect::{
    build_point_queries, encode_positions, flat_indices, gather_features, topk_coords, FeatureField, ScoreMap,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn sort_all(scores: &[f64], width: usize, height: usize, k: usize) -> Vec<[f64; 2]> {
    let mut cells: Vec<(f64, usize)> = scores.iter().copied().zip(0..).collect();
    // Stable sort keeps the lower index first among equal scores.
    cells.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    cells[..k]
        .iter()
        .map(|&(_, i)| [(i % width) as f64 / width as f64, (i / width) as f64 / height as f64])
        .collect()
}

#[test]
fn topk_matches_full_sort() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..50 {
        let (w, h) = (rng.random_range(1..12), rng.random_range(1..12));
        // Coarse values force plenty of ties.
        let scores: Vec<f64> = (0..w * h).map(|_| rng.random_range(0..6) as f64 / 5.0).collect();
        let k = rng.random_range(0..=(w * h).min(5));
        assert_eq!(topk_coords(&scores, w, h, k).unwrap(), sort_all(&scores, w, h, k));
    }
}

proptest! {
    #[test]
    fn topk_order_and_coverage(
        scores in prop::collection::vec(0.0f64..1.0, 48),
        k in 0usize..=48,
    ) {
        let (w, h) = (8, 6);
        let sel = topk_coords(&scores, w, h, k).unwrap();
        let idx = flat_indices(&sel, w, h).unwrap().indices;
        let picked: Vec<f64> = idx.iter().map(|&i| scores[i]).collect();
        prop_assert!(picked.windows(2).all(|p| p[0] >= p[1]));
        if let Some(&kth) = picked.last() {
            for (i, s) in scores.iter().enumerate() {
                if !idx.contains(&i) {
                    prop_assert!(kth >= *s);
                }
            }
        }
        for c in &sel {
            prop_assert!((0.0..=1.0).contains(&c[0]) && (0.0..=1.0).contains(&c[1]));
        }
    }

    #[test]
    fn flat_index_inverts_cell_coordinates(w in 1usize..300, h in 1usize..300, a in 0usize..300, b in 0usize..300) {
        let (col, row) = (a % w, b % h);
        let corner = [col as f64 / w as f64, row as f64 / h as f64];
        let center = [(col as f64 + 0.5) / w as f64, (row as f64 + 0.5) / h as f64];
        let f = flat_indices(&[corner, center], w, h).unwrap();
        prop_assert_eq!(f.indices, vec![col + row * w; 2]);
        prop_assert_eq!(f.clamped, 0);
    }
}

#[test]
fn gather_matches_scalar_lookup() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let (h, w, d) = (7, 9, 5);
    let values: Vec<f64> = (0..h * w * d).map(|_| rng.random()).collect();
    let field = FeatureField::new(h, w, d, values.clone()).unwrap();
    let idx: Vec<usize> = (0..40).map(|_| rng.random_range(0..h * w)).collect();
    let got = gather_features(&field, &idx).unwrap();
    for (r, &i) in idx.iter().enumerate() {
        for k in 0..d {
            assert_eq!(got[r][k], values[i * d + k]);
        }
    }
}

#[test]
fn encoding_preserves_nearest_cell() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let n = 16;
    let cells: Vec<[f64; 2]> = (0..n * n)
        .map(|i| [(i % n) as f64 / n as f64, (i / n) as f64 / n as f64])
        .collect();
    let dim = 16;
    let enc = encode_positions(&cells, dim).unwrap();
    let sq = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
    for _ in 0..100 {
        let q = [rng.random_range(0.0..(n - 1) as f64 / n as f64), rng.random_range(0.0..(n - 1) as f64 / n as f64)];
        let truth = (0..cells.len())
            .min_by(|&a, &b| sq(&cells[a], &q).partial_cmp(&sq(&cells[b], &q)).unwrap())
            .unwrap();
        let eq = &encode_positions(&[q], dim).unwrap()[0];
        let found = (0..cells.len())
            .min_by(|&a, &b| sq(&enc[a], eq).partial_cmp(&sq(&enc[b], eq)).unwrap())
            .unwrap();
        assert_eq!(found, truth, "query {q:?}");
    }
}

#[test]
fn queries_equal_composed_steps() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    let (c, h, w, d, k) = (3, 10, 20, 8, 6);
    let scores: Vec<f64> = (0..c * h * w).map(|_| rng.random()).collect();
    let feats: Vec<f64> = (0..h * w * d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let sm = ScoreMap::new(c, h, w, scores.clone()).unwrap();
    let field = FeatureField::new(h, w, d, feats.clone()).unwrap();
    let q = build_point_queries(&sm, &field, k).unwrap();
    for ch in 0..c {
        let channel = &scores[ch * h * w..(ch + 1) * h * w];
        let sel = sort_all(channel, w, h, k);
        let enc = encode_positions(&sel, d).unwrap();
        for (p, coord) in sel.iter().enumerate() {
            assert_eq!(q.coord(ch, p), *coord);
            let col = (coord[0] * w as f64).round() as usize;
            let row = (coord[1] * h as f64).round() as usize;
            let i = col + row * w;
            for j in 0..d {
                assert!((q.feature(ch, p)[j] - (feats[i * d + j] + enc[p][j])).abs() < 1e-15);
            }
        }
    }
}
