use mapcons::eval::{ap_single, chamfer_distance, match_for_eval};
use mapcons::map::{Category, LocalVectorMap, PolyInstance};
use mapcons::synth::{generate_scene, SceneConfig};
use mapcons::{evaluate, EvalConfig, Point, Pose2};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn cloud(n: usize) -> impl Strategy<Value = Vec<Point>> {
    prop::collection::vec(prop::array::uniform2(-10.0f64..10.0), n)
}

proptest! {
    #[test]
    fn chamfer_matches_double_loop_and_is_symmetric(a in (1usize..50).prop_flat_map(cloud), b in (1usize..50).prop_flat_map(cloud)) {
        let mut ab = 0.0;
        for p in &a {
            let mut best = f64::INFINITY;
            for q in &b {
                best = best.min(((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt());
            }
            ab += best;
        }
        let mut ba = 0.0;
        for q in &b {
            let mut best = f64::INFINITY;
            for p in &a {
                best = best.min(((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt());
            }
            ba += best;
        }
        let want = 0.5 * (ab / a.len() as f64 + ba / b.len() as f64);
        let got = chamfer_distance(&a, &b).unwrap();
        prop_assert!((got - want).abs() <= 1e-12);
        prop_assert!((got - chamfer_distance(&b, &a).unwrap()).abs() <= 1e-12);
    }

    #[test]
    fn ap_invariant_to_reordering(flags in prop::collection::vec(any::<bool>(), 1..20), extra in 0usize..5, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scores: Vec<f64> = (0..flags.len()).map(|_| rng.random()).collect();
        let n_gt = flags.iter().filter(|&&f| f).count() + extra;
        let a = ap_single(&scores, &flags, n_gt);
        let mut perm: Vec<usize> = (0..flags.len()).collect();
        for i in (1..perm.len()).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        let s2: Vec<f64> = perm.iter().map(|&i| scores[i]).collect();
        let f2: Vec<bool> = perm.iter().map(|&i| flags[i]).collect();
        let b = ap_single(&s2, &f2, n_gt);
        prop_assert_eq!(a.ap, b.ap);
        prop_assert!((0.0..=1.0).contains(&a.ap));
    }
}

/// Among all one-to-one partial matchings, the one consistent with processing
/// predictions by descending score: every prediction takes its nearest
/// still-free gt when that is within the threshold.
fn exhaustive_match(scores: &[f64], cd: &[Vec<f64>], n_gt: usize, t: f64) -> Vec<bool> {
    let n = scores.len();
    let mut consistent = Vec::new();
    // assignment[i] = None or Some(gt)
    let total = (n_gt + 1).pow(n as u32);
    for code in 0..total {
        let mut c = code;
        let asg: Vec<Option<usize>> = (0..n)
            .map(|_| {
                let v = c % (n_gt + 1);
                c /= n_gt + 1;
                (v > 0).then(|| v - 1)
            })
            .collect();
        let mut used = vec![false; n_gt];
        if asg.iter().flatten().any(|&g| std::mem::replace(&mut used[g], true)) {
            continue;
        }
        let ok = (0..n).all(|i| {
            let free: Vec<usize> = (0..n_gt)
                .filter(|&g| !asg.iter().enumerate().any(|(j, a)| *a == Some(g) && scores[j] > scores[i]))
                .collect();
            let nearest = free.iter().copied().min_by(|&a, &b| cd[i][a].partial_cmp(&cd[i][b]).unwrap());
            match (asg[i], nearest) {
                (Some(g), Some(near)) => g == near && cd[i][g] <= t,
                (None, Some(near)) => cd[i][near] > t,
                (None, None) => true,
                (Some(_), None) => false,
            }
        });
        if ok {
            consistent.push(asg);
        }
    }
    assert_eq!(consistent.len(), 1, "matching not unique");
    consistent[0].iter().map(|a| a.is_some()).collect()
}

#[test]
fn greedy_matching_matches_exhaustive_check() {
    let mut rng = ChaCha8Rng::seed_from_u64(51);
    for _ in 0..300 {
        let n = rng.random_range(0..=4);
        let n_gt = rng.random_range(0..=3);
        let scores: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        let cd: Vec<Vec<f64>> = (0..n).map(|_| (0..n_gt).map(|_| rng.random_range(0.0..2.0)).collect()).collect();
        let t = [0.5, 1.0, 1.5][rng.random_range(0..3)];
        assert_eq!(match_for_eval(&scores, &cd, n_gt, t), exhaustive_match(&scores, &cd, n_gt, t));
    }
}

fn jitter(frames: &[LocalVectorMap], sigma: f64, seed: u64) -> Vec<LocalVectorMap> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    frames
        .iter()
        .map(|f| {
            let mut f = f.clone();
            for inst in &mut f.instances {
                for p in &mut inst.points {
                    p[0] += rng.random_range(-sigma..sigma);
                    p[1] += rng.random_range(-sigma..sigma);
                }
                inst.score = Some(rng.random());
            }
            f
        })
        .collect()
}

#[test]
fn raising_threshold_never_lowers_ap() {
    let thresholds: Vec<f64> = (1..=12).map(|k| k as f64 * 0.25).collect();
    let cfg = EvalConfig { cd_thresholds: thresholds, ..Default::default() };
    for seed in 0..5 {
        let gts = generate_scene(&SceneConfig { seed, n_frames: 3, ..Default::default() }).unwrap();
        let preds = jitter(&gts, 1.5, seed);
        let r = evaluate(&preds, &gts, &cfg).unwrap();
        for c in &r.categories {
            for w in c.per_threshold.windows(2) {
                assert!(w[1].ap >= w[0].ap - 1e-15, "{:?}", c);
            }
        }
    }
}

#[test]
fn self_and_empty_evaluation() {
    let gts = generate_scene(&SceneConfig::default()).unwrap();
    let r = evaluate(&gts, &gts, &EvalConfig::default()).unwrap();
    assert_eq!(r.map, 1.0);
    let empty: Vec<LocalVectorMap> = gts.iter().map(|g| LocalVectorMap { instances: vec![], ..g.clone() }).collect();
    assert_eq!(evaluate(&empty, &gts, &EvalConfig::default()).unwrap().map, 0.0);
    let mut shifted = gts.clone();
    shifted[0].frame_id = 99;
    assert!(evaluate(&shifted, &gts, &EvalConfig::default()).is_err());
}

#[test]
fn out_of_range_instances_ignored() {
    let mut gt = LocalVectorMap::new(0, 0.0, Pose2::identity());
    gt.instances.push(PolyInstance::new(Category::Divider, vec![[0.0, 0.0], [10.0, 0.0]], false).unwrap());
    let mut pred = gt.clone();
    pred.instances.push(
        PolyInstance::new(Category::Divider, vec![[100.0, 0.0], [110.0, 0.0]], false)
            .unwrap()
            .with_score(0.9),
    );
    let r = evaluate(&[pred], &[gt], &EvalConfig::default()).unwrap();
    assert_eq!(r.category(Category::Divider).ap, 1.0);
    assert!(!r.category(Category::Boundary).defined);
}
