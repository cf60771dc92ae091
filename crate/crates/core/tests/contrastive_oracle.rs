use mapcons::contrastive::{
    contrastive_loss, find_negatives, find_positive, select_anchors, ContrastiveTerm, Reduction,
};
use mapcons::geometry::BBox;
use mapcons::map::{Category, InstanceEmbedding};
use mapcons::gradcheck::random_terms;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `ln(1 + Σ exp(z))` by direct compensated summation, without the
/// log-sum-exp shift. Valid for moderate logits.
fn reference_loss(terms: &[ContrastiveTerm]) -> f64 {
    let dot = |a: &[f64], b: &[f64]| -> f64 {
        let mut s = 0.0f64;
        let mut c = 0.0f64;
        for (x, y) in a.iter().zip(b) {
            let v = x * y;
            let t = s + v;
            c += if s.abs() >= v.abs() { (s - t) + v } else { (v - t) + s };
            s = t;
        }
        s + c
    };
    let (mut s, mut c) = (0.0f64, 0.0f64);
    for t in terms {
        let Some(pos) = &t.positive else { continue };
        let vp = dot(&t.anchor, pos);
        for n in &t.negatives {
            let v = (dot(&t.anchor, n) - vp).exp();
            let sum = s + v;
            c += if s.abs() >= v.abs() { (s - sum) + v } else { (v - sum) + s };
            s = sum;
        }
    }
    (s + c).ln_1p()
}

#[test]
fn loss_matches_compensated_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..200 {
        let terms = random_terms(&mut rng, 8);
        let got = contrastive_loss(&terms, Reduction::Sum).unwrap();
        let want = reference_loss(&terms);
        assert!((got - want).abs() <= 1e-12 * want.max(1.0), "{got} vs {want}");
    }
}

#[test]
fn loss_is_monotone_in_similarities() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    for _ in 0..100 {
        let terms = random_terms(&mut rng, 8);
        let base = contrastive_loss(&terms, Reduction::Sum).unwrap();
        assert!(base >= 0.0);
        // Moving k⁺ along v raises v·k⁺ and lowers the loss.
        let mut pos_up = terms.clone();
        let a = pos_up[0].anchor.clone();
        for (p, v) in pos_up[0].positive.as_mut().unwrap().iter_mut().zip(&a) {
            *p += 0.1 * v;
        }
        assert!(contrastive_loss(&pos_up, Reduction::Sum).unwrap() < base);
        let mut neg_up = terms.clone();
        for (n, v) in neg_up[0].negatives[0].iter_mut().zip(&a) {
            *n += 0.1 * v;
        }
        assert!(contrastive_loss(&neg_up, Reduction::Sum).unwrap() > base);
    }
}

fn emb(category: Category, score: f64, center: [f64; 2]) -> InstanceEmbedding {
    InstanceEmbedding {
        feature: vec![0.0; 4],
        category,
        score,
        bbox: BBox { center, half_extents: [1.0, 1.0] },
    }
}

fn random_set(rng: &mut impl Rng, n: usize) -> Vec<InstanceEmbedding> {
    (0..n)
        .map(|_| {
            emb(
                Category::ALL[rng.random_range(0..3)],
                rng.random(),
                [rng.random_range(-20.0..20.0), rng.random_range(-10.0..10.0)],
            )
        })
        .collect()
}

#[test]
fn mining_matches_sort_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    for _ in 0..100 {
        let (nc, nh) = (rng.random_range(0..12), rng.random_range(0..12));
        let current = random_set(&mut rng, nc);
        let history = random_set(&mut rng, nh);
        let top = |cat: Category, k: usize| -> Vec<usize> {
            let mut idx: Vec<usize> = (0..current.len()).filter(|&i| current[i].category == cat).collect();
            idx.sort_by(|&a, &b| current[b].score.partial_cmp(&current[a].score).unwrap());
            idx.truncate(k);
            idx
        };
        let anchors = select_anchors(&current, 3);
        let want: Vec<usize> = Category::ALL.iter().flat_map(|&c| top(c, 3)).collect();
        assert_eq!(anchors, want);
        for &a in &anchors {
            let anchor = &current[a];
            let negs = find_negatives(anchor, &current, 3);
            let want: Vec<usize> = Category::ALL
                .iter()
                .filter(|&&c| c != anchor.category)
                .flat_map(|&c| top(c, 3))
                .collect();
            assert_eq!(negs, want);
            assert!(negs.iter().all(|&n| current[n].category != anchor.category));

            let scan = history
                .iter()
                .enumerate()
                .filter(|(_, h)| h.category == anchor.category)
                .map(|(i, h)| (i, (h.bbox.center[0] - anchor.bbox.center[0]).hypot(h.bbox.center[1] - anchor.bbox.center[1])))
                .fold(None::<(usize, f64)>, |best, (i, d)| match best {
                    Some((_, bd)) if bd <= d => best,
                    _ => Some((i, d)),
                })
                .filter(|(_, d)| *d <= 5.0)
                .map(|(i, _)| i);
            assert_eq!(find_positive(anchor, &history, 5.0), scan);
        }
    }
}
