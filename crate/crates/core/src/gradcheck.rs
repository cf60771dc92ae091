//! Central finite-difference checks of the analytic gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::contrastive::{contrastive_loss, contrastive_loss_grad, ContrastiveTerm, Reduction};
use crate::error::Result;
use crate::grid::{GridMap, GridSpec};
use crate::temporal::{mo_loss, mo_loss_grad, AlignedGrid};

/// `|a − n| / max(|a|, |n|)`, falling back to the absolute error when both
/// are below `1e-10`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let abs = (analytic - numeric).abs();
    let scale = analytic.abs().max(numeric.abs());
    if scale > 1e-10 {
        abs / scale
    } else {
        abs
    }
}

pub fn central_difference(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut buf = x.to_vec();
    (0..x.len())
        .map(|i| {
            buf[i] = x[i] + h;
            let plus = f(&buf);
            buf[i] = x[i] - h;
            let minus = f(&buf);
            buf[i] = x[i];
            (plus - minus) / (2.0 * h)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CheckStats {
    pub compared: usize,
    /// Coordinates left out because a kink lies within the step.
    pub excluded: usize,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
}

impl CheckStats {
    fn record(&mut self, analytic: f64, numeric: f64) {
        self.compared += 1;
        self.max_rel_error = self.max_rel_error.max(relative_error(analytic, numeric));
        self.max_abs_error = self.max_abs_error.max((analytic - numeric).abs());
    }

    pub fn merge(&mut self, other: &CheckStats) {
        self.compared += other.compared;
        self.excluded += other.excluded;
        self.max_rel_error = self.max_rel_error.max(other.max_rel_error);
        self.max_abs_error = self.max_abs_error.max(other.max_abs_error);
    }
}

pub fn flatten_terms(terms: &[ContrastiveTerm]) -> Vec<f64> {
    let mut out = Vec::new();
    for t in terms {
        out.extend_from_slice(&t.anchor);
        if let Some(p) = &t.positive {
            out.extend_from_slice(p);
        }
        for n in &t.negatives {
            out.extend_from_slice(n);
        }
    }
    out
}

/// Inverse of [`flatten_terms`] using `shape` for the layout.
pub fn unflatten_terms(shape: &[ContrastiveTerm], flat: &[f64]) -> Vec<ContrastiveTerm> {
    let mut at = 0;
    let mut take = |n: usize| {
        let v = flat[at..at + n].to_vec();
        at += n;
        v
    };
    shape
        .iter()
        .map(|t| ContrastiveTerm {
            anchor: take(t.anchor.len()),
            positive: t.positive.as_ref().map(|p| take(p.len())),
            negatives: t.negatives.iter().map(|n| take(n.len())).collect(),
        })
        .collect()
}

/// Compares the analytic contrastive gradient against central differences.
/// `corrupt` scales the analytic gradient (1.0 for a faithful check).
pub fn check_contrastive(terms: &[ContrastiveTerm], reduction: Reduction, h: f64, corrupt: f64) -> Result<CheckStats> {
    let grad = contrastive_loss_grad(terms, reduction)?;
    let analytic: Vec<f64> = flatten_terms(&grad.terms).iter().map(|g| g * corrupt).collect();
    let x = flatten_terms(terms);
    let numeric = central_difference(
        |p| contrastive_loss(&unflatten_terms(terms, p), reduction).expect("shape preserved"),
        &x,
        h,
    );
    let mut stats = CheckStats::default();
    for (a, n) in analytic.iter().zip(&numeric) {
        stats.record(*a, *n);
    }
    Ok(stats)
}

/// Compares the occupancy-loss subgradient against central differences.
/// Cells where any history differs from the current value by less than `2h`
/// sit on a kink and are excluded.
pub fn check_mo(current: &GridMap, history: &[AlignedGrid], h: f64, corrupt: f64) -> Result<CheckStats> {
    let grad = mo_loss_grad(current, history)?;
    mo_loss(current, history)?;
    let mut stats = CheckStats::default();
    let mut probe = current.clone();
    for i in 0..current.values.len() {
        let c = current.values[i];
        let near_kink = history
            .iter()
            .any(|hg| hg.valid[i] && (c - hg.values[i]).abs() < 2.0 * h);
        if near_kink {
            stats.excluded += 1;
            continue;
        }
        probe.values[i] = c + h;
        let plus = mo_loss(&probe, history)?.value;
        probe.values[i] = c - h;
        let minus = mo_loss(&probe, history)?.value;
        probe.values[i] = c;
        stats.record(grad[i] * corrupt, (plus - minus) / (2.0 * h));
    }
    Ok(stats)
}

/// Random contrastive configuration: 1 to 3 anchors, each with a positive
/// and 1 to 6 negatives, entries uniform in `[-1, 1]`.
pub fn random_terms(rng: &mut impl Rng, dim: usize) -> Vec<ContrastiveTerm> {
    fn vec(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
        (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()
    }
    let n_anchors = rng.random_range(1..=3);
    (0..n_anchors)
        .map(|_| {
            let n_neg = rng.random_range(1..=6);
            ContrastiveTerm {
                anchor: vec(rng, dim),
                positive: Some(vec(rng, dim)),
                negatives: (0..n_neg).map(|_| vec(rng, dim)).collect(),
            }
        })
        .collect()
}

/// Random current grid and `m` aligned histories whose values all differ
/// from the current value by at least `gap`, with about 20% invalid cells.
pub fn random_mo_case(rng: &mut impl Rng, spec: GridSpec, m: usize, gap: f64) -> (GridMap, Vec<AlignedGrid>) {
    let n = spec.len();
    let current: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..0.95)).collect();
    let history = (0..m)
        .map(|_| {
            let values = current
                .iter()
                .map(|&c| loop {
                    let a: f64 = rng.random_range(0.0..1.0);
                    if (a - c).abs() >= gap {
                        break a;
                    }
                })
                .collect();
            let valid = (0..n).map(|_| rng.random_bool(0.8)).collect();
            AlignedGrid { spec, values, valid }
        })
        .collect();
    (GridMap { spec, values: current }, history)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GradCheckConfig {
    pub seed: u64,
    pub contrastive_cases: usize,
    pub mo_cases: usize,
    pub dim: usize,
    pub step: f64,
    pub tolerance: f64,
    /// Scale applied to analytic gradients; anything but 1 is a negative
    /// control that must fail.
    pub corrupt: f64,
    /// Plant exact ties between current and history values; the affected
    /// cells are excluded from the comparison.
    pub with_ties: bool,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            contrastive_cases: 50,
            mo_cases: 20,
            dim: 8,
            step: 1e-5,
            tolerance: 1e-4,
            corrupt: 1.0,
            with_ties: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub contrastive: CheckStats,
    pub mo: CheckStats,
    pub tolerance: f64,
    pub passed: bool,
}

pub fn run_gradcheck(cfg: &GradCheckConfig) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut contrastive = CheckStats::default();
    for _ in 0..cfg.contrastive_cases {
        let terms = random_terms(&mut rng, cfg.dim);
        contrastive.merge(&check_contrastive(&terms, Reduction::Sum, cfg.step, cfg.corrupt)?);
    }
    let mut mo = CheckStats::default();
    let spec = GridSpec::centered(12, 8, 0.15);
    for _ in 0..cfg.mo_cases {
        let (current, mut history) = random_mo_case(&mut rng, spec, 2, 1e-3);
        if cfg.with_ties {
            for i in (0..current.values.len()).step_by(5) {
                history[0].values[i] = current.values[i];
                history[0].valid[i] = true;
            }
        }
        mo.merge(&check_mo(&current, &history, cfg.step, cfg.corrupt)?);
    }
    let passed = contrastive.max_rel_error <= cfg.tolerance
        && mo.max_rel_error <= cfg.tolerance
        && contrastive.compared + mo.compared > 0;
    Ok(GradCheckReport {
        contrastive,
        mo,
        tolerance: cfg.tolerance,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_error_convention() {
        assert_eq!(relative_error(1.0, 1.0), 0.0);
        assert!((relative_error(1.0, 0.5) - 0.5).abs() < 1e-15);
        assert_eq!(relative_error(0.0, 1e-12), 1e-12);
    }

    #[test]
    fn central_difference_of_quadratic() {
        let g = central_difference(|x| x[0] * x[0] + 3.0 * x[1], &[2.0, -1.0], 1e-5);
        assert!((g[0] - 4.0).abs() < 1e-8);
        assert!((g[1] - 3.0).abs() < 1e-8);
    }

    #[test]
    fn flatten_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut terms = random_terms(&mut rng, 4);
        terms[0].positive = None;
        let flat = flatten_terms(&terms);
        assert_eq!(unflatten_terms(&terms, &flat), terms);
    }

    #[test]
    fn default_run_passes() {
        let r = run_gradcheck(&GradCheckConfig::default()).unwrap();
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn ties_are_excluded_not_failed() {
        let r = run_gradcheck(&GradCheckConfig {
            with_ties: true,
            ..Default::default()
        })
        .unwrap();
        assert!(r.passed);
        assert!(r.mo.excluded > 0);
    }

    #[test]
    fn corrupted_gradient_fails() {
        let r = run_gradcheck(&GradCheckConfig {
            corrupt: 1.01,
            ..Default::default()
        })
        .unwrap();
        assert!(!r.passed);
    }
}
