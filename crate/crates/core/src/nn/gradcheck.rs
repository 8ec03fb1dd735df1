//! Central finite-difference verification of analytic gradients (float64).

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const DEFAULT_STEP: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoordCheck {
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Clone, Debug, Default)]
pub struct GradCheckReport {
    pub checks: Vec<CoordCheck>,
    pub max_rel_error: f64,
}

impl GradCheckReport {
    pub fn passes(&self, rel_tol: f64) -> bool {
        !self.checks.is_empty() && self.max_rel_error < rel_tol
    }

    pub fn worst(&self) -> Option<&CoordCheck> {
        self.checks
            .iter()
            .max_by(|a, b| a.rel_error.total_cmp(&b.rel_error))
    }
}

/// `|a - n| / max(|a|, |n|, 1e-12)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-12)
}

/// `count` distinct indices from `0..n` (all of them when `count >= n`), sorted.
pub fn sample_coords(n: usize, count: usize, seed: u64) -> Vec<usize> {
    if count >= n {
        return (0..n).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = sample(&mut rng, n, count).into_vec();
    idx.sort_unstable();
    idx
}

/// Compares `analytic[i]` against `(f(p + h e_i) - f(p - h e_i)) / 2h` for each
/// sampled coordinate `i`.
pub fn grad_check<F>(
    point: &[f64],
    analytic: &[f64],
    coords: &[usize],
    step: f64,
    mut loss: F,
) -> GradCheckReport
where
    F: FnMut(&[f64]) -> f64,
{
    assert_eq!(point.len(), analytic.len(), "gradient length must match point");
    let mut probe = point.to_vec();
    let mut report = GradCheckReport::default();
    for &i in coords {
        let orig = probe[i];
        probe[i] = orig + step;
        let up = loss(&probe);
        probe[i] = orig - step;
        let down = loss(&probe);
        probe[i] = orig;
        let numeric = (up - down) / (2.0 * step);
        let rel_error = relative_error(analytic[i], numeric);
        report.max_rel_error = report.max_rel_error.max(rel_error);
        report.checks.push(CoordCheck {
            index: i,
            analytic: analytic[i],
            numeric,
            rel_error,
        });
    }
    report
}
