//! Central finite-difference verification of analytic gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::model::PolicyParams;

/// Relative errors below this absolute scale are measured absolutely.
pub const ABS_FLOOR: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub probed: usize,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(ABS_FLOOR)
}

/// Picks `count` distinct coordinates (or all of them) with a seeded RNG.
pub fn probe_indices(len: usize, count: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = sample(&mut rng, len, count.min(len)).into_vec();
    idx.sort_unstable();
    idx
}

/// Compares `analytic[i]` with `(f(θ + εe_i) - f(θ - εe_i)) / 2ε` on the given coordinates.
pub fn finite_diff_check_at<F>(loss: F, params: &PolicyParams, analytic: &[f64], eps: f64, indices: &[usize]) -> GradCheckReport
where
    F: Fn(&PolicyParams) -> f64,
{
    assert!(eps > 0.0, "finite-difference step must be positive");
    let mut probe = params.clone();
    let mut report = GradCheckReport { max_rel_error: 0.0, worst_index: 0, probed: indices.len() };
    for &i in indices {
        let orig = probe.data[i];
        probe.data[i] = orig + eps;
        let up = loss(&probe);
        probe.data[i] = orig - eps;
        let down = loss(&probe);
        probe.data[i] = orig;
        let err = relative_error(analytic[i], (up - down) / (2.0 * eps));
        if err > report.max_rel_error {
            report.max_rel_error = err;
            report.worst_index = i;
        }
    }
    report
}

/// `loss_and_grad` returns the loss and its analytic gradient; the check
/// probes 256 random coordinates.
pub fn finite_diff_check<F>(loss_and_grad: F, params: &PolicyParams, eps: f64, seed: u64) -> GradCheckReport
where
    F: Fn(&PolicyParams) -> (f64, Vec<f64>),
{
    let (_, analytic) = loss_and_grad(params);
    let indices = probe_indices(params.len(), 256, seed);
    finite_diff_check_at(|p| loss_and_grad(p).0, params, &analytic, eps, &indices)
}
