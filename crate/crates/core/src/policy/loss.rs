//! Cross-entropy and preference-alignment losses with analytic gradients.

use super::features::FeatureVector;
use super::model::{log_prob, log_prob_with_grad, PolicyParams};
use super::PolicyError;
use crate::layout::TokenizedLayout;

/// Divergence-control coefficient of the preference loss.
pub const DEFAULT_BETA: f64 = 0.1;

#[derive(Debug, Clone)]
pub struct CeExample {
    pub features: Vec<FeatureVector>,
    pub tokens: TokenizedLayout,
}

#[derive(Debug, Clone)]
pub struct PreferenceExample {
    pub features: Vec<FeatureVector>,
    pub winner: TokenizedLayout,
    pub loser: TokenizedLayout,
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Mean over the batch of the summed token negative log-likelihood.
pub fn ce_loss_and_grad(params: &PolicyParams, batch: &[CeExample]) -> Result<(f64, Vec<f64>), PolicyError> {
    if batch.is_empty() {
        return Err(PolicyError::EmptyBatch);
    }
    let scale = 1.0 / batch.len() as f64;
    let mut grad = params.zeros_like();
    let mut loss = 0.0;
    for ex in batch {
        loss -= log_prob_with_grad(params, &ex.features, &ex.tokens, -scale, &mut grad)?;
    }
    Ok((loss * scale, grad))
}

pub fn ce_loss(params: &PolicyParams, batch: &[CeExample]) -> Result<f64, PolicyError> {
    if batch.is_empty() {
        return Err(PolicyError::EmptyBatch);
    }
    let mut loss = 0.0;
    for ex in batch {
        loss -= log_prob(params, &ex.features, &ex.tokens)?;
    }
    Ok(loss / batch.len() as f64)
}

/// Frozen reference log-probabilities `(winner, loser)` for each example.
pub fn reference_log_probs(
    reference: &PolicyParams,
    batch: &[PreferenceExample],
) -> Result<Vec<(f64, f64)>, PolicyError> {
    batch
        .iter()
        .map(|ex| {
            check_pair(ex)?;
            Ok((log_prob(reference, &ex.features, &ex.winner)?, log_prob(reference, &ex.features, &ex.loser)?))
        })
        .collect()
}

fn check_pair(ex: &PreferenceExample) -> Result<(), PolicyError> {
    if ex.winner.tokens.len() != ex.loser.tokens.len() {
        return Err(PolicyError::PairLengthMismatch { winner: ex.winner.tokens.len(), loser: ex.loser.tokens.len() });
    }
    Ok(())
}

/// Log-ratio margin `(log pi(w) - log ref(w)) - (log pi(l) - log ref(l))`.
pub fn margin(params: &PolicyParams, ex: &PreferenceExample, reference: (f64, f64)) -> Result<f64, PolicyError> {
    check_pair(ex)?;
    let w = log_prob(params, &ex.features, &ex.winner)?;
    let l = log_prob(params, &ex.features, &ex.loser)?;
    Ok((w - reference.0) - (l - reference.1))
}

/// Loss and gradient against precomputed reference log-probabilities.
pub fn preference_loss_and_grad_with_reference(
    params: &PolicyParams,
    batch: &[PreferenceExample],
    reference: &[(f64, f64)],
    beta: f64,
) -> Result<(f64, Vec<f64>), PolicyError> {
    if batch.is_empty() {
        return Err(PolicyError::EmptyBatch);
    }
    if !(beta > 0.0) {
        return Err(PolicyError::InvalidBeta(beta));
    }
    debug_assert_eq!(batch.len(), reference.len());
    let scale = 1.0 / batch.len() as f64;
    let mut grad = params.zeros_like();
    let mut scratch = params.zeros_like();
    let mut loss = 0.0;
    for (ex, &(ref_w, ref_l)) in batch.iter().zip(reference) {
        check_pair(ex)?;
        scratch.iter_mut().for_each(|g| *g = 0.0);
        let w = log_prob_with_grad(params, &ex.features, &ex.winner, 1.0, &mut scratch)?;
        let l = log_prob_with_grad(params, &ex.features, &ex.loser, -1.0, &mut scratch)?;
        let z = beta * ((w - ref_w) - (l - ref_l));
        loss += softplus(-z);
        // d/dz softplus(-z) = -sigmoid(-z)
        let coef = -beta * sigmoid(-z) * scale;
        for (g, s) in grad.iter_mut().zip(&scratch) {
            *g += coef * s;
        }
    }
    Ok((loss * scale, grad))
}

/// Mean of `-ln sigmoid(beta * margin)` and its gradient w.r.t. `params` only.
pub fn preference_loss_and_grad(
    params: &PolicyParams,
    reference: &PolicyParams,
    batch: &[PreferenceExample],
    beta: f64,
) -> Result<(f64, Vec<f64>), PolicyError> {
    let refs = reference_log_probs(reference, batch)?;
    preference_loss_and_grad_with_reference(params, batch, &refs, beta)
}

pub fn preference_loss(
    params: &PolicyParams,
    batch: &[PreferenceExample],
    reference: &[(f64, f64)],
    beta: f64,
) -> Result<f64, PolicyError> {
    if batch.is_empty() {
        return Err(PolicyError::EmptyBatch);
    }
    let mut loss = 0.0;
    for (ex, &r) in batch.iter().zip(reference) {
        loss += softplus(-beta * margin(params, ex, r)?);
    }
    Ok(loss / batch.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::features::FEATURE_DIM;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn example(rng: &mut ChaCha8Rng, bins: u32, elements: usize) -> PreferenceExample {
        let features = (0..elements)
            .map(|_| {
                let mut f = [0.0; FEATURE_DIM];
                f.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
                f
            })
            .collect();
        let mut toks = || TokenizedLayout {
            tokens: (0..4 * elements).map(|_| rng.random_range(0..=bins)).collect(),
            bins,
        };
        let winner = toks();
        let loser = toks();
        PreferenceExample { features, winner, loser }
    }

    #[test]
    fn ce_of_uniform_two_class() {
        let p = PolicyParams::zeros(1);
        let batch = vec![CeExample { features: vec![[0.3; FEATURE_DIM]], tokens: TokenizedLayout { tokens: vec![0, 1, 1, 0], bins: 1 } }];
        let (loss, _) = ce_loss_and_grad(&p, &batch).unwrap();
        assert!((loss - 4.0 * 2f64.ln()).abs() < 1e-12);
        assert!(matches!(ce_loss_and_grad(&p, &[]), Err(PolicyError::EmptyBatch)));
    }

    #[test]
    fn preference_loss_is_ln2_at_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = PolicyParams::random(12, 0.7, &mut rng);
        let batch: Vec<_> = (0..5).map(|i| example(&mut rng, 12, 1 + i % 3)).collect();
        let (loss, _) = preference_loss_and_grad(&p, &p, &batch, DEFAULT_BETA).unwrap();
        assert!((loss - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn preference_margin_example() {
        // beta * margin = 0.2
        assert!((softplus(-0.2) - 0.598139).abs() < 1e-6);
    }

    #[test]
    fn preference_rejects_mismatched_pairs() {
        let p = PolicyParams::zeros(3);
        let ex = PreferenceExample {
            features: vec![[0.0; FEATURE_DIM]],
            winner: TokenizedLayout { tokens: vec![0, 0, 0, 0], bins: 3 },
            loser: TokenizedLayout { tokens: vec![0, 0, 0, 0, 1, 1, 1, 1], bins: 3 },
        };
        assert!(matches!(preference_loss_and_grad(&p, &p, &[ex], 0.1), Err(PolicyError::PairLengthMismatch { .. })));
    }

    #[test]
    fn softplus_is_stable() {
        assert_eq!(softplus(0.0), 2f64.ln());
        assert!((softplus(800.0) - 800.0).abs() < 1e-9);
        assert!(softplus(-800.0) >= 0.0 && softplus(-800.0) < 1e-300);
    }
}
