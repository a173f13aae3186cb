//! Factorized linear-softmax layout policy.
//!
//! Each attribute head `a ∈ {x, y, w, h}` maps a feature vector to logits
//! over the `K + 1` position tokens. Tokens are conditionally independent
//! given the features, so the log-probability of a layout is the sum of
//! per-token log-softmax terms.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::features::{FeatureVector, FEATURE_DIM};
use super::PolicyError;
use crate::layout::TokenizedLayout;

pub const HEADS: usize = 4;

/// All weights in one flat buffer. Per head: a `(K + 1) x dim` row-major
/// weight matrix followed by `K + 1` biases.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    pub bins: u32,
    pub dim: usize,
    pub temperature: f64,
    pub data: Vec<f64>,
}

impl PolicyParams {
    pub fn zeros(bins: u32) -> Self {
        let classes = bins as usize + 1;
        Self {
            bins,
            dim: FEATURE_DIM,
            temperature: 1.0,
            data: vec![0.0; HEADS * classes * (FEATURE_DIM + 1)],
        }
    }

    /// Gaussian-initialized parameters, mainly for tests and gradient checks.
    pub fn random<R: Rng>(bins: u32, std: f64, rng: &mut R) -> Self {
        let mut p = Self::zeros(bins);
        let normal = Normal::new(0.0, std).expect("finite std");
        for v in &mut p.data {
            *v = normal.sample(rng);
        }
        p
    }

    pub fn classes(&self) -> usize {
        self.bins as usize + 1
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn head_len(&self) -> usize {
        self.classes() * (self.dim + 1)
    }

    pub fn head(&self, a: usize) -> &[f64] {
        let n = self.head_len();
        &self.data[a * n..(a + 1) * n]
    }

    pub fn zeros_like(&self) -> Vec<f64> {
        vec![0.0; self.data.len()]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    fn logits_into(&self, a: usize, phi: &FeatureVector, out: &mut [f64]) {
        let head = self.head(a);
        let classes = self.classes();
        let (weights, bias) = head.split_at(classes * self.dim);
        for (k, o) in out.iter_mut().enumerate() {
            let row = &weights[k * self.dim..(k + 1) * self.dim];
            *o = bias[k] + row.iter().zip(phi.iter()).map(|(w, f)| w * f).sum::<f64>();
        }
    }

    pub fn logits(&self, a: usize, phi: &FeatureVector) -> Vec<f64> {
        let mut out = vec![0.0; self.classes()];
        self.logits_into(a, phi, &mut out);
        out
    }
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn check_shape(params: &PolicyParams, features: &[FeatureVector], tokens: &TokenizedLayout) -> Result<(), PolicyError> {
    if tokens.tokens.len() != 4 * features.len() {
        return Err(PolicyError::LengthMismatch { tokens: tokens.tokens.len(), elements: features.len() });
    }
    if let Some(&t) = tokens.tokens.iter().find(|&&t| t > params.bins) {
        return Err(PolicyError::TokenOutOfRange { token: t, bins: params.bins });
    }
    Ok(())
}

/// Sum of per-token log-probabilities; always `<= 0`.
pub fn log_prob(params: &PolicyParams, features: &[FeatureVector], tokens: &TokenizedLayout) -> Result<f64, PolicyError> {
    check_shape(params, features, tokens)?;
    let mut logits = vec![0.0; params.classes()];
    let mut total = 0.0;
    for (e, phi) in features.iter().enumerate() {
        for a in 0..HEADS {
            params.logits_into(a, phi, &mut logits);
            total += logits[tokens.tokens[4 * e + a] as usize] - log_sum_exp(&logits);
        }
    }
    Ok(total.min(0.0))
}

/// Returns the log-probability and adds `scale * d(log_prob)/d(params)` into `grad`.
pub fn log_prob_with_grad(
    params: &PolicyParams,
    features: &[FeatureVector],
    tokens: &TokenizedLayout,
    scale: f64,
    grad: &mut [f64],
) -> Result<f64, PolicyError> {
    check_shape(params, features, tokens)?;
    debug_assert_eq!(grad.len(), params.len());
    let classes = params.classes();
    let dim = params.dim;
    let head_len = params.head_len();
    let mut logits = vec![0.0; classes];
    let mut total = 0.0;
    for (e, phi) in features.iter().enumerate() {
        for a in 0..HEADS {
            params.logits_into(a, phi, &mut logits);
            let lse = log_sum_exp(&logits);
            let target = tokens.tokens[4 * e + a] as usize;
            total += logits[target] - lse;
            let head = &mut grad[a * head_len..(a + 1) * head_len];
            let (gw, gb) = head.split_at_mut(classes * dim);
            for k in 0..classes {
                let p = (logits[k] - lse).exp();
                let coef = scale * (if k == target { 1.0 } else { 0.0 } - p);
                gb[k] += coef;
                for (g, f) in gw[k * dim..(k + 1) * dim].iter_mut().zip(phi.iter()) {
                    *g += coef * f;
                }
            }
        }
    }
    Ok(total)
}

/// Tempered-softmax distribution of one head.
pub fn head_probs(params: &PolicyParams, a: usize, phi: &FeatureVector, temperature: f64) -> Vec<f64> {
    let logits: Vec<f64> = params.logits(a, phi).iter().map(|l| l / temperature).collect();
    let lse = log_sum_exp(&logits);
    logits.iter().map(|l| (l - lse).exp()).collect()
}

/// Independent categorical draw per token from the tempered softmax.
pub fn sample<R: Rng>(
    params: &PolicyParams,
    features: &[FeatureVector],
    temperature: f64,
    rng: &mut R,
) -> Result<TokenizedLayout, PolicyError> {
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(PolicyError::InvalidTemperature(temperature));
    }
    let mut tokens = Vec::with_capacity(4 * features.len());
    for phi in features {
        for a in 0..HEADS {
            let probs = head_probs(params, a, phi, temperature);
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut chosen = probs.len() - 1;
            for (k, p) in probs.iter().enumerate() {
                acc += p;
                if u < acc {
                    chosen = k;
                    break;
                }
            }
            tokens.push(chosen as u32);
        }
    }
    Ok(TokenizedLayout { tokens, bins: params.bins })
}

/// Argmax decoding; ties go to the lowest token.
pub fn greedy(params: &PolicyParams, features: &[FeatureVector]) -> TokenizedLayout {
    let mut tokens = Vec::with_capacity(4 * features.len());
    let mut logits = vec![0.0; params.classes()];
    for phi in features {
        for a in 0..HEADS {
            params.logits_into(a, phi, &mut logits);
            let mut best = 0;
            for k in 1..logits.len() {
                if logits[k] > logits[best] {
                    best = k;
                }
            }
            tokens.push(best as u32);
        }
    }
    TokenizedLayout { tokens, bins: params.bins }
}
