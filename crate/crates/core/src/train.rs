//! Minibatch training loops for the cross-entropy and preference objectives.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataio::{DataError, DatasetSample};
use crate::layout::tokenize_layout;
use crate::policy::loss::{preference_loss_and_grad_with_reference, reference_log_probs};
use crate::policy::{adamw_step, ce_loss_and_grad, featurize, lr_schedule, AdamWConfig, AdamWState, CeExample};
use crate::policy::{PolicyError, PolicyParams, PreferenceExample};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub steps: u64,
    pub batch_size: usize,
    pub lr: f64,
    pub warmup_ratio: f64,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { steps: 1000, batch_size: 32, lr: 4e-5, warmup_ratio: 0.03, weight_decay: 0.01, seed: 0 }
    }
}

impl TrainConfig {
    fn adamw(&self) -> AdamWConfig {
        AdamWConfig { lr: self.lr, weight_decay: self.weight_decay, ..AdamWConfig::default() }
    }
}

/// Loss is measured on the step's batch before the update is applied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLog {
    pub step: u64,
    pub lr: f64,
    pub loss: f64,
}

impl std::fmt::Display for StepLog {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{},{:.6e},{:.6}", self.step, self.lr, self.loss)
    }
}

/// Visits indices in seeded shuffled epochs.
#[derive(Debug)]
struct EpochSampler {
    order: Vec<usize>,
    pos: usize,
    rng: ChaCha8Rng,
}

impl EpochSampler {
    fn new(len: usize, seed: u64) -> Self {
        let mut s = Self { order: (0..len).collect(), pos: len, rng: ChaCha8Rng::seed_from_u64(seed) };
        s.reshuffle();
        s
    }

    fn reshuffle(&mut self) {
        self.order.shuffle(&mut self.rng);
        self.pos = 0;
    }

    fn next_batch(&mut self, size: usize) -> Vec<usize> {
        let mut batch = Vec::with_capacity(size);
        while batch.len() < size.min(self.order.len()) {
            if self.pos == self.order.len() {
                self.reshuffle();
            }
            batch.push(self.order[self.pos]);
            self.pos += 1;
        }
        batch
    }
}

/// Features and ground-truth tokens for every sample with complete boxes.
pub fn ce_examples(samples: &[DatasetSample], bins: u32) -> Result<Vec<CeExample>, DataError> {
    samples
        .iter()
        .map(|s| {
            let tokens = tokenize_layout(&s.gt_layout()?, bins)?;
            let features = featurize(&s.canvas, &s.all_elements(), None, bins);
            Ok(CeExample { features, tokens })
        })
        .collect()
}

fn check(cfg: &TrainConfig, n: usize) -> Result<(), PolicyError> {
    if n == 0 || cfg.batch_size == 0 {
        return Err(PolicyError::EmptyBatch);
    }
    Ok(())
}

/// Runs `cfg.steps` AdamW steps on the cross-entropy loss.
pub fn train_ce(
    params: &mut PolicyParams,
    state: &mut AdamWState,
    examples: &[CeExample],
    cfg: &TrainConfig,
    mut on_step: impl FnMut(&StepLog),
) -> Result<Vec<StepLog>, PolicyError> {
    check(cfg, examples.len())?;
    let adamw = cfg.adamw();
    let mut sampler = EpochSampler::new(examples.len(), cfg.seed);
    let mut logs = Vec::with_capacity(cfg.steps as usize);
    let mut batch = Vec::with_capacity(cfg.batch_size);
    for step in 0..cfg.steps {
        batch.clear();
        batch.extend(sampler.next_batch(cfg.batch_size).into_iter().map(|i| examples[i].clone()));
        let (loss, grad) = ce_loss_and_grad(params, &batch)?;
        let lr = lr_schedule(step, cfg.steps, cfg.lr, cfg.warmup_ratio);
        adamw_step(&mut params.data, &grad, state, &adamw, lr)?;
        let log = StepLog { step, lr, loss };
        on_step(&log);
        logs.push(log);
    }
    Ok(logs)
}

/// Runs `cfg.steps` AdamW steps on the preference loss against a frozen
/// reference. Reference log-probabilities are computed once up front.
pub fn train_preference(
    params: &mut PolicyParams,
    reference: &PolicyParams,
    state: &mut AdamWState,
    examples: &[PreferenceExample],
    beta: f64,
    cfg: &TrainConfig,
    mut on_step: impl FnMut(&StepLog),
) -> Result<Vec<StepLog>, PolicyError> {
    check(cfg, examples.len())?;
    let refs = reference_log_probs(reference, examples)?;
    let adamw = cfg.adamw();
    let mut sampler = EpochSampler::new(examples.len(), cfg.seed);
    let mut logs = Vec::with_capacity(cfg.steps as usize);
    for step in 0..cfg.steps {
        let idx = sampler.next_batch(cfg.batch_size);
        let batch: Vec<_> = idx.iter().map(|&i| examples[i].clone()).collect();
        let batch_refs: Vec<_> = idx.iter().map(|&i| refs[i]).collect();
        let (loss, grad) = preference_loss_and_grad_with_reference(params, &batch, &batch_refs, beta)?;
        let lr = lr_schedule(step, cfg.steps, cfg.lr, cfg.warmup_ratio);
        adamw_step(&mut params.data, &grad, state, &adamw, lr)?;
        let log = StepLog { step, lr, loss };
        on_step(&log);
        logs.push(log);
    }
    Ok(logs)
}
