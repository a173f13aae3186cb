//! The trainable layout policy and everything needed to fit it.

pub mod checkpoint;
pub mod features;
pub mod gradcheck;
pub mod loss;
pub mod model;
pub mod optim;

pub use features::{featurize, FeatureVector, FEATURE_DIM};
pub use gradcheck::{finite_diff_check, GradCheckReport};
pub use loss::{preference_loss_and_grad, ce_loss_and_grad, CeExample, PreferenceExample, DEFAULT_BETA};
pub use model::{greedy, log_prob, sample, PolicyParams};
pub use optim::{adamw_step, lr_schedule, AdamWConfig, AdamWState};

#[derive(Debug, thiserror::Error)]
pub enum PolicyError {
    #[error("{tokens} tokens do not match {elements} elements")]
    LengthMismatch { tokens: usize, elements: usize },
    #[error("token {token} outside alphabet 0..={bins}")]
    TokenOutOfRange { token: u32, bins: u32 },
    #[error("winner has {winner} tokens but loser has {loser}")]
    PairLengthMismatch { winner: usize, loser: usize },
    #[error("sampling temperature must be positive, got {0}")]
    InvalidTemperature(f64),
    #[error("beta must be positive, got {0}")]
    InvalidBeta(f64),
    #[error("empty batch")]
    EmptyBatch,
    #[error("parameter buffer has {params} entries but gradient has {grad}")]
    ShapeMismatch { params: usize, grad: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
