//! Preference-aligned graphic layout generation at desk scale.
//!
//! The crate covers the whole loop: position-token binning of layouts,
//! alignment/overlap quality heuristics and filtering, rendering, pairwise
//! judging (remote vision-chat endpoint or an offline heuristic),
//! preference-pair construction, cross-entropy and preference-alignment
//! training of a small linear-softmax policy, and mIoU / win-rate
//! evaluation.

pub mod dataio;
pub mod eval;
pub mod judge;
pub mod layout;
pub mod metrics;
pub mod policy;
pub mod preference;
pub mod prompt;
pub mod render;
pub mod train;
