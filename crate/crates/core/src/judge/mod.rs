//! Pairwise aesthetic judges.
//!
//! A judge looks at two layouts and returns `d = 1` when the first is
//! better and `d = 2` otherwise. Three implementations share the [`Judge`]
//! trait: an offline quality-ordering heuristic, a remote vision-chat
//! client, and a caching wrapper around either.

mod cache;
mod heuristic;
mod remote;

pub use cache::{layout_hash, CacheEntry, CachedJudge, DecisionCache};
pub use heuristic::{compare_heuristic, HeuristicJudge, HEURISTIC_JUDGE_ID};
pub use remote::{build_request_body, extract_content, JudgeConfig, RemoteJudge, API_KEY_ENV};

use rayon::prelude::*;

use crate::layout::Layout;
use crate::metrics::MetricsError;
use crate::render::RenderError;

#[derive(Debug, thiserror::Error)]
pub enum JudgeError {
    #[error("unparsable verdict: {0}")]
    UnparsableVerdict(String),
    #[error("judge unavailable after {attempts} attempts: {last}")]
    Unavailable { attempts: u32, last: String },
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error("decision cache: {0}")]
    Cache(String),
    #[error("invalid judge configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JudgeDecision {
    /// 1 if the first input is better, 2 otherwise.
    pub d: u8,
    pub judge_id: String,
    pub raw_response: Option<String>,
    /// Set when the image order was swapped for position-bias control.
    pub swapped: bool,
}

pub trait Judge: Send + Sync {
    fn id(&self) -> String;
    fn compare(&self, g1: &Layout, g2: &Layout) -> Result<JudgeDecision, JudgeError>;
}

impl<J: Judge + ?Sized> Judge for &J {
    fn id(&self) -> String {
        (**self).id()
    }

    fn compare(&self, g1: &Layout, g2: &Layout) -> Result<JudgeDecision, JudgeError> {
        (**self).compare(g1, g2)
    }
}

impl<J: Judge + ?Sized> Judge for Box<J> {
    fn id(&self) -> String {
        (**self).id()
    }

    fn compare(&self, g1: &Layout, g2: &Layout) -> Result<JudgeDecision, JudgeError> {
        (**self).compare(g1, g2)
    }
}

/// The instruction sent to a vision-chat judge alongside the two images.
pub fn judge_prompt() -> &'static str {
    concat!(
        "You are a visual language model designed to evaluate and rate visual templates. ",
        "You are presented with 2 visual templates, and your task is to choose the better template ",
        "between these 2 based on the following criteria:\n",
        "\n",
        "Aesthetics: How visually appealing is the template,\n",
        "Clarity: How clear and easy to understand is the template,\n",
        "Usability: How practical and user-friendly is the template,\n",
        "Creativity: How unique and innovative is the design,\n",
        "Consistency: How consistent is the template with design principles and standards.\n",
        "\n",
        "Please provide your answer in the following JSON format and do not include any other details:\n",
        "\n",
        "{\"better_layout\": \"answer\"}\n",
        "\n",
        "where answer could either be image_1 or image_2."
    )
}

pub const VERDICT_KEY: &str = "better_layout";

/// Scans `text` for the first object literal carrying the verdict key and
/// maps `image_1`/`image_2` to 1/2.
pub fn parse_decision(text: &str) -> Result<u8, JudgeError> {
    for (start, _) in text.match_indices('{') {
        let mut stream = serde_json::Deserializer::from_str(&text[start..]).into_iter::<serde_json::Value>();
        let Some(Ok(serde_json::Value::Object(obj))) = stream.next() else {
            continue;
        };
        let Some(value) = obj.get(VERDICT_KEY) else {
            continue;
        };
        return match value.as_str().map(str::trim) {
            Some("image_1") => Ok(1),
            Some("image_2") => Ok(2),
            _ => Err(JudgeError::UnparsableVerdict(format!("unknown verdict value {value}"))),
        };
    }
    Err(JudgeError::UnparsableVerdict(truncate(text, 200)))
}

pub(crate) fn truncate(s: &str, max: usize) -> String {
    match s.char_indices().nth(max) {
        Some((i, _)) => format!("{}...", &s[..i]),
        None => s.to_string(),
    }
}

/// Default number of comparisons allowed in flight at once.
pub const DEFAULT_IN_FLIGHT: usize = 4;

/// Judges every pair with at most `in_flight` concurrent comparisons.
/// Results keep the input order.
pub fn judge_batch<J: Judge + ?Sized>(
    judge: &J,
    pairs: &[(Layout, Layout)],
    in_flight: usize,
) -> Vec<Result<JudgeDecision, JudgeError>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(in_flight.max(1))
        .build()
        .expect("thread pool construction");
    pool.install(|| pairs.par_iter().map(|(a, b)| judge.compare(a, b)).collect())
}
