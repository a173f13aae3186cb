//! Evaluation harness: mean IoU in three conditioning modes and judge win rate.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::dataio::{DataError, DatasetSample};
use crate::judge::{Judge, JudgeError};
use crate::layout::{detokenize_layout, iou, tokenize_box, BBox, ElementKind, LayoutError};
use crate::policy::{featurize, greedy, PolicyParams};
use crate::prompt::KnownPositions;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Layout(#[from] LayoutError),
    #[error("predictor returned {got} boxes for {expected} elements in `{sample}`")]
    BoxCount { sample: String, got: usize, expected: usize },
    #[error("no evaluable instances")]
    Empty,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalMode {
    /// Predict every element.
    All,
    /// Predict one text element with everything else fixed.
    Single,
    /// Predict all text elements with non-text elements fixed.
    Multiple,
}

impl std::str::FromStr for EvalMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "all" => Ok(Self::All),
            "single" => Ok(Self::Single),
            "multiple" => Ok(Self::Multiple),
            other => Err(format!("unknown eval mode `{other}` (all|single|multiple)")),
        }
    }
}

/// Produces one box per non-background element of a sample, in dataset
/// order. Entries named in `known` are given as ground-truth tokens.
pub trait Predictor: Sync {
    fn predict(&self, sample: &DatasetSample, known: &KnownPositions) -> Result<Vec<BBox>, EvalError>;
}

/// Greedy decoding of the policy, conditioned on known positions.
#[derive(Debug, Clone)]
pub struct PolicyPredictor<'a> {
    pub params: &'a PolicyParams,
}

impl Predictor for PolicyPredictor<'_> {
    fn predict(&self, sample: &DatasetSample, known: &KnownPositions) -> Result<Vec<BBox>, EvalError> {
        let elements = sample.all_elements();
        let known = (!known.is_empty()).then_some(known);
        let features = featurize(&sample.canvas, &elements, known, self.params.bins);
        let tokens = greedy(self.params, &features);
        let predicted = sample.predicted_elements();
        let layout = detokenize_layout(&tokens, &predicted, sample.canvas, self.params.bins)?.clipped();
        Ok(layout.predicted_boxes())
    }
}

/// Returns the ground-truth boxes unchanged.
#[derive(Debug, Clone, Copy, Default)]
pub struct GroundTruthPredictor;

impl Predictor for GroundTruthPredictor {
    fn predict(&self, sample: &DatasetSample, _known: &KnownPositions) -> Result<Vec<BBox>, EvalError> {
        Ok(sample.gt_boxes()?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InstanceScore {
    pub instance_id: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub mode: EvalMode,
    pub mean_iou_percent: f64,
    pub n_instances: usize,
    /// Samples contributing no instance in this mode.
    pub skipped_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WinRateReport {
    pub win_rate_percent: f64,
    pub wins: usize,
    pub judged: usize,
    pub failures: usize,
}

/// Ground-truth tokens of the given elements.
fn known_positions(sample: &DatasetSample, bins: u32, fixed: &[usize]) -> Result<KnownPositions, EvalError> {
    let predicted: Vec<_> = sample.elements.iter().filter(|e| e.element.kind.is_predicted()).collect();
    fixed
        .iter()
        .map(|&i| {
            let e = predicted[i];
            let b = e.gt_bbox.ok_or_else(|| DataError::MissingGroundTruth(sample.id.clone()))?;
            Ok((e.element.id.clone(), tokenize_box(&b, &sample.canvas, bins)?))
        })
        .collect()
}

fn score_targets(
    sample: &DatasetSample,
    predictor: &dyn Predictor,
    known: &KnownPositions,
    gt: &[BBox],
    targets: &[usize],
) -> Result<f64, EvalError> {
    let pred = predictor.predict(sample, known)?;
    if pred.len() != gt.len() {
        return Err(EvalError::BoxCount { sample: sample.id.clone(), got: pred.len(), expected: gt.len() });
    }
    Ok(targets.iter().map(|&t| iou(&pred[t], &gt[t])).sum::<f64>() / targets.len() as f64)
}

/// Per-sample instance scores; an empty vector means the sample is skipped.
fn sample_instances(
    sample: &DatasetSample,
    predictor: &dyn Predictor,
    mode: EvalMode,
    bins: u32,
) -> Result<Vec<InstanceScore>, EvalError> {
    let gt = sample.gt_boxes()?;
    let kinds: Vec<ElementKind> = sample.predicted_elements().iter().map(|e| e.kind).collect();
    let text: Vec<usize> = (0..kinds.len()).filter(|&i| kinds[i] == ElementKind::Text).collect();
    let ids: Vec<String> = sample.predicted_elements().into_iter().map(|e| e.id).collect();
    match mode {
        EvalMode::All => {
            if gt.is_empty() {
                return Ok(vec![]);
            }
            let all: Vec<usize> = (0..gt.len()).collect();
            let score = score_targets(sample, predictor, &KnownPositions::new(), &gt, &all)?;
            Ok(vec![InstanceScore { instance_id: sample.id.clone(), score }])
        }
        EvalMode::Single => text
            .iter()
            .map(|&t| {
                let fixed: Vec<usize> = (0..gt.len()).filter(|&i| i != t).collect();
                let known = known_positions(sample, bins, &fixed)?;
                let score = score_targets(sample, predictor, &known, &gt, &[t])?;
                Ok(InstanceScore { instance_id: format!("{}#{}", sample.id, ids[t]), score })
            })
            .collect(),
        EvalMode::Multiple => {
            if text.is_empty() {
                return Ok(vec![]);
            }
            let fixed: Vec<usize> = (0..gt.len()).filter(|i| !text.contains(i)).collect();
            let known = known_positions(sample, bins, &fixed)?;
            let score = score_targets(sample, predictor, &known, &gt, &text)?;
            Ok(vec![InstanceScore { instance_id: sample.id.clone(), score }])
        }
    }
}

/// Macro-averaged IoU in percent plus the per-instance scores in dataset order.
/// `bins` quantizes the known positions handed to the predictor.
pub fn mean_iou(
    samples: &[DatasetSample],
    predictor: &dyn Predictor,
    mode: EvalMode,
    bins: u32,
) -> Result<(EvalReport, Vec<InstanceScore>), EvalError> {
    let per_sample: Vec<Vec<InstanceScore>> = samples
        .par_iter()
        .map(|s| sample_instances(s, predictor, mode, bins))
        .collect::<Result<_, _>>()?;
    let skipped_samples = per_sample.iter().filter(|v| v.is_empty()).count();
    let instances: Vec<InstanceScore> = per_sample.into_iter().flatten().collect();
    if instances.is_empty() {
        return Err(EvalError::Empty);
    }
    let mean = instances.iter().map(|i| i.score).sum::<f64>() / instances.len() as f64;
    let report = EvalReport { mode, mean_iou_percent: 100.0 * mean, n_instances: instances.len(), skipped_samples };
    Ok((report, instances))
}

/// Judges each predicted layout (first input) against ground truth (second
/// input). Failed comparisons are excluded from the rate and counted.
/// Instance scores are 1 for a win, 0 for a loss, NaN for a failure.
pub fn win_rate<J: Judge + ?Sized>(
    samples: &[DatasetSample],
    predictor: &dyn Predictor,
    judge: &J,
    in_flight: usize,
) -> Result<(WinRateReport, Vec<InstanceScore>), EvalError> {
    let pairs = samples
        .par_iter()
        .map(|s| {
            let pred = predictor.predict(s, &KnownPositions::new())?;
            Ok((s.layout_with(&pred)?, s.gt_layout()?))
        })
        .collect::<Result<Vec<_>, EvalError>>()?;
    let decisions = crate::judge::judge_batch(judge, &pairs, in_flight);
    let mut report = WinRateReport { win_rate_percent: 0.0, wins: 0, judged: 0, failures: 0 };
    let mut scores = Vec::with_capacity(samples.len());
    for (s, d) in samples.iter().zip(decisions) {
        let score = match d {
            Ok(d) => {
                report.judged += 1;
                if d.d == 1 {
                    report.wins += 1;
                    1.0
                } else {
                    0.0
                }
            }
            Err(e) => {
                log_failure(&s.id, &e);
                report.failures += 1;
                f64::NAN
            }
        };
        scores.push(InstanceScore { instance_id: s.id.clone(), score });
    }
    if report.judged == 0 {
        return Err(EvalError::Empty);
    }
    report.win_rate_percent = 100.0 * report.wins as f64 / report.judged as f64;
    if report.failures > 0 {
        log::warn!("{} of {} comparisons failed and are excluded", report.failures, samples.len());
    }
    Ok((report, scores))
}

fn log_failure(id: &str, e: &JudgeError) {
    log::warn!("judging `{id}` failed: {e}");
}

/// `instance_id,score` CSV with a header row.
pub fn write_instances_csv<W: Write>(scores: &[InstanceScore], mut out: W) -> std::io::Result<()> {
    writeln!(out, "instance_id,score")?;
    for s in scores {
        writeln!(out, "{},{}", s.instance_id, s.score)?;
    }
    Ok(())
}
