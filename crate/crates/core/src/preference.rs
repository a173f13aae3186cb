//! Preference-pair construction: sample candidates, pick a pairing, filter
//! by quality, adjudicate, and persist winner/loser token sequences.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataio::{CanvasRecord, DatasetSample, ElementRecord};
use crate::judge::{judge_batch, Judge, JudgeError, DEFAULT_IN_FLIGHT};
use crate::layout::{detokenize_layout, tokenize_layout, Canvas, Element, Layout, LayoutError, TokenizedLayout};
use crate::metrics::{dataset_stats, quality, MetricsError};
use crate::policy::{featurize, sample, PolicyError, PolicyParams, PreferenceExample};

#[derive(Debug, thiserror::Error)]
pub enum PairingError {
    #[error("invalid pairing configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Judge(#[from] JudgeError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Layout(#[from] LayoutError),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("preference file is incomplete: {0}")]
    Partial(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairingConfig {
    /// Probability of pairing a model sample against ground truth.
    pub p_gt: f64,
    pub candidates_per_input: usize,
    pub temperature: f64,
    pub seed: u64,
    pub apply_quality_filter: bool,
    pub attempts_per_sample: usize,
    pub in_flight: usize,
}

impl Default for PairingConfig {
    fn default() -> Self {
        Self {
            p_gt: 0.5,
            candidates_per_input: 2,
            temperature: 1.0,
            seed: 0,
            apply_quality_filter: true,
            attempts_per_sample: 1,
            in_flight: DEFAULT_IN_FLIGHT,
        }
    }
}

impl PairingConfig {
    pub fn validate(&self) -> Result<(), PairingError> {
        if !(0.0..=1.0).contains(&self.p_gt) {
            return Err(PairingError::Config(format!("p_gt {} outside [0, 1]", self.p_gt)));
        }
        if self.candidates_per_input < 2 {
            return Err(PairingError::Config("candidates_per_input must be at least 2".into()));
        }
        if !(self.temperature > 0.0) {
            return Err(PairingError::Config(format!("temperature {} must be positive", self.temperature)));
        }
        if self.attempts_per_sample == 0 {
            return Err(PairingError::Config("attempts_per_sample must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    ModelVsModel,
    ModelVsGt,
}

/// One line of a preference dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreferencePair {
    pub sample_id: String,
    pub provenance: Provenance,
    pub judge_id: String,
    pub winner_tokens: Vec<u32>,
    pub loser_tokens: Vec<u32>,
    pub canvas: CanvasRecord,
    pub element_descriptors: Vec<ElementRecord>,
}

impl PreferencePair {
    pub fn elements(&self) -> Vec<Element> {
        self.element_descriptors.iter().map(ElementRecord::to_element).collect()
    }

    pub fn canvas(&self) -> Result<Canvas, LayoutError> {
        Canvas::new(self.canvas.w, self.canvas.h)
    }

    pub fn to_example(&self, bins: u32) -> Result<PreferenceExample, PairingError> {
        let canvas = self.canvas()?;
        let features = featurize(&canvas, &self.elements(), None, bins);
        Ok(PreferenceExample {
            features,
            winner: TokenizedLayout::new(self.winner_tokens.clone(), bins)?,
            loser: TokenizedLayout::new(self.loser_tokens.clone(), bins)?,
        })
    }

    /// Winner and loser as layouts on the pair's canvas.
    pub fn layouts(&self, bins: u32) -> Result<(Layout, Layout), PairingError> {
        let canvas = self.canvas()?;
        let predicted: Vec<Element> = self.elements().into_iter().filter(|e| e.kind.is_predicted()).collect();
        let w = decode_candidate(&TokenizedLayout::new(self.winner_tokens.clone(), bins)?, &predicted, canvas, bins)?;
        let l = decode_candidate(&TokenizedLayout::new(self.loser_tokens.clone(), bins)?, &predicted, canvas, bins)?;
        Ok((w, l))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SkipReason {
    IdenticalCandidates,
    QualityFilter,
    DegenerateElement,
    MissingGroundTruth,
    NoElements,
}

impl SkipReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::IdenticalCandidates => "identical_candidates",
            Self::QualityFilter => "quality_filter",
            Self::DegenerateElement => "degenerate_element",
            Self::MissingGroundTruth => "missing_ground_truth",
            Self::NoElements => "no_elements",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct PairingSummary {
    pub attempts: usize,
    pub kept: usize,
    pub skipped: BTreeMap<String, usize>,
    pub model_vs_model: usize,
    pub model_vs_gt: usize,
    /// Comparisons requested from the judge (cache hits included).
    pub judge_requests: usize,
    pub threshold: Option<f64>,
}

impl PairingSummary {
    pub fn skipped_total(&self) -> usize {
        self.skipped.values().sum()
    }

    fn skip(&mut self, reason: SkipReason) {
        *self.skipped.entry(reason.as_str().to_string()).or_default() += 1;
    }
}

/// Decodes tokens and clips every box to the canvas. Both judging and
/// replay see layouts produced by this function.
pub fn decode_candidate(
    tokens: &TokenizedLayout,
    predicted: &[Element],
    canvas: Canvas,
    bins: u32,
) -> Result<Layout, LayoutError> {
    Ok(detokenize_layout(tokens, predicted, canvas, bins)?.clipped())
}

/// Seeded RNG for one (sample, attempt) slot; independent of thread scheduling.
pub fn slot_rng(seed: u64, slot: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(slot);
    rng
}

/// `cfg.candidates_per_input` sampled token sequences and their layouts.
pub fn generate_candidates<R: Rng>(
    params: &PolicyParams,
    sample_: &DatasetSample,
    cfg: &PairingConfig,
    rng: &mut R,
) -> Result<Vec<(TokenizedLayout, Layout)>, PairingError> {
    let features = featurize(&sample_.canvas, &sample_.all_elements(), None, params.bins);
    let predicted = sample_.predicted_elements();
    (0..cfg.candidates_per_input)
        .map(|_| {
            let tokens = sample(params, &features, cfg.temperature, rng)?;
            let layout = decode_candidate(&tokens, &predicted, sample_.canvas, params.bins)?;
            Ok((tokens, layout))
        })
        .collect()
}

/// A pair awaiting adjudication; `first` is always a model sample.
#[derive(Debug, Clone)]
struct Candidate {
    sample_index: usize,
    provenance: Provenance,
    first: (TokenizedLayout, Layout),
    second: (TokenizedLayout, Layout),
    q: (f64, f64),
}

fn draw_pair(
    params: &PolicyParams,
    sample_: &DatasetSample,
    sample_index: usize,
    cfg: &PairingConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Result<Candidate, SkipReason>, PairingError> {
    if sample_.predicted_elements().is_empty() {
        return Ok(Err(SkipReason::NoElements));
    }
    let use_gt = rng.random_bool(cfg.p_gt);
    let mut cands = generate_candidates(params, sample_, cfg, rng)?;
    let i = rng.random_range(0..cands.len());
    let first = cands.swap_remove(i);
    let (provenance, second) = if use_gt {
        if !sample_.has_ground_truth() {
            return Ok(Err(SkipReason::MissingGroundTruth));
        }
        // quantized so that the stored tokens replay to the judged layout
        let gt = sample_.gt_layout().map_err(|e| PairingError::Config(e.to_string()))?;
        let tokens = tokenize_layout(&gt, params.bins)?;
        let layout = decode_candidate(&tokens, &sample_.predicted_elements(), sample_.canvas, params.bins)?;
        (Provenance::ModelVsGt, (tokens, layout))
    } else {
        let j = rng.random_range(0..cands.len());
        (Provenance::ModelVsModel, cands.swap_remove(j))
    };
    if first.0 == second.0 {
        return Ok(Err(SkipReason::IdenticalCandidates));
    }
    let q = match (quality(&first.1), quality(&second.1)) {
        (Ok(a), Ok(b)) => (a.q, b.q),
        (Err(MetricsError::DegenerateElement(_)), _) | (_, Err(MetricsError::DegenerateElement(_))) => {
            return Ok(Err(SkipReason::DegenerateElement));
        }
        (Err(e), _) | (_, Err(e)) => return Err(PairingError::Config(e.to_string())),
    };
    Ok(Ok(Candidate { sample_index, provenance, first, second, q }))
}

fn to_record(sample_: &DatasetSample, c: &Candidate, d: u8, judge_id: String) -> PreferencePair {
    let (winner, loser) = if d == 1 { (&c.first, &c.second) } else { (&c.second, &c.first) };
    PreferencePair {
        sample_id: sample_.id.clone(),
        provenance: c.provenance,
        judge_id,
        winner_tokens: winner.0.tokens.clone(),
        loser_tokens: loser.0.tokens.clone(),
        canvas: CanvasRecord { w: sample_.canvas.width, h: sample_.canvas.height },
        element_descriptors: sample_.elements.iter().map(|e| ElementRecord::from_element(&e.element, None)).collect(),
    }
}

/// Number of adjudicated pairs handed to the sink at a time.
const CHUNK: usize = 64;

/// Builds pairs for every (sample, attempt) slot and passes each kept pair
/// to `sink` in slot order.
///
/// Pass one draws all pairs and, when filtering, computes the `mean - std`
/// threshold over the quality of every drawn layout. Pass two judges the
/// survivors.
pub fn build_pairs_with<J, F>(
    samples: &[DatasetSample],
    params: &PolicyParams,
    judge: &J,
    cfg: &PairingConfig,
    mut sink: F,
) -> Result<PairingSummary, PairingError>
where
    J: Judge + ?Sized,
    F: FnMut(PreferencePair) -> Result<(), PairingError>,
{
    cfg.validate()?;
    let slots = samples.len() * cfg.attempts_per_sample;
    let drawn: Vec<_> = (0..slots)
        .into_par_iter()
        .map(|slot| {
            let index = slot / cfg.attempts_per_sample;
            draw_pair(params, &samples[index], index, cfg, &mut slot_rng(cfg.seed, slot as u64))
        })
        .collect::<Result<_, _>>()?;

    let mut summary = PairingSummary { attempts: slots, ..Default::default() };
    let pool: Vec<f64> = drawn.iter().flatten().flat_map(|c| [c.q.0, c.q.1]).collect();
    let stats = if cfg.apply_quality_filter && !pool.is_empty() {
        Some(dataset_stats(&pool).map_err(|e| PairingError::Config(e.to_string()))?)
    } else {
        None
    };
    summary.threshold = stats.map(|s| s.threshold);

    let mut survivors = Vec::new();
    for item in drawn {
        match item {
            Err(reason) => summary.skip(reason),
            Ok(c) if stats.is_some_and(|s| !(s.keeps(c.q.0) && s.keeps(c.q.1))) => summary.skip(SkipReason::QualityFilter),
            Ok(c) => survivors.push(c),
        }
    }

    for chunk in survivors.chunks(CHUNK) {
        let pairs: Vec<_> = chunk.iter().map(|c| (c.first.1.clone(), c.second.1.clone())).collect();
        summary.judge_requests += pairs.len();
        let decisions = judge_batch(judge, &pairs, cfg.in_flight);
        for (c, decision) in chunk.iter().zip(decisions) {
            let decision = decision?;
            match c.provenance {
                Provenance::ModelVsModel => summary.model_vs_model += 1,
                Provenance::ModelVsGt => summary.model_vs_gt += 1,
            }
            summary.kept += 1;
            sink(to_record(&samples[c.sample_index], c, decision.d, decision.judge_id))?;
        }
    }
    Ok(summary)
}

pub fn build_pairs<J: Judge + ?Sized>(
    samples: &[DatasetSample],
    params: &PolicyParams,
    judge: &J,
    cfg: &PairingConfig,
) -> Result<(Vec<PreferencePair>, PairingSummary), PairingError> {
    let mut pairs = Vec::new();
    let summary = build_pairs_with(samples, params, judge, cfg, |p| {
        pairs.push(p);
        Ok(())
    })?;
    Ok((pairs, summary))
}

/// Marker appended when dataset construction aborts midway.
pub const PARTIAL_MARKER_KEY: &str = "__partial__";

/// Streams pairs to a JSONL file. On failure a marker line naming the error
/// terminates the file so that readers reject it.
pub fn build_dataset<J: Judge + ?Sized>(
    samples: &[DatasetSample],
    params: &PolicyParams,
    judge: &J,
    cfg: &PairingConfig,
    out: &Path,
) -> Result<PairingSummary, PairingError> {
    if samples.is_empty() {
        return Err(PairingError::Config("no samples".into()));
    }
    let mut w = BufWriter::new(File::create(out)?);
    let result = build_pairs_with(samples, params, judge, cfg, |p| {
        serde_json::to_writer(&mut w, &p).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
        Ok(())
    });
    if let Err(e) = &result {
        let marker = serde_json::json!({ PARTIAL_MARKER_KEY: true, "error": e.to_string() });
        // best effort: the original error is what the caller needs to see
        let _ = writeln!(w, "{marker}");
    }
    w.flush()?;
    result
}

pub fn write_pairs<W: Write>(pairs: &[PreferencePair], mut out: W) -> Result<(), PairingError> {
    for p in pairs {
        serde_json::to_writer(&mut out, p).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn load_pairs(path: &Path) -> Result<Vec<PreferencePair>, PairingError> {
    let reader = BufReader::new(File::open(path)?);
    let mut pairs = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        if line.contains(PARTIAL_MARKER_KEY) {
            if let Ok(v) = serde_json::from_str::<serde_json::Value>(&line) {
                if v.get(PARTIAL_MARKER_KEY).is_some() {
                    return Err(PairingError::Partial(v["error"].as_str().unwrap_or("unknown").to_string()));
                }
            }
        }
        let pair: PreferencePair =
            serde_json::from_str(&line).map_err(|e| PairingError::Parse { line: i + 1, message: e.to_string() })?;
        if pair.winner_tokens.len() != pair.loser_tokens.len() || pair.winner_tokens == pair.loser_tokens {
            return Err(PairingError::Parse { line: i + 1, message: "winner and loser must differ and match in length".into() });
        }
        pairs.push(pair);
    }
    Ok(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{make_synthetic, SyntheticSpec, SyntheticStyle};
    use crate::judge::{compare_heuristic, CachedJudge, DecisionCache, HeuristicJudge};

    fn corpus(n: usize) -> Vec<DatasetSample> {
        make_synthetic(&SyntheticSpec::new(11, n, SyntheticStyle::GridAligned))
    }

    fn noisy_policy() -> PolicyParams {
        PolicyParams::random(224, 0.5, &mut ChaCha8Rng::seed_from_u64(3))
    }

    #[test]
    fn candidates_are_seeded_and_in_bounds() {
        let s = &corpus(1)[0];
        let p = noisy_policy();
        let cfg = PairingConfig::default();
        let a = generate_candidates(&p, s, &cfg, &mut slot_rng(1, 0)).unwrap();
        let b = generate_candidates(&p, s, &cfg, &mut slot_rng(1, 0)).unwrap();
        assert_eq!(a.len(), 2);
        assert_eq!(a.iter().map(|c| &c.0).collect::<Vec<_>>(), b.iter().map(|c| &c.0).collect::<Vec<_>>());
        for (_, l) in &a {
            for b in l.predicted_boxes() {
                assert!(b.left() >= -1e-9 && b.top() >= -1e-9);
                assert!(b.right() <= s.canvas.width + 1e-9 && b.bottom() <= s.canvas.height + 1e-9);
            }
        }
    }

    #[test]
    fn gt_beats_noisy_samples() {
        let samples = corpus(30);
        let cfg = PairingConfig { p_gt: 1.0, apply_quality_filter: false, ..Default::default() };
        let (pairs, summary) = build_pairs(&samples, &noisy_policy(), &HeuristicJudge, &cfg).unwrap();
        assert_eq!(summary.attempts, summary.kept + summary.skipped_total());
        assert_eq!(summary.model_vs_gt, pairs.len());
        for p in &pairs {
            let s = samples.iter().find(|s| s.id == p.sample_id).unwrap();
            let gt = tokenize_layout(&s.gt_layout().unwrap(), 224).unwrap();
            assert_eq!(p.winner_tokens, gt.tokens);
        }
    }

    #[test]
    fn accounting_and_replay() {
        let samples = corpus(40);
        let cfg = PairingConfig { attempts_per_sample: 3, ..Default::default() };
        let (pairs, summary) = build_pairs(&samples, &noisy_policy(), &HeuristicJudge, &cfg).unwrap();
        assert_eq!(summary.attempts, 120);
        assert_eq!(summary.kept + summary.skipped_total(), 120);
        assert_eq!(summary.kept, pairs.len());
        assert_eq!(summary.model_vs_model + summary.model_vs_gt, summary.kept);
        for p in &pairs {
            let (w, l) = p.layouts(224).unwrap();
            assert_eq!(compare_heuristic(&w, &l).unwrap().d, 1);
            assert!(quality(&w).unwrap().q >= quality(&l).unwrap().q);
        }
    }

    #[test]
    fn p_gt_zero_is_model_only() {
        let cfg = PairingConfig { p_gt: 0.0, ..Default::default() };
        let (pairs, _) = build_pairs(&corpus(20), &noisy_policy(), &HeuristicJudge, &cfg).unwrap();
        assert!(!pairs.is_empty());
        assert!(pairs.iter().all(|p| p.provenance == Provenance::ModelVsModel));
    }

    #[test]
    fn identical_candidates_are_skipped() {
        // a near-deterministic policy samples the same tokens twice
        let mut p = PolicyParams::zeros(224);
        let bias = p.classes() * p.dim;
        for a in 0..4 {
            let off = a * p.head_len() + bias;
            p.data[off + 5 + 20 * a] = 50.0;
        }
        let cfg = PairingConfig { p_gt: 0.0, temperature: 1e-6, apply_quality_filter: false, ..Default::default() };
        let (pairs, summary) = build_pairs(&corpus(5), &p, &HeuristicJudge, &cfg).unwrap();
        assert!(pairs.is_empty());
        assert_eq!(summary.skipped["identical_candidates"], 5);
    }

    #[test]
    fn dataset_file_roundtrip_and_cache_reuse() {
        let dir = tempfile::tempdir().unwrap();
        let samples = corpus(20);
        let cfg = PairingConfig::default();
        let judge = CachedJudge::new(HeuristicJudge, DecisionCache::open(&dir.path().join("c.jsonl")).unwrap());
        let path = dir.path().join("pairs.jsonl");
        let s1 = build_dataset(&samples, &noisy_policy(), &judge, &cfg, &path).unwrap();
        let calls = judge.judge_calls();
        assert_eq!(calls, s1.judge_requests);
        let bytes = std::fs::read(&path).unwrap();
        build_dataset(&samples, &noisy_policy(), &judge, &cfg, &path).unwrap();
        assert_eq!(judge.judge_calls(), calls);
        assert_eq!(std::fs::read(&path).unwrap(), bytes);
        assert_eq!(load_pairs(&path).unwrap().len(), s1.kept);
    }

    #[test]
    fn partial_marker_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.jsonl");
        std::fs::write(&path, "{\"__partial__\": true, \"error\": \"boom\"}\n").unwrap();
        assert!(matches!(load_pairs(&path), Err(PairingError::Partial(_))));
    }
}
