//! JSONL dataset schema, loading/saving, and the synthetic layout corpus.
//!
//! One sample per line:
//! `{"id":..,"canvas":{"w":..,"h":..},"elements":[{"id":..,"kind":..,"text":..,"asset":..,"aspect":..,"bbox":[x,y,w,h]}]}`
//! with optional fields omitted and boxes in center format, pixels.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::layout::{BBox, Canvas, Element, ElementKind, Layout, LayoutError, Placement};

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("line {line}: parse error: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: schema error: {message}")]
    Schema { line: usize, message: String },
    #[error("sample `{0}` lacks ground-truth boxes")]
    MissingGroundTruth(String),
    #[error(transparent)]
    Layout(#[from] LayoutError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, DataError>;

#[derive(Debug, Clone, PartialEq)]
pub struct SampleElement {
    pub element: Element,
    pub gt_bbox: Option<BBox>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSample {
    pub id: String,
    pub canvas: Canvas,
    pub elements: Vec<SampleElement>,
}

impl DatasetSample {
    pub fn all_elements(&self) -> Vec<Element> {
        self.elements.iter().map(|e| e.element.clone()).collect()
    }

    /// Non-background elements, in dataset order.
    pub fn predicted_elements(&self) -> Vec<Element> {
        self.elements
            .iter()
            .filter(|e| e.element.kind.is_predicted())
            .map(|e| e.element.clone())
            .collect()
    }

    pub fn has_ground_truth(&self) -> bool {
        self.elements.iter().all(|e| e.gt_bbox.is_some())
    }

    /// Ground-truth boxes of the non-background elements.
    pub fn gt_boxes(&self) -> Result<Vec<BBox>> {
        self.elements
            .iter()
            .filter(|e| e.element.kind.is_predicted())
            .map(|e| e.gt_bbox.ok_or_else(|| DataError::MissingGroundTruth(self.id.clone())))
            .collect()
    }

    /// The full ground-truth layout including backgrounds.
    pub fn gt_layout(&self) -> Result<Layout> {
        let placements = self
            .elements
            .iter()
            .map(|e| {
                Ok(Placement {
                    element: e.element.clone(),
                    bbox: e.gt_bbox.ok_or_else(|| DataError::MissingGroundTruth(self.id.clone()))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Layout::new(self.canvas, placements)?)
    }

    /// Layout made of this sample's background placements followed by the
    /// given boxes for the predicted elements.
    pub fn layout_with(&self, predicted: &[BBox]) -> Result<Layout> {
        let mut boxes = predicted.iter();
        let mut placements = Vec::with_capacity(self.elements.len());
        for e in &self.elements {
            let bbox = if e.element.kind.is_predicted() {
                *boxes.next().ok_or_else(|| {
                    LayoutError::MalformedOutput(format!("too few boxes for sample `{}`", self.id))
                })?
            } else {
                e.gt_bbox.unwrap_or_else(|| self.canvas.full_box())
            };
            placements.push(Placement { element: e.element.clone(), bbox });
        }
        if boxes.next().is_some() {
            return Err(LayoutError::MalformedOutput(format!("too many boxes for sample `{}`", self.id)).into());
        }
        Ok(Layout::new(self.canvas, placements)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CanvasRecord {
    pub w: f64,
    pub h: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ElementRecord {
    pub id: String,
    pub kind: ElementKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub asset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aspect: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bbox: Option<[f64; 4]>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleRecord {
    pub id: String,
    pub canvas: CanvasRecord,
    pub elements: Vec<ElementRecord>,
}

impl ElementRecord {
    pub fn from_element(e: &Element, bbox: Option<BBox>) -> Self {
        Self {
            id: e.id.clone(),
            kind: e.kind,
            text: e.text.clone(),
            asset: e.asset_ref.clone(),
            aspect: e.intrinsic_aspect,
            bbox: bbox.map(|b| [b.x, b.y, b.w, b.h]),
        }
    }

    pub fn to_element(&self) -> Element {
        Element {
            id: self.id.clone(),
            kind: self.kind,
            text: self.text.clone(),
            asset_ref: self.asset.clone(),
            intrinsic_aspect: self.aspect,
        }
    }
}

impl From<&DatasetSample> for SampleRecord {
    fn from(s: &DatasetSample) -> Self {
        Self {
            id: s.id.clone(),
            canvas: CanvasRecord { w: s.canvas.width, h: s.canvas.height },
            elements: s.elements.iter().map(|e| ElementRecord::from_element(&e.element, e.gt_bbox)).collect(),
        }
    }
}

impl SampleRecord {
    pub fn into_sample(self) -> std::result::Result<DatasetSample, String> {
        let canvas = Canvas::new(self.canvas.w, self.canvas.h).map_err(|e| e.to_string())?;
        let mut ids = HashSet::new();
        let mut elements = Vec::with_capacity(self.elements.len());
        for r in &self.elements {
            if !ids.insert(r.id.clone()) {
                return Err(format!("duplicate element id `{}`", r.id));
            }
            let element = r.to_element();
            element.validate().map_err(|e| e.to_string())?;
            let gt_bbox = match r.bbox {
                Some([x, y, w, h]) => {
                    let b = BBox::new(x, y, w, h);
                    if !b.is_finite() || w < 0.0 || h < 0.0 {
                        return Err(format!("element `{}` has an invalid box", r.id));
                    }
                    Some(b)
                }
                None => None,
            };
            elements.push(SampleElement { element, gt_bbox });
        }
        Ok(DatasetSample { id: self.id, canvas, elements })
    }
}

/// Parses one dataset line; `line` is 1-based and only used for errors.
pub fn parse_sample(text: &str, line: usize) -> Result<DatasetSample> {
    let record: SampleRecord =
        serde_json::from_str(text).map_err(|e| DataError::Parse { line, message: e.to_string() })?;
    record.into_sample().map_err(|message| DataError::Schema { line, message })
}

pub fn load_dataset(path: &Path) -> Result<Vec<DatasetSample>> {
    let reader = BufReader::new(File::open(path)?);
    let mut samples = Vec::new();
    let mut ids = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let sample = parse_sample(&line, line_no)?;
        if !ids.insert(sample.id.clone()) {
            return Err(DataError::Schema { line: line_no, message: format!("duplicate sample id `{}`", sample.id) });
        }
        samples.push(sample);
    }
    Ok(samples)
}

pub fn write_dataset<W: Write>(samples: &[DatasetSample], mut out: W) -> Result<()> {
    for s in samples {
        let line = serde_json::to_string(&SampleRecord::from(s)).expect("dataset records always serialize");
        out.write_all(line.as_bytes())?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn save_dataset(samples: &[DatasetSample], path: &Path) -> Result<()> {
    write_dataset(samples, BufWriter::new(File::create(path)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticStyle {
    GridAligned,
    Jittered,
    Random,
}

impl std::str::FromStr for SyntheticStyle {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "grid_aligned" => Ok(Self::GridAligned),
            "jittered" => Ok(Self::Jittered),
            "random" => Ok(Self::Random),
            other => Err(format!("unknown style `{other}` (grid_aligned|jittered|random)")),
        }
    }
}

impl std::fmt::Display for SyntheticStyle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::GridAligned => "grid_aligned",
            Self::Jittered => "jittered",
            Self::Random => "random",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub seed: u64,
    pub n_samples: usize,
    /// Inclusive element-count range. Grid layouts need at least 4
    /// elements and raise the lower bound accordingly.
    pub elements_per_sample: (usize, usize),
    pub style: SyntheticStyle,
    pub canvas_sizes: Vec<(u32, u32)>,
    /// Maximum per-coordinate noise in pixels for the jittered style.
    pub jitter_px: u32,
    /// Probability that a sample starts with a full-canvas background.
    pub background_prob: f64,
    /// Fraction of samples whose boxes are collapsed onto one shared box.
    pub degenerate_fraction: f64,
}

impl SyntheticSpec {
    pub fn new(seed: u64, n_samples: usize, style: SyntheticStyle) -> Self {
        Self {
            seed,
            n_samples,
            elements_per_sample: (4, 6),
            style,
            canvas_sizes: vec![(224, 224), (448, 224), (320, 240), (240, 320)],
            jitter_px: 8,
            background_prob: 0.25,
            degenerate_fraction: 0.0,
        }
    }
}

const WORDS: &[&str] = &[
    "SUMMER", "SALE", "GRAND", "OPENING", "FRESH", "COFFEE", "MUSIC", "FESTIVAL", "NEW", "ARRIVALS",
    "DESIGN", "WEEK", "LIMITED", "OFFER", "JOIN", "US", "TODAY", "SPRING", "COLLECTION", "LIVE",
];

fn random_text(rng: &mut ChaCha8Rng) -> String {
    let n = rng.random_range(1..=3);
    (0..n).map(|_| *WORDS.choose(rng).expect("word list is nonempty")).collect::<Vec<_>>().join(" ")
}

fn visual_kind(rng: &mut ChaCha8Rng) -> ElementKind {
    if rng.random_bool(0.7) {
        ElementKind::Image
    } else {
        ElementKind::Shape
    }
}

fn corners(l: i64, t: i64, r: i64, b: i64) -> BBox {
    BBox::from_corners(l as f64, t as f64, r as f64, b as f64)
}

/// Two-row grid: visual elements on top, text below, listed column by
/// column. With an odd count the last text cell spans the last two
/// columns. Every element shares a left/right edge with a column mate and
/// a top edge with a row mate, and cells only touch.
fn grid_layout(rng: &mut ChaCha8Rng, w: i64, h: i64, n: usize) -> Vec<(Element, BBox)> {
    let cols = n.div_ceil(2);
    let mx = (w as f64 * 0.08).round() as i64;
    let my = (h as f64 * 0.08).round() as i64;
    let xs: Vec<i64> = (0..=cols)
        .map(|k| mx + ((w - 2 * mx) as f64 * k as f64 / cols as f64).round() as i64)
        .collect();
    let split = my + ((h - 2 * my) as f64 * 0.6).round() as i64;
    let (top, bottom) = (my, h - my);
    let merged = n % 2 == 1;
    let mut out = Vec::with_capacity(n);
    for k in 0..cols {
        let kind = visual_kind(rng);
        let bbox = corners(xs[k], top, xs[k + 1], split);
        let aspect = ((bbox.w / bbox.h) * 100.0).round() / 100.0;
        let mut el = Element::visual(format!("e{}", out.len()), kind);
        if kind == ElementKind::Image {
            el = el.with_aspect(aspect);
        }
        out.push((el, bbox));
        let text_cols = if merged { cols - 1 } else { cols };
        if k < text_cols {
            let right = if merged && k == cols - 2 { xs[cols] } else { xs[k + 1] };
            out.push((Element::text(format!("e{}", out.len()), random_text(rng)), corners(xs[k], split, right, bottom)));
        }
    }
    out
}

fn jitter(rng: &mut ChaCha8Rng, b: BBox, j: i64) -> BBox {
    let mut d = || if j == 0 { 0.0 } else { rng.random_range(-j..=j) as f64 };
    let (dx, dy, dw, dh) = (d(), d(), d(), d());
    BBox::new(b.x + dx, b.y + dy, (b.w + dw).max(2.0), (b.h + dh).max(2.0))
}

fn random_layout(rng: &mut ChaCha8Rng, w: i64, h: i64, n: usize) -> Vec<(Element, BBox)> {
    (0..n)
        .map(|i| {
            let bw = ((w as f64) * rng.random_range(0.1..0.6)).round().max(2.0) as i64;
            let bh = ((h as f64) * rng.random_range(0.1..0.5)).round().max(2.0) as i64;
            let l = rng.random_range(0..=(w - bw));
            let t = rng.random_range(0..=(h - bh));
            let el = if rng.random_bool(0.4) {
                Element::text(format!("e{i}"), random_text(rng))
            } else {
                let kind = visual_kind(rng);
                let el = Element::visual(format!("e{i}"), kind);
                if kind == ElementKind::Image {
                    el.with_aspect(((bw as f64 / bh as f64) * 100.0).round() / 100.0)
                } else {
                    el
                }
            };
            (el, corners(l, t, l + bw, t + bh))
        })
        .collect()
}

/// Deterministic synthetic corpus; a pure function of `spec`.
pub fn make_synthetic(spec: &SyntheticSpec) -> Vec<DatasetSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let sizes = if spec.canvas_sizes.is_empty() { vec![(224, 224)] } else { spec.canvas_sizes.clone() };
    let (mut lo, mut hi) = spec.elements_per_sample;
    if hi < lo {
        std::mem::swap(&mut lo, &mut hi);
    }
    if spec.style != SyntheticStyle::Random {
        lo = lo.max(4);
        hi = hi.max(lo);
    }
    lo = lo.max(1);
    (0..spec.n_samples)
        .map(|i| {
            let (w, h) = *sizes.choose(&mut rng).expect("nonempty sizes");
            let (w, h) = (w.max(16) as i64, h.max(16) as i64);
            let n = rng.random_range(lo..=hi);
            let mut placed = match spec.style {
                SyntheticStyle::GridAligned => grid_layout(&mut rng, w, h, n),
                SyntheticStyle::Jittered => {
                    let grid = grid_layout(&mut rng, w, h, n);
                    grid.into_iter().map(|(e, b)| (e, jitter(&mut rng, b, spec.jitter_px as i64))).collect()
                }
                SyntheticStyle::Random => random_layout(&mut rng, w, h, n),
            };
            if spec.degenerate_fraction > 0.0 && rng.random_bool(spec.degenerate_fraction.clamp(0.0, 1.0)) {
                let collapsed = random_layout(&mut rng, w, h, 1)[0].1;
                for p in &mut placed {
                    p.1 = collapsed;
                }
            }
            let canvas = Canvas { width: w as f64, height: h as f64 };
            let mut elements = Vec::with_capacity(placed.len() + 1);
            if spec.background_prob > 0.0 && rng.random_bool(spec.background_prob.clamp(0.0, 1.0)) {
                elements.push(SampleElement {
                    element: Element::visual("bg", ElementKind::Background),
                    gt_bbox: Some(canvas.full_box()),
                });
            }
            elements.extend(placed.into_iter().map(|(element, b)| SampleElement { element, gt_bbox: Some(b) }));
            DatasetSample { id: format!("{}-{}-{i:05}", spec.style, spec.seed), canvas, elements }
        })
        .collect()
}
