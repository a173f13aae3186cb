//! Canvases, elements, center-format boxes, position-token binning and
//! rectangle geometry.
//!
//! Coordinates are pixels. A box stores its center and extent; corner
//! coordinates are derived only inside geometry routines.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Number of position bins used throughout training and evaluation.
pub const DEFAULT_BINS: u32 = 224;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum LayoutError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("token {token} outside alphabet 0..={bins}")]
    InvalidToken { token: u32, bins: u32 },
    #[error("malformed output: {0}")]
    MalformedOutput(String),
    #[error("duplicate element id `{0}`")]
    DuplicateId(String),
}

pub type Result<T> = std::result::Result<T, LayoutError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Canvas {
    pub width: f64,
    pub height: f64,
}

impl Canvas {
    pub fn new(width: f64, height: f64) -> Result<Self> {
        if !(width > 0.0 && height > 0.0) || !width.is_finite() || !height.is_finite() {
            return Err(LayoutError::InvalidArgument(format!(
                "canvas must have positive finite size, got {width}x{height}"
            )));
        }
        Ok(Self { width, height })
    }

    pub fn aspect(&self) -> f64 {
        self.width / self.height
    }

    /// A box covering the whole canvas.
    pub fn full_box(&self) -> BBox {
        BBox::new(self.width / 2.0, self.height / 2.0, self.width, self.height)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ElementKind {
    Image,
    Text,
    Shape,
    Background,
}

impl ElementKind {
    pub const ALL: [ElementKind; 4] = [
        ElementKind::Image,
        ElementKind::Text,
        ElementKind::Shape,
        ElementKind::Background,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ElementKind::Image => "image",
            ElementKind::Text => "text",
            ElementKind::Shape => "shape",
            ElementKind::Background => "background",
        }
    }

    /// Position in the one-hot kind encoding.
    pub fn index(&self) -> usize {
        match self {
            ElementKind::Image => 0,
            ElementKind::Text => 1,
            ElementKind::Shape => 2,
            ElementKind::Background => 3,
        }
    }

    /// Background elements form the canvas base and are never placed.
    pub fn is_predicted(&self) -> bool {
        *self != ElementKind::Background
    }
}

impl fmt::Display for ElementKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ElementKind {
    type Err = LayoutError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "image" => Ok(ElementKind::Image),
            "text" => Ok(ElementKind::Text),
            "shape" => Ok(ElementKind::Shape),
            "background" => Ok(ElementKind::Background),
            other => Err(LayoutError::InvalidArgument(format!("unknown element kind `{other}`"))),
        }
    }
}

/// A design element, independent of where it is placed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Element {
    pub id: String,
    pub kind: ElementKind,
    pub text: Option<String>,
    pub asset_ref: Option<String>,
    /// Intrinsic width / height of the asset, when known.
    pub intrinsic_aspect: Option<f64>,
}

impl Element {
    pub fn text(id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            kind: ElementKind::Text,
            text: Some(text.into()),
            asset_ref: None,
            intrinsic_aspect: None,
        }
    }

    pub fn visual(id: impl Into<String>, kind: ElementKind) -> Self {
        debug_assert!(kind != ElementKind::Text);
        Self {
            id: id.into(),
            kind,
            text: None,
            asset_ref: None,
            intrinsic_aspect: None,
        }
    }

    pub fn with_asset(mut self, asset_ref: impl Into<String>) -> Self {
        self.asset_ref = Some(asset_ref.into());
        self
    }

    pub fn with_aspect(mut self, aspect: f64) -> Self {
        self.intrinsic_aspect = Some(aspect);
        self
    }

    pub fn validate(&self) -> Result<()> {
        match (self.kind, &self.text) {
            (ElementKind::Text, None) => Err(LayoutError::InvalidArgument(format!(
                "text element `{}` has no text",
                self.id
            ))),
            (kind, Some(_)) if kind != ElementKind::Text => Err(LayoutError::InvalidArgument(
                format!("{kind} element `{}` carries text", self.id),
            )),
            _ => match self.intrinsic_aspect {
                Some(a) if !(a > 0.0 && a.is_finite()) => Err(LayoutError::InvalidArgument(
                    format!("element `{}` has non-positive aspect {a}", self.id),
                )),
                _ => Ok(()),
            },
        }
    }
}

/// Axis-aligned box in center format: `(x, y)` is the center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self { x, y, w, h }
    }

    pub fn from_corners(left: f64, top: f64, right: f64, bottom: f64) -> Self {
        Self {
            x: (left + right) / 2.0,
            y: (top + bottom) / 2.0,
            w: right - left,
            h: bottom - top,
        }
    }

    pub fn left(&self) -> f64 {
        self.x - self.w / 2.0
    }

    pub fn right(&self) -> f64 {
        self.x + self.w / 2.0
    }

    pub fn top(&self) -> f64 {
        self.y - self.h / 2.0
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h / 2.0
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.w.is_finite() && self.h.is_finite()
    }

    /// The same box expressed in canvas-relative units.
    pub fn normalized(&self, canvas: &Canvas) -> BBox {
        BBox::new(
            self.x / canvas.width,
            self.y / canvas.height,
            self.w / canvas.width,
            self.h / canvas.height,
        )
    }

    /// The part of the box inside the canvas. A box whose center lies on the
    /// canvas keeps positive area.
    pub fn clipped(&self, canvas: &Canvas) -> BBox {
        BBox::from_corners(
            self.left().clamp(0.0, canvas.width),
            self.top().clamp(0.0, canvas.height),
            self.right().clamp(0.0, canvas.width),
            self.bottom().clamp(0.0, canvas.height),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Placement {
    pub element: Element,
    pub bbox: BBox,
}

/// A canvas with placed elements. Placement order is draw order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Layout {
    pub canvas: Canvas,
    pub placements: Vec<Placement>,
}

impl Layout {
    pub fn new(canvas: Canvas, placements: Vec<Placement>) -> Result<Self> {
        let mut seen = HashSet::new();
        for p in &placements {
            if !seen.insert(p.element.id.as_str()) {
                return Err(LayoutError::DuplicateId(p.element.id.clone()));
            }
        }
        Ok(Self { canvas, placements })
    }

    pub fn empty(canvas: Canvas) -> Self {
        Self { canvas, placements: Vec::new() }
    }

    /// Placements that are prediction targets (everything but backgrounds).
    pub fn predicted(&self) -> impl Iterator<Item = &Placement> {
        self.placements.iter().filter(|p| p.element.kind.is_predicted())
    }

    pub fn predicted_boxes(&self) -> Vec<BBox> {
        self.predicted().map(|p| p.bbox).collect()
    }

    /// Every box clipped to the canvas.
    pub fn clipped(mut self) -> Self {
        for p in &mut self.placements {
            p.bbox = p.bbox.clipped(&self.canvas);
        }
        self
    }
}

/// Position tokens grouped `(x, y, w, h)` per predicted element.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenizedLayout {
    pub tokens: Vec<u32>,
    pub bins: u32,
}

impl TokenizedLayout {
    pub fn new(tokens: Vec<u32>, bins: u32) -> Result<Self> {
        if tokens.len() % 4 != 0 {
            return Err(LayoutError::MalformedOutput(format!(
                "token count {} is not a multiple of 4",
                tokens.len()
            )));
        }
        if let Some(&token) = tokens.iter().find(|&&t| t > bins) {
            return Err(LayoutError::InvalidToken { token, bins });
        }
        Ok(Self { tokens, bins })
    }

    pub fn element_count(&self) -> usize {
        self.tokens.len() / 4
    }

    pub fn element(&self, i: usize) -> [u32; 4] {
        let t = &self.tokens[4 * i..4 * i + 4];
        [t[0], t[1], t[2], t[3]]
    }

    /// Literal token names, e.g. `pos_112 pos_56 pos_80 pos_40`.
    pub fn element_names(&self, i: usize) -> String {
        self.element(i)
            .iter()
            .map(|t| format!("pos_{t}"))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Maps a coordinate to its position token: `clamp(floor(a / extent * bins), 0, bins)`.
///
/// Coordinates outside `[0, extent]` are clamped first, so `a = extent`
/// maps to the top token `bins`.
pub fn bin(a: f64, extent: f64, bins: u32) -> Result<u32> {
    if !(extent > 0.0) || !extent.is_finite() {
        return Err(LayoutError::InvalidArgument(format!("extent must be positive, got {extent}")));
    }
    if bins == 0 {
        return Err(LayoutError::InvalidArgument("bin count must be at least 1".into()));
    }
    if a.is_nan() {
        return Err(LayoutError::InvalidArgument("coordinate is NaN".into()));
    }
    let a = a.clamp(0.0, extent);
    let t = (a / extent * bins as f64).floor();
    Ok((t as u32).min(bins))
}

/// Bin-center reconstruction `min((t + 0.5) / bins * extent, extent)`.
pub fn unbin(token: u32, extent: f64, bins: u32) -> Result<f64> {
    if !(extent > 0.0) || bins == 0 {
        return Err(LayoutError::InvalidArgument(format!(
            "need positive extent and bins, got {extent} and {bins}"
        )));
    }
    if token > bins {
        return Err(LayoutError::InvalidToken { token, bins });
    }
    Ok(((token as f64 + 0.5) / bins as f64 * extent).min(extent))
}

pub fn tokenize_box(b: &BBox, canvas: &Canvas, bins: u32) -> Result<[u32; 4]> {
    Ok([
        bin(b.x, canvas.width, bins)?,
        bin(b.y, canvas.height, bins)?,
        bin(b.w, canvas.width, bins)?,
        bin(b.h, canvas.height, bins)?,
    ])
}

pub fn detokenize_box(t: [u32; 4], canvas: &Canvas, bins: u32) -> Result<BBox> {
    Ok(BBox::new(
        unbin(t[0], canvas.width, bins)?,
        unbin(t[1], canvas.height, bins)?,
        unbin(t[2], canvas.width, bins)?,
        unbin(t[3], canvas.height, bins)?,
    ))
}

/// Tokenizes every non-background placement in draw order.
pub fn tokenize_layout(layout: &Layout, bins: u32) -> Result<TokenizedLayout> {
    let mut tokens = Vec::with_capacity(layout.placements.len() * 4);
    for p in layout.predicted() {
        tokens.extend_from_slice(&tokenize_box(&p.bbox, &layout.canvas, bins)?);
    }
    Ok(TokenizedLayout { tokens, bins })
}

/// Inverse of [`tokenize_layout`]. `elements` are the predicted
/// (non-background) elements in token order.
pub fn detokenize_layout(
    tokens: &TokenizedLayout,
    elements: &[Element],
    canvas: Canvas,
    bins: u32,
) -> Result<Layout> {
    if tokens.tokens.len() != 4 * elements.len() {
        return Err(LayoutError::MalformedOutput(format!(
            "{} tokens for {} elements",
            tokens.tokens.len(),
            elements.len()
        )));
    }
    let placements = elements
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let t = &tokens.tokens[4 * i..4 * i + 4];
            Ok(Placement {
                element: e.clone(),
                bbox: detokenize_box([t[0], t[1], t[2], t[3]], &canvas, bins)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Layout::new(canvas, placements)
}

pub fn intersection_area(a: &BBox, b: &BBox) -> f64 {
    let ow = a.right().min(b.right()) - a.left().max(b.left());
    let oh = a.bottom().min(b.bottom()) - a.top().max(b.top());
    ow.max(0.0) * oh.max(0.0)
}

pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = intersection_area(a, b);
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}
