//! Deterministic raster renderer for layouts.
//!
//! The canvas is scaled so its long side equals `target_long_side`.
//! Elements are painted in placement order with straight alpha blending
//! and no anti-aliasing, so identical inputs give identical bytes.

use std::io::Cursor;
use std::path::PathBuf;

use font8x8::legacy::BASIC_LEGACY;
use image::imageops::{resize, FilterType};
use image::{ImageFormat, Rgba, RgbaImage};

use crate::layout::{BBox, Canvas, ElementKind, Layout};

#[derive(Debug, thiserror::Error)]
pub enum RenderError {
    #[error("missing asset `{0}`")]
    MissingAsset(String),
    #[error("invalid canvas {0}x{1}")]
    InvalidCanvas(f64, f64),
    #[error("image decode: {0}")]
    Decode(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, RenderError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RenderMode {
    /// Assets, text bars and glyphs.
    Composite,
    /// Flat kind-colored rectangles.
    Boxes,
}

impl std::str::FromStr for RenderMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "composite" => Ok(Self::Composite),
            "boxes" => Ok(Self::Boxes),
            other => Err(format!("unknown render mode `{other}` (boxes|composite)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Palette {
    pub background: [u8; 4],
    pub image: [u8; 4],
    pub text: [u8; 4],
    pub shape: [u8; 4],
}

impl Default for Palette {
    fn default() -> Self {
        Self {
            background: [200, 200, 200, 255],
            image: [66, 133, 244, 255],
            text: [245, 146, 35, 255],
            shape: [52, 168, 83, 255],
        }
    }
}

impl Palette {
    pub fn color(&self, kind: ElementKind) -> [u8; 4] {
        match kind {
            ElementKind::Background => self.background,
            ElementKind::Image => self.image,
            ElementKind::Text => self.text,
            ElementKind::Shape => self.shape,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RenderStyle {
    pub mode: RenderMode,
    pub target_long_side: u32,
    pub palette: Palette,
    pub background_color: [u8; 4],
}

impl Default for RenderStyle {
    fn default() -> Self {
        Self {
            mode: RenderMode::Boxes,
            target_long_side: 512,
            palette: Palette::default(),
            background_color: [255, 255, 255, 255],
        }
    }
}

impl RenderStyle {
    pub fn boxes() -> Self {
        Self::default()
    }

    pub fn composite() -> Self {
        Self { mode: RenderMode::Composite, ..Self::default() }
    }
}

/// Source of decoded asset images. Must be callable from many threads.
pub trait AssetResolver: Send + Sync {
    fn load(&self, asset_ref: &str) -> Result<RgbaImage>;
}

/// Resolves asset references as paths relative to a root directory.
#[derive(Debug, Clone)]
pub struct DirAssets {
    pub root: PathBuf,
}

impl AssetResolver for DirAssets {
    fn load(&self, asset_ref: &str) -> Result<RgbaImage> {
        let path = self.root.join(asset_ref);
        let bytes = std::fs::read(&path).map_err(|_| RenderError::MissingAsset(asset_ref.to_string()))?;
        decode_image(&bytes)
    }
}

/// Resolver for datasets without media; every lookup fails.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoAssets;

impl AssetResolver for NoAssets {
    fn load(&self, asset_ref: &str) -> Result<RgbaImage> {
        Err(RenderError::MissingAsset(asset_ref.to_string()))
    }
}

pub fn decode_image(bytes: &[u8]) -> Result<RgbaImage> {
    image::load_from_memory(bytes).map(|i| i.to_rgba8()).map_err(|e| RenderError::Decode(e.to_string()))
}

/// 8-bit RGBA PNG bytes.
pub fn encode_png(img: &RgbaImage) -> Vec<u8> {
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png).expect("in-memory PNG encoding cannot fail");
    out.into_inner()
}

/// Output size with the long side fixed and the short side rounded, at least 1.
pub fn output_size(canvas: &Canvas, long_side: u32) -> Result<(u32, u32)> {
    if !(canvas.width > 0.0 && canvas.height > 0.0) {
        return Err(RenderError::InvalidCanvas(canvas.width, canvas.height));
    }
    let long = long_side.max(1);
    if canvas.width >= canvas.height {
        Ok((long, ((long as f64 / canvas.aspect()).round() as u32).max(1)))
    } else {
        Ok((((long as f64 * canvas.aspect()).round() as u32).max(1), long))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct PixelRect {
    x0: u32,
    y0: u32,
    x1: u32,
    y1: u32,
}

impl PixelRect {
    fn width(&self) -> u32 {
        self.x1 - self.x0
    }

    fn height(&self) -> u32 {
        self.y1 - self.y0
    }

    fn is_empty(&self) -> bool {
        self.x1 <= self.x0 || self.y1 <= self.y0
    }
}

fn to_pixels(b: &BBox, canvas: &Canvas, w: u32, h: u32) -> PixelRect {
    let sx = w as f64 / canvas.width;
    let sy = h as f64 / canvas.height;
    let px = |v: f64, max: u32| (v.round().max(0.0) as u32).min(max);
    PixelRect {
        x0: px(b.left() * sx, w),
        x1: px(b.right() * sx, w),
        y0: px(b.top() * sy, h),
        y1: px(b.bottom() * sy, h),
    }
}

fn blend(dst: &mut Rgba<u8>, src: [u8; 4]) {
    let a = src[3] as u32;
    if a == 255 {
        dst.0 = src;
        return;
    }
    if a == 0 {
        return;
    }
    let inv = 255 - a;
    for c in 0..3 {
        dst.0[c] = ((src[c] as u32 * a + dst.0[c] as u32 * inv + 127) / 255) as u8;
    }
    dst.0[3] = (a + (dst.0[3] as u32 * inv + 127) / 255).min(255) as u8;
}

fn fill(img: &mut RgbaImage, r: PixelRect, color: [u8; 4]) {
    for y in r.y0..r.y1 {
        for x in r.x0..r.x1 {
            blend(img.get_pixel_mut(x, y), color);
        }
    }
}

fn draw_asset(img: &mut RgbaImage, r: PixelRect, asset: &RgbaImage) {
    let scaled = resize(asset, r.width(), r.height(), FilterType::Nearest);
    for (dx, dy, px) in scaled.enumerate_pixels() {
        blend(img.get_pixel_mut(r.x0 + dx, r.y0 + dy), px.0);
    }
}

const TEXT_INK: [u8; 4] = [33, 33, 33, 255];
const MAX_GLYPHS: usize = 20;

fn draw_text(img: &mut RgbaImage, r: PixelRect, text: &str) {
    let glyphs: Vec<char> = text.chars().take(MAX_GLYPHS).collect();
    if glyphs.is_empty() || r.height() < 8 {
        return;
    }
    let fit_w = r.width() / (8 * glyphs.len() as u32 + 2);
    let fit_h = r.height() * 6 / 10 / 8;
    let scale = fit_w.min(fit_h).max(1);
    let y_start = r.y0 + (r.height() - (8 * scale).min(r.height())) / 2;
    let x_start = r.x0 + scale;
    for (i, ch) in glyphs.iter().enumerate() {
        let code = *ch as usize;
        let bitmap = if code < BASIC_LEGACY.len() { BASIC_LEGACY[code] } else { BASIC_LEGACY[b'?' as usize] };
        let gx = x_start + i as u32 * 8 * scale;
        for (row, bits) in bitmap.iter().enumerate() {
            for col in 0..8u32 {
                if bits & (1 << col) == 0 {
                    continue;
                }
                for sy in 0..scale {
                    for sx in 0..scale {
                        let x = gx + col * scale + sx;
                        let y = y_start + row as u32 * scale + sy;
                        if x < r.x1 && y < r.y1 {
                            img.get_pixel_mut(x, y).0 = TEXT_INK;
                        }
                    }
                }
            }
        }
    }
}

pub fn render(layout: &Layout, style: &RenderStyle, assets: &dyn AssetResolver) -> Result<RgbaImage> {
    let (w, h) = output_size(&layout.canvas, style.target_long_side)?;
    let mut img = RgbaImage::from_pixel(w, h, Rgba(style.background_color));
    for p in &layout.placements {
        let r = to_pixels(&p.bbox, &layout.canvas, w, h);
        if r.is_empty() {
            continue;
        }
        let color = style.palette.color(p.element.kind);
        match (style.mode, p.element.kind) {
            (RenderMode::Boxes, _) => fill(&mut img, r, color),
            (RenderMode::Composite, ElementKind::Text) => {
                fill(&mut img, r, color);
                draw_text(&mut img, r, p.element.text.as_deref().unwrap_or_default());
            }
            (RenderMode::Composite, _) => match &p.element.asset_ref {
                Some(asset) => draw_asset(&mut img, r, &assets.load(asset)?),
                None => fill(&mut img, r, color),
            },
        }
    }
    Ok(img)
}

const OVERLAY_ALPHA: u8 = 96;
const BORDER_PX: u32 = 2;

/// Semi-transparent kind-colored rectangles with opaque 2 px borders over
/// a background image, rescaled to the canvas output size if needed.
pub fn render_boxes_on_background(layout: &Layout, background: &RgbaImage, style: &RenderStyle) -> Result<RgbaImage> {
    let (w, h) = output_size(&layout.canvas, style.target_long_side)?;
    let mut img = if background.dimensions() == (w, h) {
        background.clone()
    } else {
        resize(background, w, h, FilterType::Nearest)
    };
    for p in layout.predicted() {
        let r = to_pixels(&p.bbox, &layout.canvas, w, h);
        if r.is_empty() {
            continue;
        }
        let color = style.palette.color(p.element.kind);
        let b = BORDER_PX.min(r.width() / 2).min(r.height() / 2);
        let inner = PixelRect { x0: r.x0 + b, y0: r.y0 + b, x1: r.x1 - b, y1: r.y1 - b };
        if !inner.is_empty() {
            fill(&mut img, inner, [color[0], color[1], color[2], OVERLAY_ALPHA]);
        }
        for y in r.y0..r.y1 {
            for x in r.x0..r.x1 {
                let on_border = x < inner.x0 || x >= inner.x1 || y < inner.y0 || y >= inner.y1;
                if on_border {
                    img.get_pixel_mut(x, y).0 = [color[0], color[1], color[2], 255];
                }
            }
        }
    }
    Ok(img)
}
