//! Layout quality heuristics: alignment, overlap, their mean, and the
//! dataset-level `mean - std` filter.
//!
//! Background elements are ignored by every metric here. Alignment
//! distances are canvas-normalized so the score is scale invariant.

use std::f64::consts::E;

use serde::{Deserialize, Serialize};

use crate::layout::{intersection_area, BBox, Layout};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MetricsError {
    #[error("element `{0}` has zero area")]
    DegenerateElement(String),
    #[error("cannot compute statistics of an empty dataset")]
    EmptyDataset,
}

pub type Result<T> = std::result::Result<T, MetricsError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub q_align: f64,
    /// Overlap score with the inner sum left unnormalized.
    pub q_overlap_raw: f64,
    /// Overlap score averaged over the `N - 1` partners, in `[0, 1]`.
    pub q_overlap_norm: f64,
    pub q: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetQualityStats {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub threshold: f64,
    pub count: usize,
}

impl DatasetQualityStats {
    /// Strictly above `mean - std`.
    pub fn keeps(&self, q: f64) -> bool {
        q > self.threshold
    }
}

fn decay(d: f64) -> f64 {
    (1.0 - d).exp()
}

fn nearest(values: &[[f64; 3]], i: usize) -> f64 {
    let mut best = f64::INFINITY;
    for k in 0..3 {
        for (j, v) in values.iter().enumerate() {
            if j != i {
                best = best.min((values[i][k] - v[k]).abs());
            }
        }
    }
    best
}

/// Mean per-element alignment score in `[0, 1]`.
///
/// For each element the nearest same-kind key coordinate of any other
/// element is found per axis (left/center/right, top/center/bottom); the
/// element scores `(min(f(dx), f(dy)) - 1) / (e - 1)` with
/// `f(d) = exp(1 - d)`.
pub fn alignment_score(layout: &Layout) -> f64 {
    let boxes = layout.predicted_boxes();
    if boxes.len() < 2 {
        return 1.0;
    }
    let (w, h) = (layout.canvas.width, layout.canvas.height);
    let xs: Vec<[f64; 3]> = boxes.iter().map(|b| [b.left() / w, b.x / w, b.right() / w]).collect();
    let ys: Vec<[f64; 3]> = boxes.iter().map(|b| [b.top() / h, b.y / h, b.bottom() / h]).collect();
    let total: f64 = (0..boxes.len())
        .map(|i| {
            let fx = decay(nearest(&xs, i));
            let fy = decay(nearest(&ys, i));
            ((fx.min(fy) - 1.0) / (E - 1.0)).clamp(0.0, 1.0)
        })
        .sum();
    total / boxes.len() as f64
}

fn check_areas(layout: &Layout) -> Result<Vec<BBox>> {
    layout
        .predicted()
        .map(|p| {
            if p.bbox.area() > 0.0 {
                Ok(p.bbox)
            } else {
                Err(MetricsError::DegenerateElement(p.element.id.clone()))
            }
        })
        .collect()
}

/// Returns `(raw, normalized)` overlap scores; higher means less overlap.
pub fn overlap_score(layout: &Layout) -> Result<(f64, f64)> {
    let boxes = check_areas(layout)?;
    let n = boxes.len();
    if n < 2 {
        return Ok((1.0, 1.0));
    }
    let mut total = 0.0;
    for (i, a) in boxes.iter().enumerate() {
        let area = a.area();
        for (j, b) in boxes.iter().enumerate() {
            if i != j {
                total += 1.0 - intersection_area(a, b) / area;
            }
        }
    }
    let raw = total / n as f64;
    Ok((raw, (raw / (n - 1) as f64).clamp(0.0, 1.0)))
}

pub fn quality(layout: &Layout) -> Result<QualityReport> {
    let (q_overlap_raw, q_overlap_norm) = overlap_score(layout)?;
    let q_align = alignment_score(layout);
    Ok(QualityReport {
        q_align,
        q_overlap_raw,
        q_overlap_norm,
        q: (q_align + q_overlap_norm) / 2.0,
    })
}

/// Neumaier-compensated sum.
fn compensated_sum(values: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

pub fn dataset_stats(qualities: &[f64]) -> Result<DatasetQualityStats> {
    if qualities.is_empty() {
        return Err(MetricsError::EmptyDataset);
    }
    let n = qualities.len() as f64;
    let mean = compensated_sum(qualities.iter().copied()) / n;
    let var = compensated_sum(qualities.iter().map(|q| (q - mean) * (q - mean))) / n;
    let std = var.max(0.0).sqrt();
    Ok(DatasetQualityStats { mean, std, threshold: mean - std, count: qualities.len() })
}

/// Indices of qualities strictly above `mean - std`.
pub fn filter_qualities(qualities: &[f64]) -> Result<(Vec<usize>, DatasetQualityStats)> {
    let stats = dataset_stats(qualities)?;
    let kept = qualities
        .iter()
        .enumerate()
        .filter(|(_, &q)| stats.keeps(q))
        .map(|(i, _)| i)
        .collect();
    Ok((kept, stats))
}

/// Two passes: score every layout, then keep those above the threshold.
pub fn filter_layouts(layouts: &[Layout]) -> Result<(Vec<usize>, DatasetQualityStats)> {
    let qualities = layouts
        .iter()
        .map(|l| quality(l).map(|r| r.q))
        .collect::<Result<Vec<_>>>()?;
    filter_qualities(&qualities)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::{Canvas, Element, ElementKind, Placement};

    fn layout(w: f64, h: f64, boxes: &[BBox]) -> Layout {
        let placements = boxes
            .iter()
            .enumerate()
            .map(|(i, b)| Placement { element: Element::visual(format!("e{i}"), ElementKind::Shape), bbox: *b })
            .collect();
        Layout::new(Canvas::new(w, h).unwrap(), placements).unwrap()
    }

    fn corners(l: f64, t: f64, r: f64, b: f64) -> BBox {
        BBox::from_corners(l, t, r, b)
    }

    #[test]
    fn alignment_examples() {
        // shared left edges and shared top edges, no overlap
        let l = layout(100.0, 100.0, &[corners(10.0, 10.0, 30.0, 20.0), corners(10.0, 10.0, 20.0, 40.0)]);
        assert_eq!(alignment_score(&l), 1.0);
        assert_eq!(alignment_score(&layout(100.0, 100.0, &[corners(0.0, 0.0, 5.0, 5.0)])), 1.0);

        let l = layout(100.0, 100.0, &[corners(10.0, 10.0, 20.0, 20.0), corners(10.0, 60.0, 20.0, 70.0)]);
        let expected = (0.5f64.exp() - 1.0) / (E - 1.0);
        assert!((alignment_score(&l) - expected).abs() < 1e-12);
        assert!((expected - 0.3775).abs() < 1e-4);
    }

    #[test]
    fn overlap_examples() {
        let disjoint = layout(10.0, 10.0, &[corners(0.0, 0.0, 1.0, 1.0), corners(5.0, 5.0, 6.0, 6.0)]);
        assert_eq!(overlap_score(&disjoint).unwrap(), (1.0, 1.0));
        let same = layout(10.0, 10.0, &[corners(0.0, 0.0, 1.0, 1.0), corners(0.0, 0.0, 1.0, 1.0)]);
        assert_eq!(overlap_score(&same).unwrap(), (0.0, 0.0));
        // A: 2x2 (area 4), B: 2x1 (area 2), intersection 1x1
        let ab = layout(10.0, 10.0, &[corners(0.0, 0.0, 2.0, 2.0), corners(1.0, 1.0, 3.0, 2.0)]);
        let (raw, norm) = overlap_score(&ab).unwrap();
        assert!((raw - 0.625).abs() < 1e-12);
        assert!((norm - 0.625).abs() < 1e-12);
    }

    #[test]
    fn overlap_rejects_zero_area() {
        let l = layout(10.0, 10.0, &[corners(0.0, 0.0, 0.0, 1.0), corners(5.0, 5.0, 6.0, 6.0)]);
        assert_eq!(overlap_score(&l), Err(MetricsError::DegenerateElement("e0".into())));
        assert!(quality(&l).is_err());
    }

    #[test]
    fn quality_examples() {
        let good = layout(100.0, 100.0, &[corners(10.0, 10.0, 30.0, 20.0), corners(10.0, 10.0, 20.0, 40.0)]);
        // the boxes overlap, so overlap is imperfect
        assert!(quality(&good).unwrap().q < 1.0);
        let grid = layout(
            100.0,
            100.0,
            &[
                corners(0.0, 0.0, 50.0, 50.0),
                corners(50.0, 0.0, 100.0, 50.0),
                corners(0.0, 50.0, 50.0, 100.0),
                corners(50.0, 50.0, 100.0, 100.0),
            ],
        );
        assert_eq!(quality(&grid).unwrap().q, 1.0);
        let stacked = layout(100.0, 100.0, &[corners(0.0, 0.0, 5.0, 5.0), corners(0.0, 0.0, 5.0, 5.0)]);
        assert_eq!(quality(&stacked).unwrap().q, 0.5);
        let apart = layout(100.0, 100.0, &[corners(10.0, 10.0, 20.0, 20.0), corners(10.0, 60.0, 20.0, 70.0)]);
        let q = quality(&apart).unwrap().q;
        assert!((q - (((0.5f64.exp() - 1.0) / (E - 1.0)) + 1.0) / 2.0).abs() < 1e-12);
        assert!((q - 0.6888).abs() < 1e-4);
    }

    #[test]
    fn stats_examples() {
        let s = dataset_stats(&[1.0, 0.9, 0.8, 0.5]).unwrap();
        assert!((s.mean - 0.8).abs() < 1e-12);
        assert!((s.std - 0.035f64.sqrt()).abs() < 1e-12);
        assert!((s.threshold - (0.8 - 0.035f64.sqrt())).abs() < 1e-12);
        let s = dataset_stats(&[0.7; 5]).unwrap();
        assert_eq!((s.std, s.threshold), (0.0, 0.7));
        let s = dataset_stats(&[0.3]).unwrap();
        assert_eq!((s.mean, s.std, s.threshold, s.count), (0.3, 0.0, 0.3, 1));
        assert_eq!(dataset_stats(&[]), Err(MetricsError::EmptyDataset));
    }

    #[test]
    fn filter_examples() {
        let (kept, _) = filter_qualities(&[1.0, 0.9, 0.8, 0.5]).unwrap();
        assert_eq!(kept, vec![0, 1, 2]);
        // zero spread: strict inequality drops everything
        let (kept, stats) = filter_qualities(&[0.6; 4]).unwrap();
        assert!(kept.is_empty());
        assert_eq!(stats.std, 0.0);
        assert!(filter_layouts(&[]).is_err());
    }

    #[test]
    fn background_is_ignored() {
        let canvas = Canvas::new(100.0, 100.0).unwrap();
        let l = Layout::new(
            canvas,
            vec![
                Placement { element: Element::visual("bg", ElementKind::Background), bbox: canvas.full_box() },
                Placement { element: Element::text("t", "a"), bbox: corners(0.0, 0.0, 10.0, 10.0) },
            ],
        )
        .unwrap();
        assert_eq!(quality(&l).unwrap().q, 1.0);
    }
}
