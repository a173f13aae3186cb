use layoutpref::layout::{bin, intersection_area, iou, unbin, BBox, Canvas, Element, ElementKind, Layout, Placement};
use layoutpref::metrics::{alignment_score, overlap_score, quality};
use proptest::prelude::*;

/// Integer-cornered box as `(left, top, right, bottom)`.
type Rect = (i32, i32, i32, i32);

fn to_bbox((l, t, r, b): Rect) -> BBox {
    BBox::from_corners(l as f64, t as f64, r as f64, b as f64)
}

/// Counts unit cells covered by both rectangles.
fn raster_intersection(a: Rect, b: Rect) -> u32 {
    let mut n = 0;
    for y in a.1.min(b.1)..a.3.max(b.3) {
        for x in a.0.min(b.0)..a.2.max(b.2) {
            let inside = |r: Rect| x >= r.0 && x < r.2 && y >= r.1 && y < r.3;
            if inside(a) && inside(b) {
                n += 1;
            }
        }
    }
    n
}

fn rect() -> impl Strategy<Value = Rect> {
    (0..40i32, 0..40i32, 1..25i32, 1..25i32).prop_map(|(l, t, w, h)| (l, t, l + w, t + h))
}

fn layout_of(boxes: &[BBox]) -> Layout {
    let placements = boxes
        .iter()
        .enumerate()
        .map(|(i, b)| Placement { element: Element::visual(format!("e{i}"), ElementKind::Shape), bbox: *b })
        .collect();
    Layout::new(Canvas::new(100.0, 100.0).unwrap(), placements).unwrap()
}

proptest! {
    #[test]
    fn intersection_matches_raster(a in rect(), b in rect()) {
        let want = raster_intersection(a, b) as f64;
        prop_assert_eq!(intersection_area(&to_bbox(a), &to_bbox(b)), want);
    }

    #[test]
    fn iou_matches_raster(a in rect(), b in rect()) {
        let inter = raster_intersection(a, b) as f64;
        let area = |r: Rect| ((r.2 - r.0) * (r.3 - r.1)) as f64;
        let want = inter / (area(a) + area(b) - inter);
        prop_assert!((iou(&to_bbox(a), &to_bbox(b)) - want).abs() < 1e-12);
    }

    #[test]
    fn iou_is_symmetric_and_bounded(a in rect(), b in rect()) {
        let (x, y) = (to_bbox(a), to_bbox(b));
        let v = iou(&x, &y);
        prop_assert_eq!(v, iou(&y, &x));
        prop_assert!((0.0..=1.0).contains(&v));
        prop_assert_eq!(iou(&x, &x), 1.0);
    }

    #[test]
    fn binning_reconstruction_is_within_half_a_bin(frac in 0.0f64..=1.0, extent in 1.0f64..5000.0, bins in 1u32..512) {
        let a = frac * extent;
        let t = bin(a, extent, bins).unwrap();
        prop_assert!(t <= bins);
        let back = unbin(t, extent, bins).unwrap();
        prop_assert!((back - a).abs() <= extent / (2.0 * bins as f64) + 1e-9 * extent);
    }

    #[test]
    fn binning_is_monotone(x in 0.0f64..1.0, y in 0.0f64..1.0, extent in 1.0f64..2000.0) {
        let (lo, hi) = if x <= y { (x, y) } else { (y, x) };
        prop_assert!(bin(lo * extent, extent, 224).unwrap() <= bin(hi * extent, extent, 224).unwrap());
    }

    #[test]
    fn quality_scores_are_bounded(rects in prop::collection::vec(rect(), 2..7)) {
        let boxes: Vec<BBox> = rects.into_iter().map(to_bbox).collect();
        let r = quality(&layout_of(&boxes)).unwrap();
        prop_assert!((0.0..=1.0).contains(&r.q_align));
        prop_assert!((0.0..=1.0).contains(&r.q_overlap_norm));
        prop_assert!(r.q_overlap_raw >= 0.0);
        prop_assert!((r.q - (r.q_align + r.q_overlap_norm) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn quality_ignores_element_order(rects in prop::collection::vec(rect(), 2..7)) {
        let boxes: Vec<BBox> = rects.into_iter().map(to_bbox).collect();
        let mut rev = boxes.clone();
        rev.reverse();
        let (a, b) = (quality(&layout_of(&boxes)).unwrap(), quality(&layout_of(&rev)).unwrap());
        prop_assert!((a.q - b.q).abs() < 1e-12);
    }
}

#[test]
fn two_by_two_grid_is_perfect() {
    let boxes = [to_bbox((0, 0, 10, 10)), to_bbox((10, 0, 20, 10)), to_bbox((0, 10, 10, 20)), to_bbox((10, 10, 20, 20))];
    let (_, norm) = overlap_score(&layout_of(&boxes)).unwrap();
    assert_eq!(norm, 1.0);
    assert_eq!(alignment_score(&layout_of(&boxes)), 1.0);
}
