use super::{Judge, JudgeDecision, JudgeError};
use crate::layout::Layout;
use crate::metrics::quality;

pub const HEURISTIC_JUDGE_ID: &str = "heuristic-quality";

/// Strictly higher quality wins; an exact tie goes to the second input.
pub fn compare_heuristic(g1: &Layout, g2: &Layout) -> Result<JudgeDecision, JudgeError> {
    let q1 = quality(g1)?.q;
    let q2 = quality(g2)?.q;
    Ok(JudgeDecision {
        d: if q1 > q2 { 1 } else { 2 },
        judge_id: HEURISTIC_JUDGE_ID.to_string(),
        raw_response: None,
        swapped: false,
    })
}

#[derive(Debug, Clone, Copy, Default)]
pub struct HeuristicJudge;

impl Judge for HeuristicJudge {
    fn id(&self) -> String {
        HEURISTIC_JUDGE_ID.to_string()
    }

    fn compare(&self, g1: &Layout, g2: &Layout) -> Result<JudgeDecision, JudgeError> {
        compare_heuristic(g1, g2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::{BBox, Canvas, Element, Placement};

    fn layout(boxes: &[(f64, f64, f64, f64)]) -> Layout {
        let canvas = Canvas::new(100.0, 100.0).unwrap();
        let placements = boxes
            .iter()
            .enumerate()
            .map(|(i, &(l, t, r, b))| Placement {
                element: Element::text(&format!("e{i}"), "x"),
                bbox: BBox::from_corners(l, t, r, b),
            })
            .collect();
        Layout::new(canvas, placements).unwrap()
    }

    #[test]
    fn orders_by_quality() {
        let grid = layout(&[(0.0, 0.0, 50.0, 50.0), (50.0, 0.0, 100.0, 50.0), (0.0, 50.0, 50.0, 100.0), (50.0, 50.0, 100.0, 100.0)]);
        let stacked = layout(&[(10.0, 10.0, 40.0, 40.0); 4]);
        assert_eq!(compare_heuristic(&grid, &stacked).unwrap().d, 1);
        assert_eq!(compare_heuristic(&stacked, &grid).unwrap().d, 2);
        assert_eq!(compare_heuristic(&grid, &grid).unwrap().d, 2);
        assert_eq!(compare_heuristic(&stacked, &stacked).unwrap().d, 2);
    }

    #[test]
    fn degenerate_propagates() {
        let bad = layout(&[(0.0, 0.0, 0.0, 10.0), (0.0, 0.0, 10.0, 10.0)]);
        assert!(matches!(compare_heuristic(&bad, &bad), Err(JudgeError::Metrics(_))));
    }
}
