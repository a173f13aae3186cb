//! Hand-crafted per-element features feeding the policy heads.
//!
//! Layout of the 13 entries:
//!
//! | index | meaning                                         |
//! |-------|-------------------------------------------------|
//! | 0..4  | one-hot kind (image, text, shape, background)   |
//! | 4     | intrinsic aspect, default 1, clipped to [0.1, 10] |
//! | 5     | element index / element count                   |
//! | 6     | min(element count / 32, 1)                      |
//! | 7     | ln(clip(canvas w / h, 0.25, 4))                 |
//! | 8     | known-position flag                             |
//! | 9..13 | known box (x/W, y/H, w/W, h/H), zero if unknown |

use crate::layout::{unbin, Canvas, Element};
use crate::prompt::KnownPositions;

pub const FEATURE_DIM: usize = 13;

pub type FeatureVector = [f64; FEATURE_DIM];

/// One vector per non-background element, in input order.
pub fn featurize(
    canvas: &Canvas,
    elements: &[Element],
    known: Option<&KnownPositions>,
    bins: u32,
) -> Vec<FeatureVector> {
    let predicted: Vec<&Element> = elements.iter().filter(|e| e.kind.is_predicted()).collect();
    let count = predicted.len();
    let canvas_aspect = canvas.aspect().clamp(0.25, 4.0).ln();
    predicted
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let mut f = [0.0; FEATURE_DIM];
            f[e.kind.index()] = 1.0;
            f[4] = e.intrinsic_aspect.unwrap_or(1.0).clamp(0.1, 10.0);
            f[5] = i as f64 / count as f64;
            f[6] = (count as f64 / 32.0).min(1.0);
            f[7] = canvas_aspect;
            if let Some(t) = known.and_then(|k| k.get(&e.id)) {
                // bins >= 1 and tokens are range-checked upstream; fall back to zeros otherwise
                let norm = |tok: u32| unbin(tok, 1.0, bins).unwrap_or(0.0);
                f[8] = 1.0;
                f[9] = norm(t[0]);
                f[10] = norm(t[1]);
                f[11] = norm(t[2]);
                f[12] = norm(t[3]);
            }
            f
        })
        .collect()
}
