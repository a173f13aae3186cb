//! Verbalized layout-model input.
//!
//! ```text
//! Consider the image <image> with height and width of 224 and 448. The following elements need to be placed on the image to obtain an aesthetic poster layout.
//!
//! Element 1:
//! Text: LOREM IPSUM
//! Category: text
//!
//! Element 2:
//! Image: <image>
//! Category: image
//! ```
//!
//! Elements with known positions get an extra `Position: pos_x pos_y pos_w pos_h` line.

use std::collections::HashMap;
use std::fmt::Write;

use crate::layout::{Canvas, Element, ElementKind, LayoutError};

pub const IMAGE_MARKER: &str = "<image>";

/// Known element positions as `(x, y, w, h)` tokens, keyed by element id.
pub type KnownPositions = HashMap<String, [u32; 4]>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SerializedPrompt {
    pub text: String,
    /// Element id filling each `<image>` marker after the canvas marker.
    pub image_slots: Vec<String>,
}

impl SerializedPrompt {
    pub fn marker_count(&self) -> usize {
        self.text.matches(IMAGE_MARKER).count()
    }
}

fn dim(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

pub fn build_prompt(
    canvas: &Canvas,
    elements: &[Element],
    known: Option<&KnownPositions>,
) -> Result<SerializedPrompt, LayoutError> {
    if elements.is_empty() {
        return Err(LayoutError::InvalidArgument("prompt needs at least one element".into()));
    }
    let mut text = format!(
        "Consider the image {IMAGE_MARKER} with height and width of {} and {}. The following elements need to be placed on the image to obtain an aesthetic poster layout.\n",
        dim(canvas.height),
        dim(canvas.width)
    );
    let mut image_slots = Vec::new();
    for (k, e) in elements.iter().enumerate() {
        let _ = write!(text, "\nElement {}:\n", k + 1);
        match e.kind {
            ElementKind::Text => {
                let _ = writeln!(text, "Text: {}", e.text.as_deref().unwrap_or_default());
            }
            ElementKind::Background => {}
            _ => {
                let _ = writeln!(text, "Image: {IMAGE_MARKER}");
                image_slots.push(e.id.clone());
            }
        }
        let _ = writeln!(text, "Category: {}", e.kind);
        if let Some(t) = known.and_then(|m| m.get(&e.id)) {
            let _ = writeln!(text, "Position: pos_{} pos_{} pos_{} pos_{}", t[0], t[1], t[2], t[3]);
        }
    }
    Ok(SerializedPrompt { text, image_slots })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn canvas() -> Canvas {
        Canvas::new(448.0, 224.0).unwrap()
    }

    #[test]
    fn header_is_verbatim() {
        let p = build_prompt(&canvas(), &[Element::text("t", "LOREM IPSUM")], None).unwrap();
        assert!(p.text.starts_with(
            "Consider the image <image> with height and width of 224 and 448. The following elements need to be placed on the image to obtain an aesthetic poster layout.\n"
        ));
    }

    #[test]
    fn text_and_image_blocks() {
        let els = [Element::text("t", "LOREM IPSUM"), Element::visual("i", ElementKind::Image)];
        let p = build_prompt(&canvas(), &els, None).unwrap();
        assert!(p.text.contains("Element 1:\nText: LOREM IPSUM\nCategory: text\n"));
        assert!(p.text.contains("Element 2:\nImage: <image>\nCategory: image\n"));
        assert_eq!(p.image_slots, vec!["i".to_string()]);
        assert_eq!(p.marker_count(), 1 + p.image_slots.len());
    }

    #[test]
    fn empty_is_rejected() {
        assert!(matches!(build_prompt(&canvas(), &[], None), Err(LayoutError::InvalidArgument(_))));
    }

    #[test]
    fn known_positions_use_token_names() {
        let els = [Element::text("t", "A"), Element::visual("s", ElementKind::Shape)];
        let known = KnownPositions::from([("s".to_string(), [1, 2, 3, 224])]);
        let p = build_prompt(&canvas(), &els, Some(&known)).unwrap();
        assert!(p.text.ends_with("Category: shape\nPosition: pos_1 pos_2 pos_3 pos_224\n"));
        assert_eq!(p.text.matches("Position:").count(), 1);
    }

    #[test]
    fn background_has_no_image_slot() {
        let els = [Element::visual("bg", ElementKind::Background), Element::text("t", "A")];
        let p = build_prompt(&canvas(), &els, None).unwrap();
        assert!(p.image_slots.is_empty());
        assert_eq!(p.marker_count(), 1);
        assert!(p.text.contains("Category: background"));
    }
}
