//! Builds a [`ScreenSchema`] from raw annotator output.
//!
//! Detections become elements, OCR words are attached to the smallest element
//! containing their center, captions go to the best-overlapping IMAGE or
//! PICTOGRAM, and the hierarchy comes from box containment.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::iou;
use crate::schema::{quantize_box, ElementClass, PixelBox, SchemaError, ScreenSchema, UiElement};

/// Fraction of a child's area that must lie inside its parent.
pub const CONTAINMENT_THRESHOLD: f64 = 0.9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ComposeError {
    #[error("detection {index}: {source}")]
    Detection { index: usize, source: SchemaError },
    #[error("ocr word {index}: {source}")]
    Word { index: usize, source: SchemaError },
    #[error("caption {index}: {source}")]
    Caption { index: usize, source: SchemaError },
    #[error("detection {index}: score {score} outside [0, 1]")]
    Score { index: usize, score: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub class: ElementClass,
    #[serde(rename = "box")]
    pub bbox: PixelBox,
    #[serde(default = "default_score")]
    pub score: f64,
}

fn default_score() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcrWord {
    pub text: String,
    #[serde(rename = "box")]
    pub bbox: PixelBox,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionAnnotation {
    pub text: String,
    #[serde(rename = "box")]
    pub bbox: PixelBox,
}

/// One image worth of annotator output, as carried in annotation JSONL.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub image_ref: String,
    pub width: f64,
    pub height: f64,
    #[serde(default)]
    pub detections: Vec<Detection>,
    #[serde(default)]
    pub ocr_words: Vec<OcrWord>,
    #[serde(default)]
    pub captions: Vec<CaptionAnnotation>,
}

impl AnnotationRecord {
    pub fn compose(&self) -> Result<ScreenSchema, ComposeError> {
        compose_schema(&self.detections, &self.ocr_words, &self.captions, self.width, self.height)
    }
}

/// Stable sort by `(ymin, xmin)` of the quantized boxes.
pub fn reading_order(mut elements: Vec<UiElement>) -> Vec<UiElement> {
    elements.sort_by_key(|e| (e.bbox.ymin(), e.bbox.xmin()));
    elements
}

fn contained_fraction(parent: &UiElement, child: &UiElement) -> f64 {
    let area = child.bbox.area();
    if area == 0 {
        // degenerate child: contained iff it lies within the parent box
        return if parent.bbox.contains_box(&child.bbox) { 1.0 } else { 0.0 };
    }
    parent.bbox.intersection_area(&child.bbox) as f64 / area as f64
}

/// Nests a flat element list by box containment.
///
/// `b` is a candidate child of `a` when `a` covers at least
/// [`CONTAINMENT_THRESHOLD`] of `b`'s area and `a` ranks above `b`: larger
/// area, or equal area and earlier in the list. Each element goes under its
/// smallest candidate (earliest on ties). The ranking makes cycles impossible.
pub fn nest_by_containment(elements: Vec<UiElement>) -> ScreenSchema {
    let n = elements.len();
    let outranks = |a: usize, b: usize| {
        let (aa, ab) = (elements[a].bbox.area(), elements[b].bbox.area());
        aa > ab || (aa == ab && a < b)
    };
    let mut parent: Vec<Option<usize>> = vec![None; n];
    for b in 0..n {
        let mut best: Option<usize> = None;
        for a in 0..n {
            if a == b || !outranks(a, b) || contained_fraction(&elements[a], &elements[b]) < CONTAINMENT_THRESHOLD {
                continue;
            }
            let better = match best {
                None => true,
                Some(cur) => elements[a].bbox.area() < elements[cur].bbox.area(),
            };
            if better {
                best = Some(a);
            }
        }
        parent[b] = best;
    }

    let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut roots = Vec::new();
    for (i, p) in parent.iter().enumerate() {
        match p {
            Some(p) => children[*p].push(i),
            None => roots.push(i),
        }
    }
    let mut slots: Vec<Option<UiElement>> = elements.into_iter().map(Some).collect();
    fn build(i: usize, slots: &mut [Option<UiElement>], children: &[Vec<usize>]) -> UiElement {
        let kids: Vec<UiElement> = children[i].iter().map(|&c| build(c, slots, children)).collect();
        let mut el = slots[i].take().expect("each element is placed once");
        el.children = reading_order(kids);
        el
    }
    let roots: Vec<UiElement> = roots.into_iter().map(|r| build(r, &mut slots, &children)).collect();
    ScreenSchema::new(reading_order(roots))
}

/// Assembles a schema from detections, OCR words and captions over a
/// `width x height` image.
pub fn compose_schema(
    detections: &[Detection],
    ocr: &[OcrWord],
    captions: &[CaptionAnnotation],
    width: f64,
    height: f64,
) -> Result<ScreenSchema, ComposeError> {
    let mut elements = Vec::with_capacity(detections.len() + ocr.len());
    for (index, d) in detections.iter().enumerate() {
        if !(0.0..=1.0).contains(&d.score) {
            return Err(ComposeError::Score { index, score: d.score });
        }
        let q = quantize_box(&d.bbox, width, height).map_err(|source| ComposeError::Detection { index, source })?;
        elements.push(UiElement::new(d.class.clone(), q));
    }
    for (index, w) in ocr.iter().enumerate() {
        w.bbox.check_extent(width, height).map_err(|source| ComposeError::Word { index, source })?;
        if w.text.trim().is_empty() {
            return Err(ComposeError::Word { index, source: SchemaError::EmptyPayload });
        }
    }
    for (index, c) in captions.iter().enumerate() {
        c.bbox.check_extent(width, height).map_err(|source| ComposeError::Caption { index, source })?;
        if c.text.trim().is_empty() {
            return Err(ComposeError::Caption { index, source: SchemaError::EmptyPayload });
        }
    }

    // OCR words go to the smallest non-captioned element containing their center
    let mut attached: Vec<Vec<usize>> = vec![Vec::new(); detections.len()];
    let mut loose = Vec::new();
    for (wi, w) in ocr.iter().enumerate() {
        let (cy, cx) = w.bbox.center();
        let host = detections
            .iter()
            .enumerate()
            .filter(|(_, d)| !d.class.takes_caption() && d.bbox.contains_point(cy, cx))
            .min_by(|(i, a), (j, b)| a.bbox.area().total_cmp(&b.bbox.area()).then(i.cmp(j)))
            .map(|(i, _)| i);
        match host {
            Some(h) => attached[h].push(wi),
            None => loose.push(wi),
        }
    }
    for (el, words) in elements.iter_mut().zip(&attached) {
        if words.is_empty() {
            continue;
        }
        let mut words = words.clone();
        words.sort_by(|&a, &b| {
            let (wa, wb) = (&ocr[a].bbox, &ocr[b].bbox);
            wa.ymin().total_cmp(&wb.ymin()).then(wa.xmin().total_cmp(&wb.xmin())).then(a.cmp(&b))
        });
        let text = words.iter().map(|&w| ocr[w].text.trim()).collect::<Vec<_>>().join(" ");
        el.set_payload(Some(text)).expect("non-empty words");
    }

    // each IMAGE / PICTOGRAM keeps its best-overlapping caption
    let mut best_caption: Vec<Option<(f64, usize)>> = vec![None; detections.len()];
    for (ci, c) in captions.iter().enumerate() {
        let target = detections
            .iter()
            .enumerate()
            .filter(|(_, d)| d.class.takes_caption())
            .map(|(i, d)| (i, iou(&d.bbox, &c.bbox)))
            .filter(|(_, v)| *v > 0.0)
            .max_by(|(i, a), (j, b)| a.total_cmp(b).then(j.cmp(i)));
        if let Some((di, v)) = target {
            if best_caption[di].is_none_or(|(cur, _)| v > cur) {
                best_caption[di] = Some((v, ci));
            }
        }
    }
    for (el, cap) in elements.iter_mut().zip(&best_caption) {
        if let Some((_, ci)) = cap {
            el.set_payload(Some(captions[*ci].text.trim().to_owned())).expect("non-empty caption");
        }
    }

    for wi in loose {
        let w = &ocr[wi];
        let q = quantize_box(&w.bbox, width, height).map_err(|source| ComposeError::Word { index: wi, source })?;
        let el = UiElement::new(ElementClass::text(), q)
            .with_payload(w.text.trim())
            .map_err(|source| ComposeError::Word { index: wi, source })?;
        elements.push(el);
    }

    let mut schema = nest_by_containment(elements);
    schema.source_dims = Some((width.round() as u32, height.round() as u32));
    Ok(schema)
}
