//! Screen schema data model.
//!
//! A screen is described as a forest of [`UiElement`]s. Each element has an
//! uppercase class name, an optional payload (OCR text, icon name or caption),
//! a bounding box bucketized to the `0..=999` range and an ordered list of
//! children. The text form is produced by [`serialize_schema`] and read back by
//! [`parse_schema`].

mod box_;
mod grammar;
mod mask;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use box_::{dequantize_box, quantize_box, PixelBox, QuantBox, QUANT_BUCKETS, QUANT_MAX};
pub use grammar::{
    parse_schema, parse_schema_with, serialize_schema, serialize_schema_with, CoordOrder,
    ParseError, ParseErrorKind,
};
pub use mask::{mask_text_elements, MASK_TOKEN};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SchemaError {
    #[error("invalid class name {0:?}: expected [A-Z][A-Z0-9_]*")]
    InvalidClass(String),
    #[error("invalid box ({ymin}, {xmin}, {ymax}, {xmax})")]
    InvalidBox { ymin: f64, xmin: f64, ymax: f64, xmax: f64 },
    #[error("quantized coordinate {0} out of range 0..=999")]
    CoordinateOutOfRange(u32),
    #[error("image dimensions must be positive, got {width}x{height}")]
    InvalidDimensions { width: f64, height: f64 },
    #[error("box ({ymin}, {xmin}, {ymax}, {xmax}) exceeds image extent {width}x{height}")]
    OutOfExtent { ymin: f64, xmin: f64, ymax: f64, xmax: f64, width: f64, height: f64 },
    #[error("payload must be non-empty after trimming")]
    EmptyPayload,
    #[error("mask fraction {0} outside [0, 1]")]
    InvalidFraction(f64),
    #[error("unknown element class {0}")]
    UnknownClass(String),
}

/// Uppercase UI element class such as `TEXT` or `BUTTON`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ElementClass(String);

impl ElementClass {
    pub fn new(name: impl Into<String>) -> Result<Self, SchemaError> {
        let name = name.into();
        if is_class_name(&name) {
            Ok(Self(name))
        } else {
            Err(SchemaError::InvalidClass(name))
        }
    }

    pub fn text() -> Self {
        Self("TEXT".to_owned())
    }

    pub fn image() -> Self {
        Self("IMAGE".to_owned())
    }

    pub fn pictogram() -> Self {
        Self("PICTOGRAM".to_owned())
    }

    pub fn button() -> Self {
        Self("BUTTON".to_owned())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_text(&self) -> bool {
        self.0 == "TEXT"
    }

    /// Classes whose payload is a generated description rather than OCR text.
    pub fn takes_caption(&self) -> bool {
        self.0 == "IMAGE" || self.0 == "PICTOGRAM"
    }
}

pub(crate) fn is_class_name(s: &str) -> bool {
    let mut bytes = s.bytes();
    matches!(bytes.next(), Some(b'A'..=b'Z'))
        && bytes.all(|b| b.is_ascii_uppercase() || b.is_ascii_digit() || b == b'_')
}

impl TryFrom<String> for ElementClass {
    type Error = SchemaError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<ElementClass> for String {
    fn from(value: ElementClass) -> Self {
        value.0
    }
}

impl fmt::Display for ElementClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Set of known element classes. Seeded with the four classes every screen
/// annotator emits; callers register the rest.
#[derive(Debug, Clone)]
pub struct ClassRegistry {
    names: BTreeSet<ElementClass>,
}

impl Default for ClassRegistry {
    fn default() -> Self {
        let names = [
            ElementClass::image(),
            ElementClass::pictogram(),
            ElementClass::button(),
            ElementClass::text(),
        ]
        .into_iter()
        .collect();
        Self { names }
    }
}

impl ClassRegistry {
    pub fn register(&mut self, name: &str) -> Result<ElementClass, SchemaError> {
        let class = ElementClass::new(name)?;
        self.names.insert(class.clone());
        Ok(class)
    }

    pub fn contains(&self, class: &ElementClass) -> bool {
        self.names.contains(class)
    }

    pub fn iter(&self) -> impl Iterator<Item = &ElementClass> {
        self.names.iter()
    }

    /// Fails on the first element (pre-order) whose class is not registered.
    pub fn check(&self, schema: &ScreenSchema) -> Result<(), SchemaError> {
        for el in schema.iter() {
            if !self.contains(&el.class) {
                return Err(SchemaError::UnknownClass(el.class.to_string()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UiElement {
    pub class: ElementClass,
    payload: Option<String>,
    pub bbox: QuantBox,
    pub children: Vec<UiElement>,
    masked: bool,
}

impl UiElement {
    pub fn new(class: ElementClass, bbox: QuantBox) -> Self {
        Self { class, payload: None, bbox, children: Vec::new(), masked: false }
    }

    pub fn with_payload(mut self, payload: impl Into<String>) -> Result<Self, SchemaError> {
        self.set_payload(Some(payload.into()))?;
        Ok(self)
    }

    pub fn with_children(mut self, children: Vec<UiElement>) -> Self {
        self.children = children;
        self
    }

    pub fn payload(&self) -> Option<&str> {
        self.payload.as_deref()
    }

    /// Replaces the payload and clears the mask flag.
    pub fn set_payload(&mut self, payload: Option<String>) -> Result<(), SchemaError> {
        if let Some(p) = &payload {
            if p.trim().is_empty() {
                return Err(SchemaError::EmptyPayload);
            }
        }
        self.payload = payload;
        self.masked = false;
        Ok(())
    }

    pub fn is_masked(&self) -> bool {
        self.masked
    }

    /// Drops the payload and marks the element as masked.
    pub fn mask(&mut self) {
        self.payload = None;
        self.masked = true;
    }

    /// Number of nodes in this subtree, including `self`.
    pub fn node_count(&self) -> usize {
        1 + self.children.iter().map(UiElement::node_count).sum::<usize>()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScreenSchema {
    pub elements: Vec<UiElement>,
    pub source_dims: Option<(u32, u32)>,
}

impl ScreenSchema {
    pub fn new(elements: Vec<UiElement>) -> Self {
        Self { elements, source_dims: None }
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn node_count(&self) -> usize {
        self.elements.iter().map(UiElement::node_count).sum()
    }

    /// Pre-order traversal over every node.
    pub fn iter(&self) -> PreOrder<'_> {
        PreOrder { stack: self.elements.iter().rev().collect() }
    }

    pub(crate) fn for_each_mut(&mut self, mut f: impl FnMut(&mut UiElement)) {
        fn walk(el: &mut UiElement, f: &mut impl FnMut(&mut UiElement)) {
            f(el);
            for c in &mut el.children {
                walk(c, f);
            }
        }
        for el in &mut self.elements {
            walk(el, &mut f);
        }
    }

    /// All payload strings in pre-order.
    pub fn payloads(&self) -> impl Iterator<Item = &str> {
        self.iter().filter_map(UiElement::payload)
    }
}

pub struct PreOrder<'a> {
    stack: Vec<&'a UiElement>,
}

impl<'a> Iterator for PreOrder<'a> {
    type Item = &'a UiElement;

    fn next(&mut self) -> Option<Self::Item> {
        let el = self.stack.pop()?;
        self.stack.extend(el.children.iter().rev());
        Some(el)
    }
}

/// Flattens the tree in pre-order, dropping hierarchy and payloads.
pub fn schema_to_detections(schema: &ScreenSchema) -> Vec<(ElementClass, QuantBox)> {
    schema.iter().map(|el| (el.class.clone(), el.bbox)).collect()
}
