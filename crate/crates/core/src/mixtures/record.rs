use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::schema::{parse_schema, QuantBox};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskType {
    ScreenAnnotation,
    ScreenQa,
    ScreenNavigation,
    ScreenSummarization,
    DocVqaPage,
}

impl fmt::Display for TaskType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TaskType::ScreenAnnotation => "screen_annotation",
            TaskType::ScreenQa => "screen_qa",
            TaskType::ScreenNavigation => "screen_navigation",
            TaskType::ScreenSummarization => "screen_summarization",
            TaskType::DocVqaPage => "doc_vqa_page",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
pub enum RecordError {
    #[error("malformed record: {0}")]
    Json(#[from] serde_json::Error),
    #[error("navigation target {0:?} is not `click INT INT INT INT` with a valid box")]
    BadNavigationTarget(String),
    #[error("annotation target does not parse as a schema: {0}")]
    BadAnnotationTarget(#[from] crate::schema::ParseError),
}

/// A unified training or evaluation sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskRecord {
    pub task_type: TaskType,
    pub image_ref: String,
    pub input_text: String,
    pub target_text: String,
    #[serde(default)]
    pub metadata: Map<String, Value>,
}

impl TaskRecord {
    pub fn new(
        task_type: TaskType,
        image_ref: impl Into<String>,
        input_text: impl Into<String>,
        target_text: impl Into<String>,
    ) -> Self {
        Self {
            task_type,
            image_ref: image_ref.into(),
            input_text: input_text.into(),
            target_text: target_text.into(),
            metadata: Map::new(),
        }
    }

    pub fn with_meta(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.metadata.insert(key.to_owned(), value.into());
        self
    }

    /// Checks the task-specific target format.
    pub fn validate(&self) -> Result<(), RecordError> {
        match self.task_type {
            TaskType::ScreenNavigation => {
                parse_click_box(&self.target_text)
                    .ok_or_else(|| RecordError::BadNavigationTarget(self.target_text.clone()))?;
            }
            TaskType::ScreenAnnotation => {
                parse_schema(&self.target_text)?;
            }
            _ => {}
        }
        Ok(())
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("records always serialize")
    }

    pub fn from_json_line(line: &str) -> Result<Self, RecordError> {
        let record: TaskRecord = serde_json::from_str(line)?;
        record.validate()?;
        Ok(record)
    }
}

/// Serializes then re-parses a record.
pub fn record_roundtrip(record: &TaskRecord) -> Result<TaskRecord, RecordError> {
    TaskRecord::from_json_line(&record.to_json_line())
}

/// `click ymin xmin ymax xmax`
pub fn format_click(b: &QuantBox) -> String {
    let [a, b2, c, d] = b.to_array();
    format!("click {a} {b2} {c} {d}")
}

/// Raw coordinates of a `click INT INT INT INT` answer, each in `0..=999`.
/// Box ordering is not checked.
pub fn parse_click(text: &str) -> Option<[u16; 4]> {
    let mut parts = text.split_whitespace();
    if parts.next()? != "click" {
        return None;
    }
    let mut out = [0u16; 4];
    for slot in &mut out {
        let tok = parts.next()?;
        if !tok.bytes().all(|b| b.is_ascii_digit()) || (tok.len() > 1 && tok.starts_with('0')) {
            return None;
        }
        let v: u16 = tok.parse().ok()?;
        if v > crate::schema::QUANT_MAX {
            return None;
        }
        *slot = v;
    }
    parts.next().is_none().then_some(out)
}

fn parse_click_box(text: &str) -> Option<QuantBox> {
    let [a, b, c, d] = parse_click(text)?;
    QuantBox::new(a, b, c, d).ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_preserves_metadata() {
        let r = TaskRecord::new(TaskType::ScreenQa, "img/1.png", "What?", "42")
            .with_meta("verdict", "numeric")
            .with_meta("x_custom", serde_json::json!({"nested": [1, 2]}));
        assert_eq!(record_roundtrip(&r).unwrap(), r);
    }

    #[test]
    fn missing_task_type() {
        let line = r#"{"image_ref":"a","input_text":"b","target_text":"c"}"#;
        assert!(matches!(TaskRecord::from_json_line(line), Err(RecordError::Json(_))));
    }

    #[test]
    fn target_formats_checked() {
        let nav = TaskRecord::new(TaskType::ScreenNavigation, "a", "tap it", "click 0 0 999 999");
        assert!(nav.validate().is_ok());
        let bad = TaskRecord::new(TaskType::ScreenNavigation, "a", "tap it", "click 0 137 31 113");
        assert!(bad.validate().is_err());
        let ann = TaskRecord::new(TaskType::ScreenAnnotation, "a", "", "TEXT 0 0 5 1");
        assert!(ann.validate().is_ok());
        let ann = TaskRecord::new(TaskType::ScreenAnnotation, "a", "", "TEXT 0 0 1");
        assert!(ann.validate().is_err());
    }

    #[test]
    fn click_parsing() {
        assert_eq!(parse_click("click 0 137 31 113"), Some([0, 137, 31, 113]));
        assert_eq!(parse_click("  click   1 2 3 4 "), Some([1, 2, 3, 4]));
        assert_eq!(parse_click("tap 1 2 3 4"), None);
        assert_eq!(parse_click("click 1 2 3"), None);
        assert_eq!(parse_click("click 1 2 3 4 5"), None);
        assert_eq!(parse_click("click 1 2 3 1000"), None);
        assert_eq!(parse_click("click 1 2 3 -4"), None);
        assert_eq!(parse_click("click 01 2 3 4"), None);
        assert_eq!(format_click(&QuantBox::full()), "click 0 0 999 999");
    }
}
