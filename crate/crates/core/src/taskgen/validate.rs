use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::QaPair;
use crate::metrics::{iou, normalize_answer};
use crate::schema::{QuantBox, ScreenSchema};

/// IoU a navigation target needs with some schema element to count as
/// matching it.
pub const NAV_MATCH_IOU: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    /// Every answer token appears in the schema text.
    Grounded,
    /// A number, possibly derived rather than copied from the screen.
    Numeric,
    Ungrounded,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Grounded => "grounded",
            Verdict::Numeric => "numeric",
            Verdict::Ungrounded => "ungrounded",
        }
    }
}

fn is_numeric(answer: &str) -> bool {
    let s: String = answer.chars().filter(|c| !c.is_whitespace() && *c != ',').collect();
    let s = s.strip_suffix('%').unwrap_or(&s);
    let s = s.strip_prefix(['$', '€', '£']).unwrap_or(s);
    !s.is_empty() && s.parse::<f64>().is_ok_and(f64::is_finite)
}

/// Heuristic grounding check of a generated answer against the schema text.
pub fn validate_qa(pair: &QaPair, schema: &ScreenSchema) -> Verdict {
    if is_numeric(&pair.answer) {
        return Verdict::Numeric;
    }
    let answer = normalize_answer(&pair.answer);
    if answer.is_empty() {
        return Verdict::Ungrounded;
    }
    let vocab: HashSet<String> = schema
        .payloads()
        .flat_map(|p| normalize_answer(p).split_whitespace().map(str::to_owned).collect::<Vec<_>>())
        .collect();
    if answer.split_whitespace().all(|t| vocab.contains(t)) {
        Verdict::Grounded
    } else {
        Verdict::Ungrounded
    }
}

/// Whether `target` overlaps some schema element with IoU of at least
/// [`NAV_MATCH_IOU`].
pub fn nav_target_matches(target: &QuantBox, schema: &ScreenSchema) -> bool {
    schema.iter().any(|el| iou(&el.bbox, target) >= NAV_MATCH_IOU)
}
