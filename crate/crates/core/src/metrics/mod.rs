//! Evaluation metrics for screen and document benchmarks.
//!
//! Box metrics ([`iou`], [`match_detections`], [`acc_at_iou`]) work on either
//! bucketized or pixel boxes. Text metrics cover SQuAD F1, ANLS, relaxed
//! accuracy, exact match and CIDEr-D. [`aggregate_score`] combines per-task
//! ratios into a single geometric mean.

mod aggregate;
mod assignment;
mod boxes;
mod cider;
mod text;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use aggregate::aggregate_score;
pub use assignment::max_weight_assignment;
pub use boxes::{
    acc_at_iou, iou, match_detections, BoxGeometry, ClassMetrics, DetectionMetrics, MatchedPair,
    DEFAULT_IOU_THRESHOLD,
};
pub use cider::{cider, Cider, CIDER_SIGMA, CIDER_MAX_N};
pub use text::{
    anls, anls_corpus, exact_match, levenshtein, normalize_answer, relaxed_accuracy, squad_f1,
    ANLS_THRESHOLD,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("at least one reference answer is required")]
    NoReferences,
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("document frequencies need at least 2 corpus items or an external table")]
    DegenerateCorpus,
    #[error("predictions ({predictions}) and references ({references}) differ in length")]
    LengthMismatch { predictions: usize, references: usize },
    #[error("task sets differ: {0}")]
    KeyMismatch(String),
    #[error("baseline score for task {task} must be positive, got {score}")]
    NonPositiveBaseline { task: String, score: f64 },
    #[error("score for task {task} must be non-negative, got {score}")]
    NegativeScore { task: String, score: f64 },
}

/// Scalar result of one metric over a set of samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub metric: String,
    pub score: f64,
    pub count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_sample: Option<Vec<f64>>,
}

impl MetricReport {
    /// Mean over `samples`; zero when empty.
    pub fn mean(metric: impl Into<String>, samples: Vec<f64>) -> Self {
        let count = samples.len();
        let score = if count == 0 { 0.0 } else { samples.iter().sum::<f64>() / count as f64 };
        Self { metric: metric.into(), score, count, per_sample: Some(samples) }
    }
}
