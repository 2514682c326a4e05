use std::path::Path;
use std::time::Duration;

use serde::Deserialize;

use crate::metrics::DEFAULT_IOU_THRESHOLD;
use crate::mixtures::{DEFAULT_CAP, DEFAULT_NEG_KEEP_PROB};
use crate::schema::CoordOrder;
use crate::taskgen::{RetryPolicy, DEFAULT_FLAGGED_LIMIT, DEFAULT_MAX_IN_FLIGHT};

/// Settings shared by all commands, read from a JSON file. Command-line flags
/// and the backend environment variable take precedence.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub backend_url: Option<String>,
    pub max_in_flight: usize,
    pub timeout_secs: f64,
    pub max_attempts: u32,
    pub retry_base_ms: u64,
    pub retry_max_ms: u64,
    pub temperature: f64,
    pub max_tokens: u32,
    pub seed: u64,
    pub coord_order: CoordOrder,
    pub cap: f64,
    pub neg_keep_prob: f64,
    pub flagged_limit: f64,
    pub iou_threshold: f64,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            backend_url: None,
            max_in_flight: DEFAULT_MAX_IN_FLIGHT,
            timeout_secs: 60.0,
            max_attempts: 3,
            retry_base_ms: 500,
            retry_max_ms: 30_000,
            temperature: 0.0,
            max_tokens: 1024,
            seed: 0,
            coord_order: CoordOrder::Yxyx,
            cap: DEFAULT_CAP,
            neg_keep_prob: DEFAULT_NEG_KEEP_PROB,
            flagged_limit: DEFAULT_FLAGGED_LIMIT,
            iou_threshold: DEFAULT_IOU_THRESHOLD,
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let config: Config = serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), String> {
        let checks = [
            (self.max_in_flight > 0, "max_in_flight must be positive"),
            (self.timeout_secs.is_finite() && self.timeout_secs > 0.0, "timeout_secs must be positive"),
            (self.max_attempts > 0, "max_attempts must be positive"),
            (self.retry_base_ms <= self.retry_max_ms, "retry_base_ms must not exceed retry_max_ms"),
            (self.temperature.is_finite() && self.temperature >= 0.0, "temperature must be >= 0"),
            (self.max_tokens > 0, "max_tokens must be positive"),
            (self.cap > 0.0 && self.cap <= 1.0, "cap must be in (0, 1]"),
            ((0.0..=1.0).contains(&self.neg_keep_prob), "neg_keep_prob must be in [0, 1]"),
            ((0.0..=1.0).contains(&self.flagged_limit), "flagged_limit must be in [0, 1]"),
            (self.iou_threshold > 0.0 && self.iou_threshold <= 1.0, "iou_threshold must be in (0, 1]"),
        ];
        match checks.iter().find(|(ok, _)| !ok) {
            Some((_, msg)) => Err((*msg).to_owned()),
            None => Ok(()),
        }
    }

    pub fn retry_policy(&self) -> RetryPolicy {
        RetryPolicy {
            max_attempts: self.max_attempts,
            base_delay: Duration::from_millis(self.retry_base_ms),
            max_delay: Duration::from_millis(self.retry_max_ms),
            jitter: true,
        }
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_secs)
    }
}
