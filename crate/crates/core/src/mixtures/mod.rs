//! Training and evaluation mixtures: task records, capped size-proportional
//! weights, seeded sampling, and multipage-document decomposition.

mod docvqa;
mod record;

use std::collections::{BTreeMap, HashSet};

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use docvqa::{build_mpdocvqa_pairs, score_mpdocvqa, PagePair, Polarity, DEFAULT_NEG_KEEP_PROB, NO_ANSWER};
pub use record::{format_click, parse_click, record_roundtrip, RecordError, TaskRecord, TaskType};

/// Default per-task weight cap.
pub const DEFAULT_CAP: f64 = 0.15;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MixtureError {
    #[error("cap {cap} with {tasks} tasks cannot sum to 1")]
    InfeasibleCap { cap: f64, tasks: usize },
    #[error("cap must be in (0, 1], got {0}")]
    InvalidCap(f64),
    #[error("task {0} has zero size")]
    ZeroSize(String),
    #[error("duplicate task name {0}")]
    DuplicateTask(String),
    #[error("mixture has no tasks")]
    NoTasks,
    #[error("task {0} has positive weight but no records")]
    EmptySource(String),
    #[error("weights must be non-negative with a positive total")]
    InvalidWeights,
    #[error("answer page index {index} out of range for {pages} pages")]
    PageOutOfRange { index: usize, pages: usize },
    #[error("probability {0} outside [0, 1]")]
    InvalidProbability(f64),
    #[error("positive answer may not be the no-answer marker")]
    NoAnswerPositive,
    #[error("no page predictions")]
    NoPredictions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureTask {
    pub name: String,
    pub size: u64,
    #[serde(default)]
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureSpec {
    pub tasks: Vec<MixtureTask>,
    #[serde(default = "default_cap")]
    pub cap: f64,
}

fn default_cap() -> f64 {
    DEFAULT_CAP
}

impl MixtureSpec {
    pub fn validate(&self) -> Result<(), MixtureError> {
        if self.tasks.is_empty() {
            return Err(MixtureError::NoTasks);
        }
        if !(self.cap > 0.0 && self.cap <= 1.0) {
            return Err(MixtureError::InvalidCap(self.cap));
        }
        let mut seen = HashSet::new();
        for t in &self.tasks {
            if t.size == 0 {
                return Err(MixtureError::ZeroSize(t.name.clone()));
            }
            if !seen.insert(t.name.as_str()) {
                return Err(MixtureError::DuplicateTask(t.name.clone()));
            }
        }
        if self.cap * (self.tasks.len() as f64) < 1.0 - 1e-12 {
            return Err(MixtureError::InfeasibleCap { cap: self.cap, tasks: self.tasks.len() });
        }
        Ok(())
    }
}

/// Size-proportional weights with no task above `spec.cap`.
///
/// Water-filling: tasks whose proportional share exceeds the cap are pinned
/// at the cap and the remaining mass is re-split proportionally among the
/// others, until no share exceeds the cap. Returned in spec order.
pub fn compute_weights(spec: &MixtureSpec) -> Result<Vec<(String, f64)>, MixtureError> {
    spec.validate()?;
    let n = spec.tasks.len();
    let mut pinned = vec![false; n];
    let mut weights = vec![0.0; n];
    loop {
        let pinned_count = pinned.iter().filter(|p| **p).count();
        let free_mass = 1.0 - spec.cap * pinned_count as f64;
        let free_size: f64 = spec.tasks.iter().zip(&pinned).filter(|(_, p)| !**p).map(|(t, _)| t.size as f64).sum();
        let mut changed = false;
        for (i, t) in spec.tasks.iter().enumerate() {
            if pinned[i] {
                weights[i] = spec.cap;
                continue;
            }
            weights[i] = free_mass * t.size as f64 / free_size;
        }
        for i in 0..n {
            if !pinned[i] && weights[i] > spec.cap {
                pinned[i] = true;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    Ok(spec.tasks.iter().map(|t| t.name.clone()).zip(weights).collect())
}

/// Endless seeded stream of records: pick a task by weight, then a record
/// uniformly within it.
pub struct MixtureSampler<'a> {
    tasks: Vec<&'a [TaskRecord]>,
    dist: WeightedIndex<f64>,
    rng: ChaCha8Rng,
}

impl<'a> MixtureSampler<'a> {
    pub fn new(
        weights: &[(String, f64)],
        sources: &'a BTreeMap<String, Vec<TaskRecord>>,
        seed: u64,
    ) -> Result<Self, MixtureError> {
        let mut tasks = Vec::with_capacity(weights.len());
        for (name, w) in weights {
            let records = sources.get(name).map(Vec::as_slice).unwrap_or(&[]);
            if *w > 0.0 && records.is_empty() {
                return Err(MixtureError::EmptySource(name.clone()));
            }
            tasks.push(records);
        }
        let dist = WeightedIndex::new(weights.iter().map(|(_, w)| *w)).map_err(|_| MixtureError::InvalidWeights)?;
        Ok(Self { tasks, dist, rng: ChaCha8Rng::seed_from_u64(seed) })
    }
}

impl Iterator for MixtureSampler<'_> {
    type Item = TaskRecord;

    fn next(&mut self) -> Option<TaskRecord> {
        let task = self.tasks[self.dist.sample(&mut self.rng)];
        let i = self.rng.gen_range(0..task.len());
        Some(task[i].clone())
    }
}

/// `n` records drawn from `sources` by `weights`.
pub fn sample_mixture(
    weights: &[(String, f64)],
    sources: &BTreeMap<String, Vec<TaskRecord>>,
    n: usize,
    seed: u64,
) -> Result<Vec<TaskRecord>, MixtureError> {
    Ok(MixtureSampler::new(weights, sources, seed)?.take(n).collect())
}

/// Everything needed to reproduce a sampled mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureManifest {
    pub spec: MixtureSpec,
    pub weights: BTreeMap<String, f64>,
    pub cap: f64,
    pub seed: u64,
    pub samples: usize,
    pub source_checksums: BTreeMap<String, String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
