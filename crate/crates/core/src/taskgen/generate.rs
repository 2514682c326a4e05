use std::collections::{BTreeMap, HashMap};
use std::sync::mpsc;
use std::sync::Mutex;
use std::thread;

use serde::Serialize;
use serde_json::Value;

use super::{
    complete, nav_target_matches, parse_nav_entries, parse_qa_entries, parse_rephrase_response,
    parse_summary_response, render_prompt, validate_qa, CompletionBackend, CompletionRequest, PromptTemplate,
    RetryPolicy, TaskgenError, TemplateKind, Verdict,
};
use crate::mixtures::{format_click, TaskRecord, TaskType};
use crate::schema::{CoordOrder, ScreenSchema};

pub const DEFAULT_MAX_IN_FLIGHT: usize = 8;
/// Fraction of flagged records above which a batch is marked for review.
pub const DEFAULT_FLAGGED_LIMIT: f64 = 0.2;
/// Input text of summarization records.
pub const SUMMARY_INPUT: &str = "Summarize the screen.";

/// One screen to generate tasks for.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerationItem {
    pub image_ref: String,
    pub schema: ScreenSchema,
    /// Slot values for this item; they override the config defaults.
    pub params: BTreeMap<String, String>,
}

#[derive(Debug, Clone)]
pub struct GenerationConfig {
    /// Decides how completions are parsed and which records come out.
    pub kind: TemplateKind,
    pub template: PromptTemplate,
    pub default_params: BTreeMap<String, String>,
    pub temperature: f64,
    pub max_tokens: u32,
    pub retry: RetryPolicy,
    pub max_in_flight: usize,
    pub coord_order: CoordOrder,
    pub flagged_limit: f64,
    pub seed: u64,
}

impl GenerationConfig {
    /// Builtin template for `kind`; navigation asks for 5 samples by default.
    pub fn new(kind: TemplateKind) -> Self {
        let mut default_params = BTreeMap::new();
        if kind == TemplateKind::ScreenNavigation {
            default_params.insert("num_samples".to_owned(), "5".to_owned());
        }
        Self {
            kind,
            template: kind.builtin(),
            default_params,
            temperature: 0.0,
            max_tokens: 1024,
            retry: RetryPolicy::default(),
            max_in_flight: DEFAULT_MAX_IN_FLIGHT,
            coord_order: CoordOrder::default(),
            flagged_limit: DEFAULT_FLAGGED_LIMIT,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct GenerationStats {
    pub items: usize,
    pub emitted: usize,
    /// Entries found in parseable completions.
    pub parsed_entries: usize,
    /// Entries dropped for missing fields or bad targets.
    pub rejected_entries: usize,
    /// Completions with no usable structure at all.
    pub failed_responses: usize,
    pub backend_failures: usize,
    pub render_failures: usize,
    /// Emitted but suspicious: ungrounded answers, clicks matching no element.
    pub flagged: usize,
    pub needs_review: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostic {
    pub image_ref: String,
    pub stage: &'static str,
    pub message: String,
}

enum Outcome {
    Completed(String),
    Failed(Diagnostic),
}

fn fetch(
    index: usize,
    item: &GenerationItem,
    config: &GenerationConfig,
    backend: &dyn CompletionBackend,
) -> Outcome {
    let fail = |stage, message: String| Outcome::Failed(Diagnostic { image_ref: item.image_ref.clone(), stage, message });
    let mut params = config.default_params.clone();
    params.extend(item.params.iter().map(|(k, v)| (k.clone(), v.clone())));
    let request = render_prompt(&config.template, &item.schema, &params, config.coord_order)
        .and_then(|prompt| CompletionRequest::new(prompt, config.temperature, config.max_tokens));
    let request = match request {
        Ok(r) => r,
        Err(e) => return fail("render", e.to_string()),
    };
    let seed = config.seed ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    match complete(backend, &request, &config.retry, seed) {
        Ok(result) => Outcome::Completed(result.text),
        Err(e) => fail("backend", e.to_string()),
    }
}

/// Renders, completes, parses and validates every item, calling `emit` with
/// records and `diagnose` with per-item problems, both in input order.
/// Up to `max_in_flight` completions run concurrently; a failing item never
/// stops the rest.
pub fn generate_dataset<I>(
    items: I,
    config: &GenerationConfig,
    backend: &dyn CompletionBackend,
    mut emit: impl FnMut(TaskRecord),
    mut diagnose: impl FnMut(Diagnostic),
) -> GenerationStats
where
    I: IntoIterator<Item = GenerationItem>,
    I::IntoIter: Send,
{
    let mut stats = GenerationStats::default();
    let source = Mutex::new(items.into_iter().enumerate());
    let workers = config.max_in_flight.max(1);
    let (tx, rx) = mpsc::channel::<(usize, GenerationItem, Outcome)>();

    thread::scope(|scope| {
        for _ in 0..workers {
            let tx = tx.clone();
            let source = &source;
            scope.spawn(move || loop {
                let next = source.lock().unwrap_or_else(|e| e.into_inner()).next();
                let Some((index, item)) = next else { break };
                let outcome = fetch(index, &item, config, backend);
                if tx.send((index, item, outcome)).is_err() {
                    break;
                }
            });
        }
        drop(tx);

        // reorder buffer: results arrive in completion order
        let mut pending = HashMap::new();
        let mut next = 0usize;
        for (index, item, outcome) in rx {
            pending.insert(index, (item, outcome));
            while let Some((item, outcome)) = pending.remove(&next) {
                stats.items += 1;
                match outcome {
                    Outcome::Completed(text) => records_for(&item, &text, config, &mut stats, &mut emit, &mut diagnose),
                    Outcome::Failed(d) => {
                        match d.stage {
                            "render" => stats.render_failures += 1,
                            _ => stats.backend_failures += 1,
                        }
                        diagnose(d);
                    }
                }
                next += 1;
            }
        }
    });

    stats.needs_review = stats.emitted > 0 && stats.flagged as f64 > config.flagged_limit * stats.emitted as f64;
    stats
}

fn records_for(
    item: &GenerationItem,
    text: &str,
    config: &GenerationConfig,
    stats: &mut GenerationStats,
    emit: &mut impl FnMut(TaskRecord),
    diagnose: &mut impl FnMut(Diagnostic),
) {
    let diag = |stage, e: TaskgenError| Diagnostic { image_ref: item.image_ref.clone(), stage, message: e.to_string() };
    let template = Value::from(config.kind.name());
    let mut out = |record: TaskRecord, flagged: bool, stats: &mut GenerationStats| {
        stats.emitted += 1;
        stats.flagged += usize::from(flagged);
        emit(record.with_meta("template", template.clone()));
    };
    match config.kind {
        TemplateKind::ScreenQa => match parse_qa_entries(text) {
            Ok(entries) => {
                stats.parsed_entries += entries.len();
                for entry in entries {
                    match entry {
                        Ok(pair) => {
                            let verdict = validate_qa(&pair, &item.schema);
                            let record = TaskRecord::new(TaskType::ScreenQa, &item.image_ref, pair.question, pair.answer)
                                .with_meta("verdict", verdict.as_str());
                            out(record, verdict == Verdict::Ungrounded, stats);
                        }
                        Err(e) => {
                            stats.rejected_entries += 1;
                            diagnose(diag("validate", e));
                        }
                    }
                }
            }
            Err(e) => {
                stats.failed_responses += 1;
                diagnose(diag("parse", e));
            }
        },
        TemplateKind::ScreenNavigation => match parse_nav_entries(text, config.coord_order) {
            Ok(entries) => {
                stats.parsed_entries += entries.len();
                for entry in entries {
                    match entry {
                        Ok(sample) => {
                            let matches = nav_target_matches(&sample.target, &item.schema);
                            let record = TaskRecord::new(
                                TaskType::ScreenNavigation,
                                &item.image_ref,
                                sample.instruction,
                                format_click(&sample.target),
                            )
                            .with_meta("matches_element", matches);
                            out(record, !matches, stats);
                        }
                        Err(e) => {
                            stats.rejected_entries += 1;
                            diagnose(diag("validate", e));
                        }
                    }
                }
            }
            Err(e) => {
                stats.failed_responses += 1;
                diagnose(diag("parse", e));
            }
        },
        TemplateKind::ScreenSummarization => match parse_summary_response(text) {
            Ok(summary) => {
                stats.parsed_entries += 1;
                out(TaskRecord::new(TaskType::ScreenSummarization, &item.image_ref, SUMMARY_INPUT, summary), false, stats);
            }
            Err(e) => {
                stats.failed_responses += 1;
                diagnose(diag("parse", e));
            }
        },
        TemplateKind::ShortAnswersSingle | TemplateKind::ShortAnswersMultiple => match parse_rephrase_response(text) {
            Ok(candidates) => {
                stats.parsed_entries += 1;
                let question = item
                    .params
                    .get("THE QUESTION")
                    .or_else(|| config.default_params.get("THE QUESTION"))
                    .map(|q| q.trim().trim_matches(['\'', '"']).to_owned())
                    .unwrap_or_default();
                let record = TaskRecord::new(TaskType::ScreenQa, &item.image_ref, question, candidates[0].clone())
                    .with_meta("candidates", candidates);
                out(record, false, stats);
            }
            Err(e) => {
                stats.failed_responses += 1;
                diagnose(diag("parse", e));
            }
        },
    }
}
