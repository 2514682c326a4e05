use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{render_svg, Command, Context, Exit, GenerateArgs, Io, SchemaCmd};
use crate::compose::AnnotationRecord;
use crate::metrics::{
    acc_at_iou, aggregate_score, anls, cider, exact_match, match_detections, relaxed_accuracy, squad_f1, MetricReport,
};
use crate::mixtures::{
    build_mpdocvqa_pairs, compute_weights, sha256_hex, MixtureManifest, MixtureSampler, MixtureSpec, MixtureTask,
    TaskRecord, TaskType,
};
use crate::patching::compute_grid;
use crate::schema::{parse_schema_with, schema_to_detections, serialize_schema_with, ElementClass, QuantBox, ScreenSchema};
use crate::taskgen::{
    generate_dataset, render_prompt, CompletionBackend, CompletionRequest, GenerationConfig, GenerationItem,
    HttpBackend, PromptTemplate, StubBackend,
};

pub(super) fn dispatch(command: &Command, ctx: &Context, io: &mut Io<'_>) -> Exit {
    match command {
        Command::Schema(cmd) => cmd_schema(cmd, ctx, io),
        Command::Compose { input } => cmd_compose(input.as_deref(), ctx, io),
        Command::Patch { input, patch_size, budget } => cmd_patch(input.as_deref(), *patch_size, *budget, io),
        Command::Generate(args) => cmd_generate(args, ctx, io),
        Command::Eval { metric, input, iou_threshold, fold_case, per_sample } => {
            let threshold = iou_threshold.unwrap_or(ctx.config.iou_threshold);
            cmd_eval(metric, input.as_deref(), threshold, *fold_case, *per_sample, io)
        }
        Command::Mixture { spec, samples, cap, manifest, output } => {
            cmd_mixture(spec, *samples, *cap, manifest.as_deref(), output.as_deref(), ctx, io)
        }
        Command::DocvqaPairs { input, keep_prob } => cmd_docvqa(input.as_deref(), *keep_prob, ctx, io),
    }
}

fn display(path: Option<&Path>) -> String {
    path.map_or_else(|| "-".to_owned(), |p| p.display().to_string())
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rfind('\n').map_or(before.chars().count(), |i| before[i + 1..].chars().count()) + 1;
    (line, col)
}

fn load_schema(io: &mut Io<'_>, command: &str, path: Option<&Path>, ctx: &Context) -> Option<ScreenSchema> {
    let text = match io.read_all(path) {
        Ok(t) => t,
        Err(e) => {
            io.diag(command, json!({ "source": display(path), "error": e.to_string() }));
            return None;
        }
    };
    match parse_schema_with(&text, ctx.config.coord_order) {
        Ok(s) => Some(s),
        Err(e) => {
            let (line, column) = line_col(&text, e.offset);
            io.diag(
                command,
                json!({ "source": display(path), "offset": e.offset, "line": line, "column": column, "error": e.to_string() }),
            );
            None
        }
    }
}

fn cmd_schema(cmd: &SchemaCmd, ctx: &Context, io: &mut Io<'_>) -> Exit {
    match cmd {
        SchemaCmd::Validate { files } => {
            let paths: Vec<Option<&Path>> =
                if files.is_empty() { vec![None] } else { files.iter().map(|p| Some(p.as_path())).collect() };
            let mut exit = Exit::Success;
            for path in paths {
                if load_schema(io, "schema validate", path, ctx).is_none() {
                    exit = Exit::Input;
                }
            }
            exit
        }
        SchemaCmd::Fmt { file } => match load_schema(io, "schema fmt", file.as_deref(), ctx) {
            Some(s) => {
                let _ = writeln!(io.stdout, "{}", serialize_schema_with(&s, ctx.config.coord_order));
                Exit::Success
            }
            None => Exit::Input,
        },
        SchemaCmd::Render { file, width, height } => {
            if *width == 0 || *height == 0 {
                io.diag("schema render", json!({ "error": "width and height must be positive" }));
                return Exit::Input;
            }
            match load_schema(io, "schema render", file.as_deref(), ctx) {
                Some(s) => {
                    let _ = io.stdout.write_all(render_svg(&s, *width, *height).as_bytes());
                    Exit::Success
                }
                None => Exit::Input,
            }
        }
    }
}

/// Applies `f` to every non-blank line; failures become diagnostics and the
/// batch continues.
fn for_each_line(
    io: &mut Io<'_>,
    command: &str,
    path: Option<&Path>,
    mut f: impl FnMut(&str, usize, &mut Io<'_>) -> Result<(), String>,
) -> Exit {
    let lines = match io.read_lines(path) {
        Ok(l) => l,
        Err(e) => {
            io.diag(command, json!({ "source": display(path), "error": e.to_string() }));
            return Exit::Input;
        }
    };
    let mut exit = Exit::Success;
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        if let Err(e) = f(line, i, io) {
            io.diag(command, json!({ "source": display(path), "line": i + 1, "error": e }));
            exit = Exit::Input;
        }
    }
    exit
}

#[derive(Serialize)]
struct ComposedLine<'a> {
    image_ref: &'a str,
    width: f64,
    height: f64,
    schema: String,
}

fn cmd_compose(input: Option<&Path>, ctx: &Context, io: &mut Io<'_>) -> Exit {
    for_each_line(io, "compose", input, |line, _, io| {
        let record: AnnotationRecord = serde_json::from_str(line).map_err(|e| e.to_string())?;
        let schema = record.compose().map_err(|e| e.to_string())?;
        let out = ComposedLine {
            image_ref: &record.image_ref,
            width: record.width,
            height: record.height,
            schema: serialize_schema_with(&schema, ctx.config.coord_order),
        };
        let _ = writeln!(io.stdout, "{}", serde_json::to_string(&out).expect("serializes"));
        Ok(())
    })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PatchLine {
    width: u32,
    height: u32,
    patch_size: Option<u32>,
    budget: Option<u32>,
}

fn cmd_patch(input: Option<&Path>, patch_size: u32, budget: u32, io: &mut Io<'_>) -> Exit {
    for_each_line(io, "patch", input, |line, _, io| {
        let req: PatchLine = serde_json::from_str(line).map_err(|e| e.to_string())?;
        let (p, b) = (req.patch_size.unwrap_or(patch_size), req.budget.unwrap_or(budget));
        let grid = compute_grid(req.width, req.height, p, b).map_err(|e| e.to_string())?;
        let mut out = json!({ "width": req.width, "height": req.height, "budget": b, "num_patches": grid.num_patches() });
        if let (Value::Object(o), Ok(Value::Object(g))) = (&mut out, serde_json::to_value(grid)) {
            o.extend(g);
        }
        let _ = writeln!(io.stdout, "{out}");
        Ok(())
    })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ItemLine {
    image_ref: String,
    schema: String,
    #[serde(default)]
    params: BTreeMap<String, String>,
}

fn input_files(inputs: &[PathBuf]) -> Result<Vec<PathBuf>, String> {
    let mut files = Vec::new();
    for path in inputs {
        if path.is_dir() {
            let mut entries: Vec<PathBuf> = fs::read_dir(path)
                .map_err(|e| format!("{}: {e}", path.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.is_file())
                .collect();
            entries.sort();
            files.extend(entries);
        } else {
            files.push(path.clone());
        }
    }
    Ok(files)
}

fn load_items(args: &GenerateArgs, ctx: &Context, io: &mut Io<'_>) -> (Vec<GenerationItem>, Exit) {
    let order = ctx.config.coord_order;
    let mut items = Vec::new();
    let mut exit = Exit::Success;
    let files = match input_files(&args.inputs) {
        Ok(f) => f,
        Err(e) => {
            io.diag("generate", json!({ "error": e }));
            return (items, Exit::Input);
        }
    };
    for path in files {
        if path.extension().is_some_and(|e| e == "jsonl") {
            let status = for_each_line(io, "generate", Some(&path), |line, _, _| {
                let item: ItemLine = serde_json::from_str(line).map_err(|e| e.to_string())?;
                let schema = parse_schema_with(&item.schema, order).map_err(|e| e.to_string())?;
                items.push(GenerationItem { image_ref: item.image_ref, schema, params: item.params });
                Ok(())
            });
            exit = exit.max(status);
        } else {
            let image_ref = path.file_stem().map_or_else(String::new, |s| s.to_string_lossy().into_owned());
            match load_schema(io, "generate", Some(&path), ctx) {
                Some(schema) => items.push(GenerationItem { image_ref, schema, params: BTreeMap::new() }),
                None => exit = Exit::Input,
            }
        }
    }
    (items, exit)
}

fn writer<'a>(path: Option<&Path>, stdout: &'a mut dyn Write) -> std::io::Result<Box<dyn Write + 'a>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(stdout),
    })
}

fn cmd_generate(args: &GenerateArgs, ctx: &Context, io: &mut Io<'_>) -> Exit {
    let cfg = &ctx.config;
    let mut config = GenerationConfig::new(args.template);
    if let Some(path) = &args.template_file {
        let body = fs::read_to_string(path).map_err(|e| e.to_string());
        match body.and_then(|b| PromptTemplate::new(path.display().to_string(), b).map_err(|e| e.to_string())) {
            Ok(t) => config.template = t,
            Err(e) => {
                io.diag("generate", json!({ "source": path.display().to_string(), "error": e }));
                return Exit::Input;
            }
        }
    }
    if let Some(n) = args.num_samples {
        config.default_params.insert("num_samples".into(), n.to_string());
    }
    config.default_params.extend(args.params.iter().cloned());
    config.temperature = cfg.temperature;
    config.max_tokens = cfg.max_tokens;
    config.retry = cfg.retry_policy();
    config.max_in_flight = args.max_in_flight.unwrap_or(cfg.max_in_flight).max(1);
    config.coord_order = cfg.coord_order;
    config.flagged_limit = cfg.flagged_limit;
    config.seed = cfg.seed;

    let (items, mut exit) = load_items(args, ctx, io);

    if let Some(path) = &args.dump_requests {
        let result = (|| -> Result<(), String> {
            let mut out = BufWriter::new(File::create(path).map_err(|e| e.to_string())?);
            for item in &items {
                let mut params = config.default_params.clone();
                params.extend(item.params.clone());
                let prompt =
                    render_prompt(&config.template, &item.schema, &params, config.coord_order).map_err(|e| e.to_string())?;
                let req = CompletionRequest::new(prompt, config.temperature, config.max_tokens).map_err(|e| e.to_string())?;
                let line = json!({ "image_ref": item.image_ref, "hash": req.hash(), "prompt": req.prompt });
                writeln!(out, "{line}").map_err(|e| e.to_string())?;
            }
            out.flush().map_err(|e| e.to_string())
        })();
        if let Err(e) = result {
            io.diag("generate", json!({ "error": e }));
            return Exit::Input;
        }
        return exit;
    }

    let backend: Box<dyn CompletionBackend> = if let Some(stub) = &args.stub {
        match StubBackend::from_file(stub) {
            Ok(b) => Box::new(b),
            Err(e) => {
                io.diag("generate", json!({ "error": e.to_string() }));
                return Exit::Input;
            }
        }
    } else if let Some(url) = args.backend_url.as_ref().or(cfg.backend_url.as_ref()) {
        Box::new(HttpBackend::new(url.clone(), cfg.timeout()))
    } else {
        io.diag("generate", json!({ "error": "no backend: pass --stub or --backend-url" }));
        return Exit::Input;
    };

    let Io { stdout, stderr, .. } = io;
    let mut out = match writer(args.output.as_deref(), &mut **stdout) {
        Ok(w) => w,
        Err(e) => {
            let _ = writeln!(stderr, "{}", json!({ "command": "generate", "error": e.to_string() }));
            return Exit::Input;
        }
    };
    let mut diags = Vec::new();
    let stats = generate_dataset(
        items,
        &config,
        backend.as_ref(),
        |r| {
            let _ = writeln!(out, "{}", r.to_json_line());
        },
        |d| diags.push(d),
    );
    let _ = out.flush();
    drop(out);
    for d in &diags {
        let _ = writeln!(stderr, "{}", json!({ "command": "generate", "image_ref": d.image_ref, "stage": d.stage, "error": d.message }));
    }
    let stats_json = serde_json::to_value(&stats).expect("stats serialize");
    let _ = writeln!(stderr, "{}", json!({ "command": "generate", "stats": stats_json }));
    if let Some(path) = &args.stats {
        if let Err(e) = fs::write(path, format!("{stats_json:#}\n")) {
            let _ = writeln!(stderr, "{}", json!({ "command": "generate", "error": e.to_string() }));
            exit = exit.max(Exit::Input);
        }
    }
    if stats.backend_failures > 0 {
        exit = Exit::Backend;
    } else if stats.render_failures > 0 {
        exit = exit.max(Exit::Input);
    }
    exit
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TextLine {
    prediction: String,
    #[serde(default)]
    references: Vec<String>,
    #[serde(default)]
    reference: Option<String>,
}

impl TextLine {
    fn refs(self) -> Result<(String, Vec<String>), String> {
        let mut refs = self.references;
        refs.extend(self.reference);
        if refs.is_empty() {
            return Err("no references".into());
        }
        Ok((self.prediction, refs))
    }
}

#[derive(Deserialize)]
struct ClassBox {
    class: ElementClass,
    #[serde(rename = "box")]
    bbox: QuantBox,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Detections {
    Schema(String),
    Boxes(Vec<ClassBox>),
}

impl Detections {
    fn resolve(self) -> Result<Vec<(ElementClass, QuantBox)>, String> {
        match self {
            Detections::Schema(text) => {
                crate::schema::parse_schema(&text).map(|s| schema_to_detections(&s)).map_err(|e| e.to_string())
            }
            Detections::Boxes(b) => Ok(b.into_iter().map(|c| (c.class, c.bbox)).collect()),
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DetectionLine {
    prediction: Detections,
    reference: Detections,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BoxLine {
    prediction: Option<QuantBox>,
    reference: QuantBox,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AggregateInput {
    baseline: BTreeMap<String, f64>,
    variant: BTreeMap<String, f64>,
}

#[derive(Serialize)]
struct EvalOutput {
    #[serde(flatten)]
    report: MetricReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    detail: Option<Value>,
}

pub const METRICS: [&str; 8] =
    ["squad_f1", "anls", "relaxed_accuracy", "exact_match", "cider", "f1_iou", "acc_iou", "aggregate"];

fn ratio(num: usize, den: usize, empty: f64) -> f64 {
    if den == 0 {
        empty
    } else {
        num as f64 / den as f64
    }
}

fn cmd_eval(metric: &str, input: Option<&Path>, threshold: f64, fold_case: bool, per_sample: bool, io: &mut Io<'_>) -> Exit {
    if !METRICS.contains(&metric) {
        io.diag("eval", json!({ "error": format!("unknown metric {metric:?}"), "known": METRICS }));
        return Exit::Input;
    }
    if !(threshold > 0.0 && threshold <= 1.0) {
        io.diag("eval", json!({ "error": "iou threshold must be in (0, 1]" }));
        return Exit::Input;
    }
    if metric == "aggregate" {
        let parsed = io
            .read_all(input)
            .map_err(|e| e.to_string())
            .and_then(|t| serde_json::from_str::<AggregateInput>(&t).map_err(|e| e.to_string()))
            .and_then(|a| aggregate_score(&a.baseline, &a.variant).map(|s| (s, a.baseline.len())).map_err(|e| e.to_string()));
        return match parsed {
            Ok((score, count)) => {
                let report = MetricReport { metric: metric.into(), score, count, per_sample: None };
                let _ = writeln!(io.stdout, "{}", serde_json::to_string(&EvalOutput { report, detail: None }).expect("serializes"));
                Exit::Success
            }
            Err(e) => {
                io.diag("eval", json!({ "source": display(input), "error": e }));
                Exit::Input
            }
        };
    }

    let mut samples = Vec::new();
    let mut corpus: Vec<(String, Vec<String>)> = Vec::new();
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    let mut exit = for_each_line(io, "eval", input, |line, _, _| {
        match metric {
            "f1_iou" => {
                let l: DetectionLine = serde_json::from_str(line).map_err(|e| e.to_string())?;
                let m = match_detections(&l.prediction.resolve()?, &l.reference.resolve()?, threshold);
                tp += m.tp;
                fp += m.fp;
                fn_ += m.fn_;
                samples.push(m.f1);
            }
            "acc_iou" => {
                let l: BoxLine = serde_json::from_str(line).map_err(|e| e.to_string())?;
                samples.push(acc_at_iou(l.prediction.as_ref(), &l.reference, threshold));
            }
            _ => {
                let (pred, refs) = serde_json::from_str::<TextLine>(line).map_err(|e| e.to_string())?.refs()?;
                let score = match metric {
                    "squad_f1" => squad_f1(&pred, &refs).map_err(|e| e.to_string())?,
                    "anls" => anls(&pred, &refs).map_err(|e| e.to_string())?,
                    "relaxed_accuracy" => refs.iter().map(|r| relaxed_accuracy(&pred, r)).fold(0.0, f64::max),
                    "exact_match" => refs.iter().map(|r| exact_match(&pred, r, fold_case)).fold(0.0, f64::max),
                    _ => {
                        corpus.push((pred, refs));
                        return Ok(());
                    }
                };
                samples.push(score);
            }
        }
        Ok(())
    });

    let (report, detail) = match metric {
        "cider" => {
            let (preds, refs): (Vec<String>, Vec<Vec<String>>) = corpus.into_iter().unzip();
            match cider(&preds, &refs) {
                Ok((mean, per_item)) => {
                    (MetricReport { metric: metric.into(), score: mean, count: per_item.len(), per_sample: Some(per_item) }, None)
                }
                Err(e) => {
                    io.diag("eval", json!({ "source": display(input), "error": e.to_string() }));
                    return Exit::Input;
                }
            }
        }
        "f1_iou" => {
            let p = ratio(tp, tp + fp, if fn_ == 0 { 1.0 } else { 0.0 });
            let r = ratio(tp, tp + fn_, if fp == 0 { 1.0 } else { 0.0 });
            let f1 = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
            let report = MetricReport { metric: metric.into(), score: f1, count: samples.len(), per_sample: Some(samples) };
            (report, Some(json!({ "precision": p, "recall": r, "tp": tp, "fp": fp, "fn": fn_ })))
        }
        _ => (MetricReport::mean(metric, samples), None),
    };
    let mut report = report;
    if !per_sample {
        report.per_sample = None;
    }
    if report.count == 0 {
        io.diag("eval", json!({ "source": display(input), "error": "no scorable lines" }));
        exit = Exit::Input;
    }
    let _ = writeln!(io.stdout, "{}", serde_json::to_string(&EvalOutput { report, detail }).expect("serializes"));
    exit
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecFile {
    tasks: Vec<MixtureTask>,
    cap: Option<f64>,
}

fn cmd_mixture(
    spec_path: &Path,
    samples: usize,
    cap: Option<f64>,
    manifest_path: Option<&Path>,
    output: Option<&Path>,
    ctx: &Context,
    io: &mut Io<'_>,
) -> Exit {
    let fail = |io: &mut Io<'_>, e: String| {
        io.diag("mixture", json!({ "source": spec_path.display().to_string(), "error": e }));
        Exit::Input
    };
    let file: SpecFile = match fs::read_to_string(spec_path)
        .map_err(|e| e.to_string())
        .and_then(|t| serde_json::from_str(&t).map_err(|e| e.to_string()))
    {
        Ok(f) => f,
        Err(e) => return fail(io, e),
    };
    let spec = MixtureSpec { tasks: file.tasks, cap: cap.or(file.cap).unwrap_or(ctx.config.cap) };
    let weights = match compute_weights(&spec) {
        Ok(w) => w,
        Err(e) => return fail(io, e.to_string()),
    };

    let base = spec_path.parent().unwrap_or(Path::new("."));
    let mut sources: BTreeMap<String, Vec<TaskRecord>> = BTreeMap::new();
    let mut checksums = BTreeMap::new();
    let mut exit = Exit::Success;
    for task in spec.tasks.iter().filter(|t| !t.source.is_empty()) {
        let path = base.join(&task.source);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) => return fail(io, format!("{}: {e}", path.display())),
        };
        checksums.insert(task.name.clone(), sha256_hex(&bytes));
        let text = String::from_utf8_lossy(&bytes);
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            match TaskRecord::from_json_line(line) {
                Ok(r) => records.push(r),
                Err(e) => {
                    io.diag("mixture", json!({ "source": path.display().to_string(), "line": i + 1, "error": e.to_string() }));
                    exit = Exit::Input;
                }
            }
        }
        sources.insert(task.name.clone(), records);
    }

    let seed = ctx.config.seed;
    let manifest = MixtureManifest {
        weights: weights.iter().cloned().collect(),
        cap: spec.cap,
        spec,
        seed,
        samples,
        source_checksums: checksums,
    };
    let manifest_json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");

    if samples > 0 {
        let sampler = match MixtureSampler::new(&weights, &sources, seed) {
            Ok(s) => s,
            Err(e) => return fail(io, e.to_string()),
        };
        let Io { stdout, stderr, .. } = io;
        match writer(output, &mut **stdout) {
            Ok(mut out) => {
                for record in sampler.take(samples) {
                    let _ = writeln!(out, "{}", record.to_json_line());
                }
                let _ = out.flush();
            }
            Err(e) => {
                let _ = writeln!(stderr, "{}", json!({ "command": "mixture", "error": e.to_string() }));
                return Exit::Input;
            }
        }
    }
    match manifest_path {
        Some(p) => {
            if let Err(e) = fs::write(p, manifest_json + "\n") {
                return fail(io, format!("{}: {e}", p.display()));
            }
        }
        None if samples == 0 => {
            let _ = writeln!(io.stdout, "{manifest_json}");
        }
        None => {}
    }
    exit
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DocLine {
    question: String,
    answer: String,
    pages: Vec<String>,
    answer_page: usize,
}

fn cmd_docvqa(input: Option<&Path>, keep_prob: Option<f64>, ctx: &Context, io: &mut Io<'_>) -> Exit {
    let keep = keep_prob.unwrap_or(ctx.config.neg_keep_prob);
    let seed = ctx.config.seed;
    for_each_line(io, "docvqa-pairs", input, |line, i, io| {
        let l: DocLine = serde_json::from_str(line).map_err(|e| e.to_string())?;
        let pairs = build_mpdocvqa_pairs(&l.question, &l.answer, &l.pages, l.answer_page, keep, seed.wrapping_add(i as u64))
            .map_err(|e| e.to_string())?;
        for p in pairs {
            let polarity = serde_json::to_value(p.polarity).expect("serializes");
            let record = TaskRecord::new(TaskType::DocVqaPage, p.page_ref, p.question, p.answer).with_meta("polarity", polarity);
            let _ = writeln!(io.stdout, "{}", record.to_json_line());
        }
        Ok(())
    })
}
