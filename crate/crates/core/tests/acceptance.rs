//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any fails. Oracles here are written independently of the
//! library code they check.

use std::collections::BTreeMap;
use std::panic::{self, AssertUnwindSafe};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use screenkit::metrics::{aggregate_score, anls, cider, levenshtein, match_detections, relaxed_accuracy, squad_f1};
use screenkit::mixtures::{build_mpdocvqa_pairs, compute_weights, MixtureSpec, MixtureTask, Polarity};
use screenkit::patching::compute_grid;
use screenkit::schema::{
    dequantize_box, parse_schema, quantize_box, serialize_schema, ElementClass, PixelBox, QuantBox, ScreenSchema,
    UiElement,
};
use screenkit::taskgen::TemplateKind;

type Outcome = Result<String, String>;
type Check = fn() -> Outcome;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn within(elapsed: Duration, limit: Duration) -> Outcome {
    ensure!(elapsed < limit, "took {elapsed:?}, limit {limit:?}");
    Ok(format!("{} ms", elapsed.as_millis()))
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

// 1

fn patch_budget() -> Outcome {
    let start = Instant::now();
    let g = compute_grid(756, 756, 14, 2916).map_err(|e| e.to_string())?;
    ensure!((g.rows, g.cols) == (54, 54), "756/14/2916 gave {}x{}", g.rows, g.cols);
    let g = compute_grid(812, 812, 14, 3364).map_err(|e| e.to_string())?;
    ensure!((g.rows, g.cols) == (58, 58), "812/14/3364 gave {}x{}", g.rows, g.cols);
    let g = compute_grid(720, 720, 16, 2024).map_err(|e| e.to_string())?;
    ensure!(g.rows * g.cols <= 2024, "720/16/2024 uses {} patches", g.rows * g.cols);
    ensure!([44, 45].contains(&g.rows.max(g.cols)), "720/16/2024 gave {}x{}", g.rows, g.cols);
    within(start.elapsed(), Duration::from_secs(1))
}

// 2

/// Best (rows, cols) by enumerating every row count `r`: with `c = B / r`
/// columns the largest uniform scale is `min(r*p/h, c*p/w)`.
fn grid_oracle(w: u64, h: u64, p: u64, budget: u64) -> (u64, u64) {
    let mut best = (0u64, 1u64);
    for r in 1..=budget {
        let c = budget / r;
        let (a, b) = ((r * p, h), (c * p, w));
        let s = if a.0 * b.1 <= b.0 * a.1 { a } else { b };
        if s.0 * best.1 > best.0 * s.1 {
            best = s;
        }
    }
    let (num, den) = best;
    ((num * h).div_ceil(den * p), (num * w).div_ceil(den * p))
}

fn grid_oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut mismatches = Vec::new();
    for _ in 0..500 {
        let w = rng.gen_range(1..=4000u32);
        let h = if rng.gen_bool(0.2) { w } else { rng.gen_range(1..=4000u32) };
        let p = rng.gen_range(1..=32u32);
        let budget = rng.gen_range(1..=200u32);
        let g = compute_grid(w, h, p, budget).map_err(|e| e.to_string())?;
        let want = grid_oracle(w.into(), h.into(), p.into(), budget.into());
        if (u64::from(g.rows), u64::from(g.cols)) != want {
            mismatches.push(format!("({w},{h},{p},{budget}): got {}x{}, want {}x{}", g.rows, g.cols, want.0, want.1));
        }
    }
    ensure!(mismatches.is_empty(), "{} mismatches, first {}", mismatches.len(), mismatches[0]);
    within(start.elapsed(), Duration::from_secs(10)).map(|t| format!("500 instances, 0 mismatches, {t}"))
}

// 3

fn box_iou(a: &QuantBox, b: &QuantBox) -> f64 {
    let area = |q: &QuantBox| f64::from(q.ymax() - q.ymin()) * f64::from(q.xmax() - q.xmin());
    let ih = f64::from(a.ymax().min(b.ymax()).saturating_sub(a.ymin().max(b.ymin())));
    let iw = f64::from(a.xmax().min(b.xmax()).saturating_sub(a.xmin().max(b.xmin())));
    let inter = ih * iw;
    if area(a) == 0.0 || area(b) == 0.0 {
        return 0.0;
    }
    inter / (area(a) + area(b) - inter)
}

/// Largest matching, ties broken by total IoU, by trying every assignment.
fn brute_force(iou: &[Vec<f64>], threshold: f64, i: usize, used: &mut Vec<bool>) -> (usize, f64) {
    if i == iou.len() {
        return (0, 0.0);
    }
    let mut best = brute_force(iou, threshold, i + 1, used);
    for j in 0..used.len() {
        if used[j] || iou[i][j] < threshold || iou[i][j] <= 0.0 {
            continue;
        }
        used[j] = true;
        let (n, s) = brute_force(iou, threshold, i + 1, used);
        used[j] = false;
        let cand = (n + 1, s + iou[i][j]);
        if cand.0 > best.0 || (cand.0 == best.0 && cand.1 > best.1) {
            best = cand;
        }
    }
    best
}

fn random_box(rng: &mut ChaCha8Rng) -> QuantBox {
    let y0 = rng.gen_range(0..60u16);
    let x0 = rng.gen_range(0..60u16);
    QuantBox::new(y0, x0, y0 + rng.gen_range(0..40), x0 + rng.gen_range(0..40)).unwrap()
}

fn detection_oracle() -> Outcome {
    let threshold = 0.1;
    let classes = [ElementClass::text(), ElementClass::button(), ElementClass::image()];
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for trial in 0..200 {
        let (mut pred, mut gold) = (Vec::new(), Vec::new());
        let mut tp = 0;
        for class in &classes {
            let p: Vec<QuantBox> = (0..rng.gen_range(0..=6)).map(|_| random_box(&mut rng)).collect();
            let g: Vec<QuantBox> = (0..rng.gen_range(0..=6)).map(|_| random_box(&mut rng)).collect();
            let iou: Vec<Vec<f64>> = p.iter().map(|a| g.iter().map(|b| box_iou(a, b)).collect()).collect();
            tp += brute_force(&iou, threshold, 0, &mut vec![false; g.len()]).0;
            pred.extend(p.into_iter().map(|b| (class.clone(), b)));
            gold.extend(g.into_iter().map(|b| (class.clone(), b)));
        }
        let (np, ng) = (pred.len(), gold.len());
        let precision = if np > 0 { tp as f64 / np as f64 } else if ng == 0 { 1.0 } else { 0.0 };
        let recall = if ng > 0 { tp as f64 / ng as f64 } else if np == 0 { 1.0 } else { 0.0 };
        let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
        let got = match_detections(&pred, &gold, threshold);
        ensure!(
            close(got.precision, precision, 1e-12) && close(got.recall, recall, 1e-12) && close(got.f1, f1, 1e-12),
            "trial {trial}: got P/R/F1 {}/{}/{}, want {precision}/{recall}/{f1}",
            got.precision,
            got.recall,
            got.f1
        );
    }
    Ok("200 instances agree".into())
}

// 4

fn metric_hand_values() -> Outcome {
    let checks = [
        ("anls", anls("hello", &["hallo"]).map_err(|e| e.to_string())?, 0.8),
        ("squad_f1", squad_f1("1", &["1 and 1"]).map_err(|e| e.to_string())?, 0.5),
        ("relaxed 104/100", relaxed_accuracy("104", "100"), 1.0),
        ("relaxed 106/100", relaxed_accuracy("106", "100"), 0.0),
        ("levenshtein", levenshtein("kitten", "sitting") as f64, 3.0),
    ];
    for (name, got, want) in checks {
        ensure!(close(got, want, 1e-9), "{name}: got {got}, want {want}");
    }
    let base: BTreeMap<String, f64> = [("a".to_owned(), 1.0), ("b".to_owned(), 1.0)].into();
    let var: BTreeMap<String, f64> = [("a".to_owned(), 2.0), ("b".to_owned(), 0.5)].into();
    let agg = aggregate_score(&base, &var).map_err(|e| e.to_string())?;
    ensure!(close(agg, 1.0, 1e-9), "aggregate: got {agg}");
    Ok("6 values".into())
}

// 5

const CLASSES: [&str; 7] = ["TEXT", "BUTTON", "IMAGE", "PICTOGRAM", "CHECKBOX", "LIST_ITEM", "NAV_BAR2"];
const PAYLOAD_CHARS: &[char] =
    &['a', 'Z', '7', ' ', '"', '\\', '\n', '\t', '(', ')', '<', '>', 'é', '漢', '🙂', ',', '.', '\''];

fn random_element(rng: &mut ChaCha8Rng, depth: u32) -> UiElement {
    let class = ElementClass::new(CLASSES[rng.gen_range(0..CLASSES.len())]).unwrap();
    let y0 = rng.gen_range(0..=999u16);
    let x0 = rng.gen_range(0..=999u16);
    let bbox = QuantBox::new(y0, x0, rng.gen_range(y0..=999), rng.gen_range(x0..=999)).unwrap();
    let mut el = UiElement::new(class, bbox);
    match rng.gen_range(0..4) {
        0 => {}
        1 => el.mask(),
        _ => {
            let len = rng.gen_range(0..12);
            let mut s: String = (0..len).map(|_| PAYLOAD_CHARS[rng.gen_range(0..PAYLOAD_CHARS.len())]).collect();
            s.push('x');
            el = el.with_payload(s).unwrap();
        }
    }
    if depth < 3 {
        let n = rng.gen_range(0..=3 - depth);
        el = el.with_children((0..n).map(|_| random_element(rng, depth + 1)).collect());
    }
    el
}

fn random_schema(rng: &mut ChaCha8Rng) -> ScreenSchema {
    let n = rng.gen_range(0..5);
    ScreenSchema::new((0..n).map(|_| random_element(rng, 0)).collect())
}

/// Appends a fragment that makes any schema text invalid.
const CORRUPTIONS: [&str; 10] = [
    " (",
    " )",
    " TEXT \"unterminated 0 0 1 1",
    " TEXT 0 0 1000 5",
    " TEXT 5 0 4 5",
    " TEXT 0 5 9 4",
    " TEXT 05 0 9 9",
    " TEXT 0 0 9",
    " TEXT \"a\\q\" 0 0 1 1",
    " text 0 0 1 1",
];

fn schema_roundtrip() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for i in 0..1000 {
        let schema = random_schema(&mut rng);
        let text = serialize_schema(&schema);
        let back = parse_schema(&text).map_err(|e| format!("schema {i} failed to reparse: {e}\n{text}"))?;
        ensure!(back == schema, "schema {i} changed on roundtrip:\n{text}");
    }
    let mut structured = 0;
    for i in 0..1000 {
        let text = serialize_schema(&random_schema(&mut rng));
        let bad = if i % 2 == 0 {
            format!("{text}{}", CORRUPTIONS[rng.gen_range(0..CORRUPTIONS.len())])
        } else {
            // or put it in front
            format!("{} {text}", CORRUPTIONS[rng.gen_range(0..CORRUPTIONS.len())].trim())
        };
        let result = panic::catch_unwind(|| parse_schema(&bad)).map_err(|_| format!("parser panicked on {bad:?}"))?;
        ensure!(result.is_err(), "invalid input accepted: {bad:?}");
        structured += 1;
    }
    // random byte-level mutations must never crash, valid or not
    for _ in 0..1000 {
        let mut chars: Vec<char> = serialize_schema(&random_schema(&mut rng)).chars().collect();
        for _ in 0..rng.gen_range(1..4) {
            let pos = rng.gen_range(0..=chars.len());
            let c = ['(', ')', '"', '\\', '9', ' ', 'Q', '-', '\u{0}'][rng.gen_range(0..9)];
            match rng.gen_range(0..3) {
                0 if pos < chars.len() => {
                    chars.remove(pos);
                }
                1 if pos < chars.len() => chars[pos] = c,
                _ => chars.insert(pos, c),
            }
        }
        let s: String = chars.into_iter().collect();
        let _ = panic::catch_unwind(|| parse_schema(&s)).map_err(|_| format!("parser panicked on {s:?}"))?;
    }
    within(start.elapsed(), Duration::from_secs(30))
        .map(|t| format!("1000 roundtrips, {structured} structured errors, 1000 mutations, {t}"))
}

// 6

fn quantization() -> Outcome {
    let extents = [1.0, 720.0, 756.0, 812.0, 10000.0];
    for e in extents {
        for q in 0..=999u16 {
            let qb = QuantBox::new(q, q, q, q).unwrap();
            let px = dequantize_box(&qb, e, e).map_err(|e| e.to_string())?;
            let back = quantize_box(&px, e, e).map_err(|e| e.to_string())?;
            ensure!(back == qb, "extent {e}: q={q} came back as {:?}", back.to_array());
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..100_000 {
        let e = extents[rng.gen_range(0..extents.len())];
        let (a, b) = (rng.gen_range(0.0..=e), rng.gen_range(0.0..=e));
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let q = |c: f64| quantize_box(&PixelBox::new(c, c, c, c).unwrap(), e, e).map(|b| b.ymin());
        let (ql, qh) = (q(lo).map_err(|e| e.to_string())?, q(hi).map_err(|e| e.to_string())?);
        ensure!(ql <= qh, "extent {e}: q({lo}) = {ql} > q({hi}) = {qh}");
    }
    Ok("5 extents x 1000 buckets, 1e5 monotone pairs".into())
}

// 7

fn mpdocvqa() -> Outcome {
    let pairs = build_mpdocvqa_pairs("q", "a", &["p0", "p1", "p2"], 2, 1.0, 0).map_err(|e| e.to_string())?;
    let pos = pairs.iter().filter(|p| p.polarity == Polarity::Positive).count();
    ensure!(pos == 1 && pairs.len() == 3, "got {pos} positives in {} pairs", pairs.len());

    let (pages, keep, trials) = (["a", "b", "c", "d", "e"], 0.25, 10_000u64);
    let mut negatives = 0usize;
    for seed in 0..trials {
        let pairs = build_mpdocvqa_pairs("q", "x", &pages, 1, keep, seed).map_err(|e| e.to_string())?;
        let pos = pairs.iter().filter(|p| p.polarity == Polarity::Positive).count();
        ensure!(pos == 1, "seed {seed}: {pos} positives");
        negatives += pairs.len() - 1;
    }
    let n = trials as f64 * (pages.len() - 1) as f64;
    let (mean, sigma) = (n * keep, (n * keep * (1.0 - keep)).sqrt());
    let dev = (negatives as f64 - mean).abs();
    ensure!(dev <= 3.0 * sigma, "{negatives} negatives, expected {mean} +- {:.1}", 3.0 * sigma);
    Ok(format!("{negatives} negatives vs expected {mean} (3 sigma = {:.1})", 3.0 * sigma))
}

// 8

fn spec(sizes: &[u64], cap: f64) -> MixtureSpec {
    MixtureSpec {
        tasks: sizes
            .iter()
            .enumerate()
            .map(|(i, &size)| MixtureTask { name: format!("task{i}"), size, source: String::new() })
            .collect(),
        cap,
    }
}

/// Water-filling: clamp everything above the cap, share the rest in
/// proportion to size, repeat.
fn water_fill(sizes: &[u64], cap: f64) -> Vec<f64> {
    let mut clamped = vec![false; sizes.len()];
    loop {
        let free = 1.0 - cap * clamped.iter().filter(|c| **c).count() as f64;
        let total: f64 = sizes.iter().zip(&clamped).filter(|(_, c)| !**c).map(|(s, _)| *s as f64).sum();
        let w: Vec<f64> =
            sizes.iter().zip(&clamped).map(|(s, c)| if *c { cap } else { free * *s as f64 / total }).collect();
        let over: Vec<usize> = (0..w.len()).filter(|&i| !clamped[i] && w[i] > cap).collect();
        if over.is_empty() {
            return w;
        }
        for i in over {
            clamped[i] = true;
        }
    }
}

fn mixture_weights() -> Outcome {
    let hand: [(&[u64], f64, &[f64]); 3] =
        [(&[100, 300], 1.0, &[0.25, 0.75]), (&[100, 900], 0.5, &[0.5, 0.5]), (&[1, 1, 8], 0.4, &[0.3, 0.3, 0.4])];
    for (sizes, cap, want) in hand {
        let got: Vec<f64> = compute_weights(&spec(sizes, cap)).map_err(|e| e.to_string())?.into_iter().map(|(_, w)| w).collect();
        ensure!(got.iter().zip(want).all(|(g, w)| close(*g, *w, 1e-12)), "{sizes:?} cap {cap}: got {got:?}");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for i in 0..1000 {
        let n = rng.gen_range(1..=12usize);
        let sizes: Vec<u64> = (0..n).map(|_| rng.gen_range(1..=1_000_000)).collect();
        let cap = rng.gen_range((1.0 / n as f64 + 1e-9).min(1.0)..=1.0);
        let got: Vec<f64> = compute_weights(&spec(&sizes, cap)).map_err(|e| format!("spec {i}: {e}"))?.into_iter().map(|(_, w)| w).collect();
        let sum: f64 = got.iter().sum();
        ensure!(close(sum, 1.0, 1e-12), "spec {i}: weights sum to {sum}");
        ensure!(got.iter().all(|w| *w <= cap + 1e-12), "spec {i}: weight above cap {cap}: {got:?}");
        let want = water_fill(&sizes, cap);
        ensure!(got.iter().zip(&want).all(|(g, w)| close(*g, *w, 1e-9)), "spec {i}: got {got:?}, oracle {want:?}");
    }
    Ok("3 hand cases, 1000 random specs".into())
}

// 9

fn qa_reply(i: usize, style: usize, with_bad_entry: bool) -> String {
    let mut entries: Vec<String> = (0..5)
        .map(|k| format!(r#"{{"question": "What does row {k} of screen {i} say?", "answer": "Item {i}"}}"#))
        .collect();
    if with_bad_entry {
        entries[2] = r#"{"question": "What is missing?"}"#.to_owned();
    }
    let list = entries.join(",\n");
    match style {
        0 => format!("\"questions\": [\n{list}\n]"),
        1 => format!("{{\"questions\": [\n{list}\n]}}"),
        _ => format!("Here are the questions you asked for.\n{{\"questions\": [{list}]}}\nLet me know if you need more."),
    }
}

fn run_generate(dir: &std::path::Path, args: &[&str]) -> Result<std::process::Output, String> {
    Command::new(env!("CARGO_BIN_EXE_screenkit"))
        .args(args)
        .current_dir(dir)
        .env_remove("SCREENKIT_BACKEND_URL")
        .output()
        .map_err(|e| e.to_string())
}

fn end_to_end_generation() -> Outcome {
    let start = Instant::now();
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let dir = tmp.path();
    let schemas = dir.join("schemas");
    std::fs::create_dir(&schemas).map_err(|e| e.to_string())?;
    for i in 0..10 {
        let text = format!(r#"TEXT "Item {i}" 0 0 100 999 ( BUTTON "Buy" 10 10 50 90 ) IMAGE "a red bicycle" 200 0 600 999"#);
        std::fs::write(schemas.join(format!("screen_{i:02}.txt")), text).map_err(|e| e.to_string())?;
    }

    let out = run_generate(dir, &["generate", "schemas", "--template", "qa", "--dump-requests", "requests.jsonl"])?;
    ensure!(out.status.success(), "dump failed: {}", String::from_utf8_lossy(&out.stderr));
    let requests = std::fs::read_to_string(dir.join("requests.jsonl")).map_err(|e| e.to_string())?;
    let mut stub = String::new();
    for (i, line) in requests.lines().enumerate() {
        let req: serde_json::Value = serde_json::from_str(line).map_err(|e| e.to_string())?;
        let text = match i {
            3 => "I'm sorry, I can only describe screens in prose.".to_owned(),
            7 => r#"{"questions": [{"question": "What is shown?", "answer": "Item"#.to_owned(),
            _ => qa_reply(i, i % 3, i == 1 || i == 8),
        };
        stub.push_str(&serde_json::json!({ "hash": req["hash"], "text": text }).to_string());
        stub.push('\n');
    }
    std::fs::write(dir.join("stub.jsonl"), stub).map_err(|e| e.to_string())?;

    for run in ["a", "b"] {
        let out = run_generate(
            dir,
            &[
                "generate", "schemas", "--template", "qa", "--stub", "stub.jsonl", "--seed", "11", "--max-in-flight", "4",
                "--output", &format!("records_{run}.jsonl"), "--stats", &format!("stats_{run}.json"),
            ],
        )?;
        ensure!(out.status.code() == Some(0), "run {run} exited {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr));
    }
    let a = std::fs::read(dir.join("records_a.jsonl")).map_err(|e| e.to_string())?;
    let b = std::fs::read(dir.join("records_b.jsonl")).map_err(|e| e.to_string())?;
    ensure!(a == b, "outputs differ between runs");
    let records = a.split(|&c| c == b'\n').filter(|l| !l.is_empty()).count();
    let stats: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.join("stats_a.json")).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    // 8 parseable replies x 5 entries, 2 of them missing an answer; 2 replies unusable
    ensure!(records == 38, "expected 38 records, got {records}");
    ensure!(stats["emitted"] == 38, "stats: {stats}");
    ensure!(stats["parsed_entries"] == 40 && stats["rejected_entries"] == 2, "stats: {stats}");
    ensure!(stats["failed_responses"] == 2 && stats["items"] == 10, "stats: {stats}");
    within(start.elapsed(), Duration::from_secs(5)).map(|t| format!("38 records, 2 rejected entries, 2 failed replies, {t}"))
}

// 10

const QA: &str = concat!(
    "You only speak JSON. Do not write text that isn't JSON. \n",
    "You are given the following mobile screenshot, described in words. Can you generate 5 questions regarding the content of the screenshot as well as the corresponding short answers to them? The answer should be as short as possible, containing only the necessary information. Your answer should be structured as follows:\n",
    "questions: [\n",
    "{{question: the question,\n",
    " answer: the answer\n",
    "}}, ...]\n",
    "{THE SCREEN SCHEMA}\n",
);

const NAVIGATION: &str = concat!(
    "You only speak JSON. Do not write text that isn't JSON. You are given a mobile screenshot, described in words. Each UI element has a class, which is expressed in capital letter. The class is sometimes followed by a description, and then 4 numbers between 0 and 999 represent the quantized coordinates of each element.\n",
    "Generate {num_samples} single-step navigation instructions and their corresponding answers based on the screenshot. Each answer should always start with `click`, followed by the coordinates of the element to click on, e.g. `click 0 137 31 113`.\n",
    "Be creative with the questions, do not always use the same wording, refer to the UI elements only indirectly, and use imperative tense. Your answer should be structured as in the example below:\n",
    "\n",
    "\"questions\": [\n",
    "{{\"question\": \"the question\",\n",
    "  \"answer\": \"click 0 137 31 113\"\n",
    "}},\n",
    "...\n",
    "]\n",
    "{THE SCREEN SCHEMA}\n",
);

const SUMMARIZATION: &str = concat!(
    "You only speak JSON. Do not write text that isn't JSON.\n",
    "You are given the following mobile screenshot, described in words.\n",
    "Generate a summary of the screenshot in 2-3 sentences. Do not focus on specifically naming the various UI elements, but instead, focus on the content. Your answer should be structured as follows:\n",
    "\"summary\": the screen summary\n",
    "{THE SCREEN SCHEMA}\n",
);

const SHORT_SINGLE: &str = concat!(
    "List various ways to rephrase the answer. The answer should be as short as possible, without extra words from the question. Use all provided elements in each answer. Provide the output in square brackets.\n",
    "\n",
    "Here is an example:\n",
    "Question: 'What's the percentage of humidity?'\n",
    "Answer elements: ['65%\n",
    "Full answer: 'The humidity is 65%\n",
    "Rephrases: ['65%\n",
    "\n",
    "Here is another example:\n",
    "Question: 'What is the gender?'\n",
    "Answer elements: ['Male']\n",
    "Full answer: 'The gender is male.'\n",
    "Rephrases: ['male']\n",
    "\n",
    "Here is another example:\n",
    "Question: 'What is the status of \"24 hr clock\"?'\n",
    "Answer elements: ['on']\n",
    "Full answer: 'The status is \"on\".'\n",
    "Rephrases: ['on', 'enabled']\n",
    "\n",
    "[...]\n",
    "\n",
    "Now is your turn.\n",
    "Question: {THE QUESTION}\n",
    "Answer elements: {THE UI ELEMENT DESCRIPTION}\n",
    "Full answer: {THE FULL-SENTENCE ANSWER}\n",
    "Rephrases:\n",
);

const SHORT_MULTIPLE: &str = concat!(
    "List various ways to rephrase the answer. The answer should be as short as possible, without extra words from the question. Use all provided elements in each answer. Provide the output in square brackets.\n",
    "\n",
    "Here is an example:\n",
    "Question: 'What's the temperature?'\n",
    "Answer elements: ['59', '°F']\n",
    "Full answer: 'The temperature is 59 degrees Fahrenheit.'\n",
    "Rephrases: ['59°F', '59 Fahrenheits', '59 degrees Fahrenheit']\n",
    "\n",
    "Here is another example:\n",
    "Question: 'What is the name?'\n",
    "Answer elements: ['Jon', 'Brown']\n",
    "Full answer: 'The name is Jon Brown.'\n",
    "Rephrases: ['Jon Brown']\n",
    "\n",
    "Here is another example:\n",
    "Question: 'What is the rest interval duration?'\n",
    "Answer elements: ['00', ':', '34']\n",
    "Full answer: 'The rest interval lasts 00:34.'\n",
    "Rephrases: ['00:34', '34 seconds', '0 minutes and 34 seconds', '34 minutes', '0 hours and 34 minutes']\n",
    "\n",
    "[...]\n",
    "\n",
    "Now is your turn.\n",
    "Question: {THE QUESTION}\n",
    "Answer elements: {THE FIRST UI ELEMENT DESCRIPTION, ...}\n",
    "Full answer: {THE FULL-SENTENCE ANSWER}\n",
    "Rephrases:\n",
);

/// `{{`/`}}` escapes stand for single braces in the rendered prompt.
fn unescape(body: &str) -> String {
    body.replace("{{", "{").replace("}}", "}")
}

fn template_fidelity() -> Outcome {
    let expected = [
        (TemplateKind::ScreenQa, QA),
        (TemplateKind::ScreenNavigation, NAVIGATION),
        (TemplateKind::ScreenSummarization, SUMMARIZATION),
        (TemplateKind::ShortAnswersSingle, SHORT_SINGLE),
        (TemplateKind::ShortAnswersMultiple, SHORT_MULTIPLE),
    ];
    for (kind, want) in expected {
        let got = kind.builtin();
        ensure!(got.body() == want, "{kind}: body differs from the reference text");
    }
    for (kind, phrase) in [
        (TemplateKind::ScreenQa, "You only speak JSON."),
        (TemplateKind::ScreenNavigation, "You only speak JSON."),
        (TemplateKind::ScreenSummarization, "You only speak JSON."),
        (TemplateKind::ShortAnswersSingle, "List various ways to rephrase the answer."),
        (TemplateKind::ShortAnswersMultiple, "List various ways to rephrase the answer."),
    ] {
        ensure!(unescape(kind.builtin().body()).starts_with(phrase), "{kind} does not open with {phrase:?}");
    }
    Ok("5 templates byte-equal".into())
}

// 11

fn cider_sanity() -> Outcome {
    let refs = vec![
        vec!["a man riding a red bicycle down the street".to_owned()],
        vec!["two dogs playing with a ball in the park".to_owned()],
        vec!["sun rain wind snow over the quiet harbor".to_owned()],
    ];
    let preds: Vec<String> = refs.iter().map(|r| r[0].clone()).collect();
    let (mean, per) = cider(&preds, &refs).map_err(|e| e.to_string())?;
    ensure!(per.iter().all(|s| close(*s, 10.0, 1e-6)) && close(mean, 10.0, 1e-6), "identity scores {per:?}");

    let preds = vec!["purple elephants".to_owned(), "quantum yodel".to_owned(), "zebra".to_owned()];
    let (_, per) = cider(&preds, &refs).map_err(|e| e.to_string())?;
    ensure!(per.iter().all(|s| *s == 0.0), "zero-overlap scores {per:?}");

    // Two documents, every reference n-gram has df = 1, so all weights are ln 2.
    // Item 1, "cat fish" vs "cat dog": unigram cosine (ln2)^2 / (2 (ln2)^2) = 0.5,
    // no shared bigram, no 3/4-grams; equal lengths so no penalty.
    // Score = 10 * 0.5 / 4 = 1.25. Item 2 is an exact 4-word match: 10.
    let refs = vec![vec!["cat dog".to_owned()], vec!["sun rain wind snow".to_owned()]];
    let preds = vec!["cat fish".to_owned(), "sun rain wind snow".to_owned()];
    let (mean, per) = cider(&preds, &refs).map_err(|e| e.to_string())?;
    ensure!(close(per[0], 1.25, 1e-6) && close(per[1], 10.0, 1e-6), "hand case scores {per:?}");
    ensure!(close(mean, 5.625, 1e-6), "hand case mean {mean}");
    Ok("identity 10.0, disjoint 0, hand case 1.25 / 10.0".into())
}

fn main() {
    let criteria: [(&str, Check); 11] = [
        ("patch-budget reproduction", patch_budget),
        ("grid oracle equivalence", grid_oracle_equivalence),
        ("detection matching oracle", detection_oracle),
        ("metric hand values", metric_hand_values),
        ("schema roundtrip and fuzzing", schema_roundtrip),
        ("quantization roundtrip and monotonicity", quantization),
        ("MPDocVQA decomposition", mpdocvqa),
        ("mixture weighting", mixture_weights),
        ("end-to-end generation", end_to_end_generation),
        ("template fidelity", template_fidelity),
        ("CIDEr sanity", cider_sanity),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        match outcome {
            Ok(detail) => println!("criterion {:>2}: PASS  {name} ({detail})", i + 1),
            Err(e) => {
                failed += 1;
                println!("criterion {:>2}: FAIL  {name}: {e}", i + 1);
            }
        }
    }
    println!("{} of {} acceptance criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
