use std::collections::HashMap;

use super::MetricError;

/// Cutoff above which a normalized edit distance scores zero.
pub const ANLS_THRESHOLD: f64 = 0.5;

/// Unit-cost edit distance over Unicode scalar values.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// SQuAD answer normalization: lowercase, drop ASCII punctuation, drop the
/// articles a/an/the, collapse whitespace.
pub fn normalize_answer(s: &str) -> String {
    let lowered: String = s.to_lowercase().chars().filter(|c| !c.is_ascii_punctuation()).collect();
    let mut out = String::with_capacity(lowered.len());
    // split into runs of word / non-word characters so articles are only
    // removed at word boundaries
    let mut chars = lowered.char_indices().peekable();
    while let Some(&(start, c)) = chars.peek() {
        let word = is_word_char(c);
        let mut end = start;
        while let Some(&(i, c)) = chars.peek() {
            if is_word_char(c) != word {
                break;
            }
            end = i + c.len_utf8();
            chars.next();
        }
        let run = &lowered[start..end];
        if !(word && matches!(run, "a" | "an" | "the")) {
            out.push_str(run);
        }
    }
    out.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

fn token_f1(prediction: &str, gold: &str) -> f64 {
    let pred = normalize_answer(prediction);
    let gold = normalize_answer(gold);
    let pred: Vec<&str> = pred.split_whitespace().collect();
    let gold: Vec<&str> = gold.split_whitespace().collect();
    if pred.is_empty() || gold.is_empty() {
        return f64::from(u8::from(pred == gold));
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in &gold {
        *counts.entry(t).or_default() += 1;
    }
    let mut common = 0usize;
    for t in &pred {
        if let Some(n) = counts.get_mut(t) {
            if *n > 0 {
                *n -= 1;
                common += 1;
            }
        }
    }
    if common == 0 {
        return 0.0;
    }
    let precision = common as f64 / pred.len() as f64;
    let recall = common as f64 / gold.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Token-bag F1 after SQuAD normalization, maximized over candidates.
pub fn squad_f1<S: AsRef<str>>(prediction: &str, candidates: &[S]) -> Result<f64, MetricError> {
    candidates
        .iter()
        .map(|c| token_f1(prediction, c.as_ref()))
        .reduce(f64::max)
        .ok_or(MetricError::NoReferences)
}

/// Normalized Levenshtein similarity, maximized over the gold answers.
pub fn anls<S: AsRef<str>>(prediction: &str, golds: &[S]) -> Result<f64, MetricError> {
    let pred = prediction.trim().to_lowercase();
    golds
        .iter()
        .map(|g| {
            let gold = g.as_ref().trim().to_lowercase();
            let longest = pred.chars().count().max(gold.chars().count());
            if longest == 0 {
                return 1.0;
            }
            let nl = levenshtein(&pred, &gold) as f64 / longest as f64;
            if nl < ANLS_THRESHOLD {
                1.0 - nl
            } else {
                0.0
            }
        })
        .reduce(f64::max)
        .ok_or(MetricError::NoReferences)
}

/// Mean ANLS over `(prediction, golds)` questions.
pub fn anls_corpus<S: AsRef<str>>(items: &[(String, Vec<S>)]) -> Result<f64, MetricError> {
    if items.is_empty() {
        return Err(MetricError::EmptyCorpus);
    }
    let mut total = 0.0;
    for (p, g) in items {
        total += anls(p, g)?;
    }
    Ok(total / items.len() as f64)
}

fn parse_number(s: &str) -> Option<f64> {
    let s = s.trim();
    let s = s.strip_suffix('%').unwrap_or(s).trim();
    s.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Numeric answers within 5% of the gold value; anything else by
/// case-insensitive string equality.
pub fn relaxed_accuracy(prediction: &str, gold: &str) -> f64 {
    let hit = match (parse_number(prediction), parse_number(gold)) {
        (Some(p), Some(g)) if g == 0.0 => p == g,
        (Some(p), Some(g)) => (p - g).abs() <= 0.05 * g.abs(),
        _ => prediction.trim().to_lowercase() == gold.trim().to_lowercase(),
    };
    f64::from(u8::from(hit))
}

pub fn exact_match(prediction: &str, gold: &str, fold_case: bool) -> f64 {
    let hit = if fold_case { prediction.to_lowercase() == gold.to_lowercase() } else { prediction == gold };
    f64::from(u8::from(hit))
}
