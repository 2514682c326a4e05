use serde_json::{Deserializer, Map, Value};

use super::{NavigationSample, QaPair, TaskgenError};
use crate::mixtures::parse_click;
use crate::schema::CoordOrder;

/// First JSON value embedded in `text`. A completion that starts with a bare
/// `"key": ...` member (the shape the prompts show) is read as an object.
pub fn extract_json(text: &str) -> Option<Value> {
    let trimmed = text.trim();
    if trimmed.starts_with('"') {
        if let Ok(v @ Value::Object(_)) = serde_json::from_str(&format!("{{{trimmed}}}")) {
            return Some(v);
        }
    }
    for (i, c) in text.char_indices() {
        if c != '{' && c != '[' {
            continue;
        }
        // the stream deserializer stops after one value and ignores whatever follows
        if let Some(Ok(v)) = Deserializer::from_str(&text[i..]).into_iter::<Value>().next() {
            return Some(v);
        }
    }
    None
}

fn entry_list<'a>(value: &'a Value, key: &'static str) -> Result<&'a Vec<Value>, TaskgenError> {
    match value {
        Value::Array(items) => Ok(items),
        Value::Object(map) => match map.get(key) {
            Some(Value::Array(items)) => Ok(items),
            _ => Err(TaskgenError::NoEntries(key)),
        },
        _ => Err(TaskgenError::NoEntries(key)),
    }
}

fn text_field(map: &Map<String, Value>, names: &[&str]) -> Option<String> {
    names.iter().find_map(|n| match map.get(*n)? {
        Value::String(s) if !s.trim().is_empty() => Some(s.trim().to_owned()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    })
}

fn qa_entry(index: usize, entry: &Value) -> Result<QaPair, TaskgenError> {
    let empty = Map::new();
    let map = entry.as_object().unwrap_or(&empty);
    let question = text_field(map, &["question"]).ok_or(TaskgenError::MissingField { index, field: "question" })?;
    let answer = text_field(map, &["answer"]).ok_or(TaskgenError::MissingField { index, field: "answer" })?;
    Ok(QaPair { question, answer })
}

/// Per-entry results of a QA completion; the outer error means nothing
/// usable was found.
pub fn parse_qa_entries(text: &str) -> Result<Vec<Result<QaPair, TaskgenError>>, TaskgenError> {
    let value = extract_json(text).ok_or(TaskgenError::NoJson)?;
    let items = entry_list(&value, "questions")?;
    Ok(items.iter().enumerate().map(|(i, e)| qa_entry(i, e)).collect())
}

/// All QA pairs, or the first entry error.
pub fn parse_qa_response(text: &str) -> Result<Vec<QaPair>, TaskgenError> {
    parse_qa_entries(text)?.into_iter().collect()
}

fn nav_entry(index: usize, entry: &Value, order: CoordOrder) -> Result<NavigationSample, TaskgenError> {
    let empty = Map::new();
    let map = entry.as_object().unwrap_or(&empty);
    let instruction =
        text_field(map, &["question", "instruction"]).ok_or(TaskgenError::MissingField { index, field: "question" })?;
    let answer = text_field(map, &["answer"]).ok_or(TaskgenError::MissingField { index, field: "answer" })?;
    let target = parse_click(&answer)
        .and_then(|raw| order.to_box(raw).ok())
        .ok_or(TaskgenError::BadClick { index, answer })?;
    Ok(NavigationSample { instruction, target })
}

/// Per-entry results of a navigation completion. Answers must read
/// `click INT INT INT INT` in `order` and form a valid box.
pub fn parse_nav_entries(
    text: &str,
    order: CoordOrder,
) -> Result<Vec<Result<NavigationSample, TaskgenError>>, TaskgenError> {
    let value = extract_json(text).ok_or(TaskgenError::NoJson)?;
    let items = entry_list(&value, "questions")?;
    Ok(items.iter().enumerate().map(|(i, e)| nav_entry(i, e, order)).collect())
}

/// The valid navigation samples; fails only when none are valid.
pub fn parse_nav_response(text: &str, order: CoordOrder) -> Result<Vec<NavigationSample>, TaskgenError> {
    let valid: Vec<_> = parse_nav_entries(text, order)?.into_iter().filter_map(Result::ok).collect();
    if valid.is_empty() {
        return Err(TaskgenError::NoValidEntries);
    }
    Ok(valid)
}

pub fn parse_summary_response(text: &str) -> Result<String, TaskgenError> {
    let value = extract_json(text).ok_or(TaskgenError::NoJson)?;
    value
        .as_object()
        .and_then(|m| text_field(m, &["summary"]))
        .ok_or(TaskgenError::MissingField { index: 0, field: "summary" })
}

/// First bracketed list of quoted (either quote style) or bare items,
/// deduplicated in order.
pub fn parse_rephrase_response(text: &str) -> Result<Vec<String>, TaskgenError> {
    let mut found_list = false;
    for (i, c) in text.char_indices() {
        if c != '[' {
            continue;
        }
        if let Some(items) = read_list(&text[i + 1..]) {
            found_list = true;
            let mut out: Vec<String> = Vec::new();
            for item in items {
                if !item.is_empty() && !out.contains(&item) {
                    out.push(item);
                }
            }
            if !out.is_empty() {
                return Ok(out);
            }
        }
    }
    Err(if found_list { TaskgenError::NoValidEntries } else { TaskgenError::NoList })
}

fn read_list(s: &str) -> Option<Vec<String>> {
    let mut items = Vec::new();
    let mut chars = s.chars().peekable();
    loop {
        while chars.next_if(|c| c.is_whitespace()).is_some() {}
        match *chars.peek()? {
            ']' if items.is_empty() => return Some(items),
            q @ ('\'' | '"') => {
                chars.next();
                let mut item = String::new();
                loop {
                    match chars.next()? {
                        '\\' => item.push(chars.next()?),
                        c if c == q => break,
                        c => item.push(c),
                    }
                }
                items.push(item.trim().to_owned());
            }
            _ => {
                let mut item = String::new();
                while let Some(c) = chars.next_if(|&c| c != ',' && c != ']') {
                    if matches!(c, '[' | '\'' | '"') {
                        return None;
                    }
                    item.push(c);
                }
                items.push(item.trim().to_owned());
            }
        }
        while chars.next_if(|c| c.is_whitespace()).is_some() {}
        match chars.next()? {
            ',' => {}
            ']' => return Some(items),
            _ => return None,
        }
    }
}
