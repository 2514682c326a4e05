use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::MixtureError;

/// Target text for pages that do not hold the answer.
pub const NO_ANSWER: &str = "no answer";

/// Probability of keeping each negative page.
pub const DEFAULT_NEG_KEEP_PROB: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Positive,
    Negative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PagePair {
    pub question: String,
    pub page_ref: String,
    pub answer: String,
    pub polarity: Polarity,
}

/// Splits a multipage question into one positive (question, page) pair for
/// the answer page and negatives for the other pages, each kept with
/// probability `neg_keep_prob`. Pairs come out in page order.
pub fn build_mpdocvqa_pairs<S: AsRef<str>>(
    question: &str,
    answer: &str,
    pages: &[S],
    answer_page_index: usize,
    neg_keep_prob: f64,
    seed: u64,
) -> Result<Vec<PagePair>, MixtureError> {
    if answer_page_index >= pages.len() {
        return Err(MixtureError::PageOutOfRange { index: answer_page_index, pages: pages.len() });
    }
    if !(0.0..=1.0).contains(&neg_keep_prob) {
        return Err(MixtureError::InvalidProbability(neg_keep_prob));
    }
    if answer == NO_ANSWER {
        return Err(MixtureError::NoAnswerPositive);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for (i, page) in pages.iter().enumerate() {
        let (answer, polarity) = if i == answer_page_index {
            (answer, Polarity::Positive)
        } else if rng.gen_bool(neg_keep_prob) {
            (NO_ANSWER, Polarity::Negative)
        } else {
            continue;
        };
        out.push(PagePair {
            question: question.to_owned(),
            page_ref: page.as_ref().to_owned(),
            answer: answer.to_owned(),
            polarity,
        });
    }
    Ok(out)
}

/// Highest-scoring page answer, ignoring no-answer predictions unless every
/// page predicts no answer. Ties go to the lowest page index.
pub fn score_mpdocvqa<S: AsRef<str>>(page_predictions: &[(S, f64)]) -> Result<String, MixtureError> {
    if page_predictions.is_empty() {
        return Err(MixtureError::NoPredictions);
    }
    let mut best: Option<(&str, f64)> = None;
    for (answer, score) in page_predictions {
        let answer = answer.as_ref();
        if answer.trim().eq_ignore_ascii_case(NO_ANSWER) {
            continue;
        }
        if best.is_none_or(|(_, s)| *score > s) {
            best = Some((answer, *score));
        }
    }
    Ok(best.map_or(NO_ANSWER, |(a, _)| a).to_owned())
}
