//! CIDEr-D: TF-IDF weighted n-gram cosine with clipping and a Gaussian
//! length penalty, scaled to `[0, 10]`.

use std::collections::HashMap;

use rust_stemmers::{Algorithm, Stemmer};

use super::MetricError;

/// Highest n-gram order.
pub const CIDER_MAX_N: usize = 4;
/// Standard deviation of the length penalty, in tokens.
pub const CIDER_SIGMA: f64 = 6.0;

type NgramCounts = HashMap<String, usize>;

fn tokenize(stemmer: &Stemmer, text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| stemmer.stem(t).into_owned())
        .collect()
}

/// Counts of all 1..=4-grams, keyed by the space-joined stemmed tokens.
fn ngram_counts(tokens: &[String]) -> [NgramCounts; CIDER_MAX_N] {
    let mut out: [NgramCounts; CIDER_MAX_N] = Default::default();
    for (n, counts) in out.iter_mut().enumerate() {
        for w in tokens.windows(n + 1) {
            *counts.entry(w.join(" ")).or_default() += 1;
        }
    }
    out
}

struct TfIdf {
    weights: [HashMap<String, f64>; CIDER_MAX_N],
    norms: [f64; CIDER_MAX_N],
    length: usize,
}

pub struct Cider {
    stemmer: Stemmer,
    doc_freq: HashMap<String, f64>,
    log_num_docs: f64,
}

impl Cider {
    /// Document frequencies taken from the reference sets themselves: an
    /// n-gram's frequency is the number of items whose references contain it.
    pub fn from_references<S: AsRef<str>>(references: &[Vec<S>]) -> Result<Self, MetricError> {
        match references.len() {
            0 => return Err(MetricError::EmptyCorpus),
            1 => return Err(MetricError::DegenerateCorpus),
            _ => {}
        }
        let stemmer = Stemmer::create(Algorithm::English);
        let mut doc_freq: HashMap<String, f64> = HashMap::new();
        for refs in references {
            let mut seen: std::collections::HashSet<String> = std::collections::HashSet::new();
            for r in refs {
                for counts in ngram_counts(&tokenize(&stemmer, r.as_ref())) {
                    seen.extend(counts.into_keys());
                }
            }
            for g in seen {
                *doc_freq.entry(g).or_default() += 1.0;
            }
        }
        Ok(Self { stemmer, doc_freq, log_num_docs: (references.len() as f64).ln() })
    }

    /// External document-frequency table over `num_docs` documents. Keys are
    /// stemmed, lowercased n-grams joined by single spaces.
    pub fn with_document_frequency(doc_freq: HashMap<String, f64>, num_docs: usize) -> Result<Self, MetricError> {
        if num_docs == 0 {
            return Err(MetricError::EmptyCorpus);
        }
        Ok(Self {
            stemmer: Stemmer::create(Algorithm::English),
            doc_freq,
            log_num_docs: (num_docs as f64).ln(),
        })
    }

    fn vectorize(&self, text: &str) -> TfIdf {
        let tokens = tokenize(&self.stemmer, text);
        let mut weights: [HashMap<String, f64>; CIDER_MAX_N] = Default::default();
        let mut norms = [0.0; CIDER_MAX_N];
        for (n, counts) in ngram_counts(&tokens).into_iter().enumerate() {
            for (g, tf) in counts {
                let df = self.doc_freq.get(&g).copied().unwrap_or(0.0).max(1.0);
                let w = tf as f64 * (self.log_num_docs - df.ln()).max(0.0);
                norms[n] += w * w;
                weights[n].insert(g, w);
            }
            norms[n] = norms[n].sqrt();
        }
        TfIdf { weights, norms, length: tokens.len() }
    }

    fn similarity(hyp: &TfIdf, reference: &TfIdf) -> [f64; CIDER_MAX_N] {
        let delta = hyp.length as f64 - reference.length as f64;
        let penalty = (-(delta * delta) / (2.0 * CIDER_SIGMA * CIDER_SIGMA)).exp();
        let mut out = [0.0; CIDER_MAX_N];
        for n in 0..CIDER_MAX_N {
            let mut val = 0.0;
            for (g, h) in &hyp.weights[n] {
                if let Some(r) = reference.weights[n].get(g) {
                    // clipped: hypothesis weight never exceeds the reference's
                    val += h.min(*r) * r;
                }
            }
            if hyp.norms[n] != 0.0 && reference.norms[n] != 0.0 {
                val /= hyp.norms[n] * reference.norms[n];
            }
            out[n] = val * penalty;
        }
        out
    }

    /// Score of one prediction against its references, in `[0, 10]`.
    pub fn score<S: AsRef<str>>(&self, prediction: &str, references: &[S]) -> Result<f64, MetricError> {
        if references.is_empty() {
            return Err(MetricError::NoReferences);
        }
        let hyp = self.vectorize(prediction);
        let mut total = 0.0;
        for r in references {
            let sims = Self::similarity(&hyp, &self.vectorize(r.as_ref()));
            total += sims.iter().sum::<f64>() / CIDER_MAX_N as f64;
        }
        Ok(total / references.len() as f64 * 10.0)
    }
}

/// Corpus CIDEr-D: the mean and the per-item scores. Document frequencies
/// come from `references`, which therefore needs at least two items.
pub fn cider<S: AsRef<str>>(predictions: &[S], references: &[Vec<S>]) -> Result<(f64, Vec<f64>), MetricError> {
    if predictions.len() != references.len() {
        return Err(MetricError::LengthMismatch { predictions: predictions.len(), references: references.len() });
    }
    let scorer = Cider::from_references(references)?;
    let per_item = predictions
        .iter()
        .zip(references)
        .map(|(p, r)| scorer.score(p.as_ref(), r))
        .collect::<Result<Vec<_>, _>>()?;
    let mean = per_item.iter().sum::<f64>() / per_item.len() as f64;
    Ok((mean, per_item))
}
