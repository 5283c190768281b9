//! Text-overlap and classification metrics: ROUGE-1, BLEU-1,
//! accuracy/precision/recall/F1, and judge win rates.
//!
//! One tokenizer is shared by every module that touches text (corpus stats,
//! surrogate learners, summarizer, evaluation) so training and evaluation
//! never disagree on token boundaries.

use std::collections::BTreeMap;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("reference token sequence is empty")]
    EmptyReference,
    #[error("prediction/label length mismatch: {preds} vs {labels}")]
    LengthMismatch { preds: usize, labels: usize },
    #[error("prediction and label lists are empty")]
    EmptyInput,
    #[error("win tally has zero total")]
    ZeroTotal,
}

/// Ordered lowercase tokens, split on non-alphanumeric runs. Never contains
/// an empty token.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TokenSeq(Vec<String>);

impl TokenSeq {
    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Builds a sequence from pre-tokenized input, dropping empty tokens and
    /// lowercasing the rest.
    pub fn from_tokens<I: IntoIterator<Item = String>>(tokens: I) -> Self {
        TokenSeq(
            tokens
                .into_iter()
                .filter(|t| !t.is_empty())
                .map(|t| t.to_lowercase())
                .collect(),
        )
    }

    fn counts(&self) -> BTreeMap<&str, usize> {
        let mut counts = BTreeMap::new();
        for token in &self.0 {
            *counts.entry(token.as_str()).or_insert(0) += 1;
        }
        counts
    }
}

/// Lowercase and split on runs of non-alphanumeric characters.
pub fn tokenize(text: &str) -> TokenSeq {
    TokenSeq(
        text.to_lowercase()
            .split(|c: char| !c.is_alphanumeric())
            .filter(|s| !s.is_empty())
            .map(str::to_string)
            .collect(),
    )
}

/// Number of tokens in `text` under the shared tokenizer.
pub fn token_count(text: &str) -> usize {
    tokenize(text).len()
}

/// Clipped unigram overlap: each token type counts min(count_cand, count_ref)
/// times.
fn clipped_overlap(candidate: &TokenSeq, reference: &TokenSeq) -> usize {
    let ref_counts = reference.counts();
    candidate
        .counts()
        .iter()
        .map(|(token, n)| ref_counts.get(token).map_or(0, |m| (*n).min(*m)))
        .sum()
}

/// ROUGE-1 reported as F1 over clipped unigram overlap.
pub fn rouge1(candidate: &TokenSeq, reference: &TokenSeq) -> Result<f64, MetricsError> {
    if reference.is_empty() {
        return Err(MetricsError::EmptyReference);
    }
    if candidate.is_empty() {
        return Ok(0.0);
    }
    let overlap = clipped_overlap(candidate, reference) as f64;
    let precision = overlap / candidate.len() as f64;
    let recall = overlap / reference.len() as f64;
    if precision + recall == 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * precision * recall / (precision + recall))
}

/// BLEU-1: modified unigram precision times a brevity penalty of
/// exp(1 - |ref|/|cand|) when the candidate is not longer than the reference.
pub fn bleu1(candidate: &TokenSeq, reference: &TokenSeq) -> Result<f64, MetricsError> {
    if reference.is_empty() {
        return Err(MetricsError::EmptyReference);
    }
    if candidate.is_empty() {
        return Ok(0.0);
    }
    let overlap = clipped_overlap(candidate, reference) as f64;
    let precision = overlap / candidate.len() as f64;
    let brevity = if candidate.len() > reference.len() {
        1.0
    } else {
        (1.0 - reference.len() as f64 / candidate.len() as f64).exp()
    };
    Ok(precision * brevity)
}

/// Confusion-matrix summary for binary intervene/silent decisions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassificationReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Standard binary classification metrics; precision and recall are defined
/// as 0 when their denominator is 0.
pub fn classify_metrics(preds: &[bool], labels: &[bool]) -> Result<ClassificationReport, MetricsError> {
    if preds.len() != labels.len() {
        return Err(MetricsError::LengthMismatch {
            preds: preds.len(),
            labels: labels.len(),
        });
    }
    if preds.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut tn = 0usize;
    let mut fn_ = 0usize;
    for (&p, &l) in preds.iter().zip(labels) {
        match (p, l) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    let total = preds.len() as f64;
    let accuracy = (tp + tn) as f64 / total;
    let precision = if tp + fp == 0 {
        0.0
    } else {
        tp as f64 / (tp + fp) as f64
    };
    let recall = if tp + fn_ == 0 {
        0.0
    } else {
        tp as f64 / (tp + fn_) as f64
    };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(ClassificationReport {
        accuracy,
        precision,
        recall,
        f1,
    })
}

/// Win rate per method: wins divided by total wins across methods.
pub fn win_rate(wins: &BTreeMap<String, usize>) -> Result<BTreeMap<String, f64>, MetricsError> {
    let total: usize = wins.values().sum();
    if total == 0 {
        return Err(MetricsError::ZeroTotal);
    }
    Ok(wins
        .iter()
        .map(|(method, &w)| (method.clone(), w as f64 / total as f64))
        .collect())
}
