//! OCR scoring: text normalization, character error rate, character-level
//! BLEU and collapse of degenerate trailing repetition.
//!
//! Every metric is computed on normalized text (NFKC, then all whitespace
//! removed). The "derepeated" variants run [`remove_repetition`] on the raw
//! prediction first and normalize afterwards, because the repetition
//! pattern's `\S` is whitespace sensitive.

mod bleu;
mod repetition;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

pub use bleu::{char_bleu, char_bleu_with, BleuOptions};
pub use repetition::{remove_repetition, REPETITION_PATTERN};

/// Inputs longer than this (in Unicode scalars) are rejected to bound the
/// memory of the edit-distance table and the repetition scan.
pub const MAX_INPUT_CHARS: usize = 1_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScoreError {
    #[error("reference is empty after normalization")]
    EmptyReference,
    #[error("input of {0} characters exceeds the limit of {MAX_INPUT_CHARS}")]
    InputTooLong(usize),
}

/// Whitespace as Python's `str.isspace` defines it, which is also what the
/// `\s`/`\S` classes of a Python regex use. This is Unicode `White_Space`
/// plus the four information separators U+001C..U+001F.
pub fn is_whitespace(c: char) -> bool {
    c.is_whitespace() || ('\u{1c}'..='\u{1f}').contains(&c)
}

/// NFKC normalization followed by removal of every whitespace scalar.
pub fn normalize(text: &str) -> String {
    text.nfkc().filter(|c| !is_whitespace(*c)).collect()
}

/// Levenshtein distance over Unicode scalars with unit costs.
pub fn edit_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    edit_distance_chars(&a, &b)
}

pub(crate) fn edit_distance_chars(a: &[char], b: &[char]) -> usize {
    let (short, long) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    if short.is_empty() {
        return long.len();
    }
    let mut prev: Vec<usize> = (0..=short.len()).collect();
    let mut curr = vec![0usize; short.len() + 1];
    for (i, lc) in long.iter().enumerate() {
        curr[0] = i + 1;
        for (j, sc) in short.iter().enumerate() {
            let substitute = prev[j] + usize::from(lc != sc);
            curr[j + 1] = substitute.min(prev[j + 1] + 1).min(curr[j] + 1);
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[short.len()]
}

/// Character error rate in percent: `edit_distance(pred, reference) /
/// |reference| * 100`. Expects already-normalized inputs. The result is
/// unbounded above; long hallucinated predictions exceed 100.
pub fn cer(pred: &str, reference: &str) -> Result<f64, ScoreError> {
    let pred: Vec<char> = pred.chars().collect();
    let reference: Vec<char> = reference.chars().collect();
    check_len(pred.len())?;
    check_len(reference.len())?;
    if reference.is_empty() {
        return Err(ScoreError::EmptyReference);
    }
    let distance = edit_distance_chars(&pred, &reference);
    Ok(distance as f64 / reference.len() as f64 * 100.0)
}

fn check_len(len: usize) -> Result<(), ScoreError> {
    if len > MAX_INPUT_CHARS {
        Err(ScoreError::InputTooLong(len))
    } else {
        Ok(())
    }
}

/// A prediction/reference pair with every derived form the metrics need.
#[derive(Debug, Clone, PartialEq)]
pub struct ScorePair {
    pub pred: String,
    pub reference: String,
    pub pred_derepeated: String,
    pub pred_normalized: String,
    pub reference_normalized: String,
    pub pred_derepeated_normalized: String,
}

impl ScorePair {
    pub fn new(pred: &str, reference: &str) -> Result<Self, ScoreError> {
        check_len(pred.chars().count())?;
        let reference_normalized = normalize(reference);
        if reference_normalized.is_empty() {
            return Err(ScoreError::EmptyReference);
        }
        let pred_derepeated = remove_repetition(pred);
        Ok(Self {
            pred: pred.to_owned(),
            reference: reference.to_owned(),
            pred_normalized: normalize(pred),
            pred_derepeated_normalized: normalize(&pred_derepeated),
            pred_derepeated,
            reference_normalized,
        })
    }

    pub fn scores(&self) -> Result<SampleScores, ScoreError> {
        let reference = &self.reference_normalized;
        Ok(SampleScores {
            cer_raw: cer(&self.pred_normalized, reference)?,
            cer_derepeated: cer(&self.pred_derepeated_normalized, reference)?,
            bleu_raw: char_bleu(&self.pred_normalized, reference),
            bleu_derepeated: char_bleu(&self.pred_derepeated_normalized, reference),
        })
    }
}

/// The four per-sample numbers reported for every model: CER and BLEU on
/// the raw output and on the output with repetition removed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleScores {
    pub cer_raw: f64,
    pub cer_derepeated: f64,
    pub bleu_raw: f64,
    pub bleu_derepeated: f64,
}

/// Scores a raw model output against its ground truth.
pub fn score_pair(pred: &str, reference: &str) -> Result<SampleScores, ScoreError> {
    ScorePair::new(pred, reference)?.scores()
}
