//! Strict sentence-level scoring of generated annotations.
//!
//! A predicted entity only counts when the stripped prediction passes the
//! length gate against the input and the mention has the same offsets and
//! surface string as a gold mention. Coreference credit additionally needs
//! the identical cluster id.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::markup::{
    parse_lenient, parse_strict, simplify_duplicates, AnnotatedSentence, Diagnostic, ParseDiagnostics,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("gold annotation does not parse: {0}")]
    Gold(#[from] Diagnostic),
    #[error("gold annotation strips to {stripped:?}, expected input {input:?}")]
    InputMismatch { input: String, stripped: String },
    #[error("cannot score an empty corpus")]
    EmptyCorpus,
}

/// Character-level Levenshtein distance with unit costs.
pub fn edit_distance(a: &str, b: &str) -> usize {
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
            let substitute = prev[j] + usize::from(ca != cb);
            cur[j + 1] = substitute.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Equality after trimming leading and trailing whitespace.
pub fn exact_match(gold_annotated: &str, prediction_raw: &str) -> bool {
    gold_annotated.trim() == prediction_raw.trim()
}

/// How the stripped prediction is compared with the input before any
/// entity credit is given.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LengthGateMode {
    /// Same number of characters.
    #[default]
    Char,
    /// Same number of whitespace-delimited tokens.
    Token,
}

impl LengthGateMode {
    pub fn measure(self, text: &str) -> usize {
        match self {
            LengthGateMode::Char => text.chars().count(),
            LengthGateMode::Token => text.split_whitespace().count(),
        }
    }

    pub fn passes(self, input: &str, cleaned: &str) -> bool {
        self.measure(input) == self.measure(cleaned)
    }
}

impl fmt::Display for LengthGateMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LengthGateMode::Char => "char",
            LengthGateMode::Token => "token",
        })
    }
}

impl FromStr for LengthGateMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "char" => Ok(LengthGateMode::Char),
            "token" => Ok(LengthGateMode::Token),
            other => Err(format!("unknown gate mode {other:?} (expected char or token)")),
        }
    }
}

/// A gold sentence together with one model generation for it.
///
/// Both annotated strings have their outer whitespace trimmed before they
/// are parsed, so that exact-match sentences always align.
#[derive(Clone, Debug)]
pub struct SentencePair {
    pub input: String,
    pub gold_annotated: String,
    pub gold: AnnotatedSentence,
    pub prediction_raw: String,
    pub prediction: AnnotatedSentence,
    pub prediction_clean: String,
    pub diagnostics: ParseDiagnostics,
}

impl SentencePair {
    pub fn new(
        input: impl Into<String>,
        gold_annotated: impl Into<String>,
        prediction_raw: impl Into<String>,
    ) -> Result<Self, EvalError> {
        let input = input.into();
        let gold_annotated = gold_annotated.into();
        let prediction_raw = prediction_raw.into();

        let gold = simplify_duplicates(&parse_strict(gold_annotated.trim())?);
        if gold.clean_text() != input.trim() {
            return Err(EvalError::InputMismatch {
                input,
                stripped: gold.clean_text().to_string(),
            });
        }
        let (prediction, diagnostics) = parse_lenient(prediction_raw.trim());
        let prediction = simplify_duplicates(&prediction);
        let prediction_clean = prediction.clean_text().to_string();
        Ok(SentencePair {
            input,
            gold_annotated,
            gold,
            prediction_raw,
            prediction,
            prediction_clean,
            diagnostics,
        })
    }

    /// The reference text that predictions are measured against.
    pub fn reference_text(&self) -> &str {
        self.gold.clean_text()
    }

    pub fn gate_passed(&self, gate: LengthGateMode) -> bool {
        gate.passes(self.reference_text(), &self.prediction_clean)
    }

    pub fn is_exact_match(&self) -> bool {
        exact_match(&self.gold_annotated, &self.prediction_raw)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrictCounts {
    pub entity_tp: usize,
    pub entity_fp: usize,
    pub entity_fn: usize,
    pub coref_tp: usize,
    pub coref_fp: usize,
    pub coref_fn: usize,
    pub edit_distance: usize,
    pub exact_match: bool,
    pub length_gate_passed: bool,
}

type EntityKey<'a> = (usize, usize, &'a str);

fn entity_keys(s: &AnnotatedSentence) -> HashSet<EntityKey<'_>> {
    s.mentions().iter().map(|m| (m.start, m.end, s.surface(m))).collect()
}

fn coref_keys(s: &AnnotatedSentence) -> HashSet<(EntityKey<'_>, u32)> {
    s.mentions()
        .iter()
        .map(|m| ((m.start, m.end, s.surface(m)), m.cluster_id))
        .collect()
}

pub fn score_sentence(pair: &SentencePair, gate: LengthGateMode) -> StrictCounts {
    let length_gate_passed = pair.gate_passed(gate);
    let edit_distance = edit_distance(pair.reference_text(), &pair.prediction_clean);
    let exact_match = pair.is_exact_match();
    let gold = pair.gold.mentions().len();
    let predicted = pair.prediction.mentions().len();

    if !length_gate_passed {
        return StrictCounts {
            entity_fp: predicted,
            entity_fn: gold,
            coref_fp: predicted,
            coref_fn: gold,
            edit_distance,
            exact_match,
            length_gate_passed,
            ..StrictCounts::default()
        };
    }

    let entity_tp = entity_keys(&pair.gold)
        .intersection(&entity_keys(&pair.prediction))
        .count();
    let coref_tp = coref_keys(&pair.gold)
        .intersection(&coref_keys(&pair.prediction))
        .count();
    StrictCounts {
        entity_tp,
        entity_fp: predicted - entity_tp,
        entity_fn: gold - entity_tp,
        coref_tp,
        coref_fp: predicted - coref_tp,
        coref_fn: gold - coref_tp,
        edit_distance,
        exact_match,
        length_gate_passed,
    }
}

/// Precision, recall and F1 as percentages. Ratios with a zero denominator
/// are 0, as is F1 when precision and recall are both 0.
pub fn precision_recall_f1(tp: usize, fp: usize, fn_: usize) -> (f64, f64, f64) {
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { 100.0 * num as f64 / den as f64 };
    let p = ratio(tp, tp + fp);
    let r = ratio(tp, tp + fn_);
    (p, r, harmonic_mean(p, r))
}

pub fn harmonic_mean(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Corpus-level strict metrics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub sentences: usize,
    pub gate: LengthGateMode,
    pub entity_precision: f64,
    pub entity_recall: f64,
    pub entity_f1: f64,
    pub coref_precision: f64,
    pub coref_recall: f64,
    pub coref_f1: f64,
    pub mean_edit_distance: f64,
    /// Percentage of sentences, not of entities.
    pub exact_match_rate: f64,
    pub per_sentence: Vec<StrictCounts>,
}

impl EvalReport {
    pub fn from_counts(per_sentence: Vec<StrictCounts>, gate: LengthGateMode) -> Result<Self, EvalError> {
        if per_sentence.is_empty() {
            return Err(EvalError::EmptyCorpus);
        }
        let mut total = StrictCounts::default();
        let mut distance = 0usize;
        let mut exact = 0usize;
        for c in &per_sentence {
            total.entity_tp += c.entity_tp;
            total.entity_fp += c.entity_fp;
            total.entity_fn += c.entity_fn;
            total.coref_tp += c.coref_tp;
            total.coref_fp += c.coref_fp;
            total.coref_fn += c.coref_fn;
            distance += c.edit_distance;
            exact += usize::from(c.exact_match);
        }
        let n = per_sentence.len();
        let (entity_precision, entity_recall, entity_f1) =
            precision_recall_f1(total.entity_tp, total.entity_fp, total.entity_fn);
        let (coref_precision, coref_recall, coref_f1) =
            precision_recall_f1(total.coref_tp, total.coref_fp, total.coref_fn);
        Ok(EvalReport {
            sentences: n,
            gate,
            entity_precision,
            entity_recall,
            entity_f1,
            coref_precision,
            coref_recall,
            coref_f1,
            mean_edit_distance: distance as f64 / n as f64,
            exact_match_rate: 100.0 * exact as f64 / n as f64,
            per_sentence,
        })
    }
}

pub fn score_corpus(pairs: &[SentencePair], gate: LengthGateMode) -> Result<EvalReport, EvalError> {
    let counts = pairs.iter().map(|p| score_sentence(p, gate)).collect();
    EvalReport::from_counts(counts, gate)
}
