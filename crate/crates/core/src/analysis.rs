//! Error analysis of model generations: word replacements, hallucinated
//! tails and a fixed-order failure taxonomy.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::strict::SentencePair;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AnalysisError {
    #[error("token counts differ: input has {input}, output has {output}")]
    TokenCountMismatch { input: usize, output: usize },
}

const LEADING_PUNCT: &[char] = &['"', '\'', '“', '‘', '(', '«', '-'];
const TRAILING_PUNCT: &[char] = &[',', ';', ':', '!', '?', '"', '\'', '”', '’', ')', '»'];

/// Whitespace tokenization with punctuation split off.
///
/// Leading quotes and brackets, and trailing commas, semicolons, colons,
/// quotes and brackets become their own tokens. Periods are only split off
/// the last word of the text, so abbreviations like `Mr.` stay whole.
pub fn tokenize(text: &str) -> Vec<&str> {
    let chunks: Vec<&str> = text.split_whitespace().collect();
    let mut tokens = Vec::with_capacity(chunks.len() + 4);
    for (i, chunk) in chunks.iter().enumerate() {
        let last = i + 1 == chunks.len();
        let mut word = *chunk;
        while let Some(c) = word.chars().next().filter(|c| LEADING_PUNCT.contains(c)) {
            if word.len() == c.len_utf8() {
                break;
            }
            tokens.push(&word[..c.len_utf8()]);
            word = &word[c.len_utf8()..];
        }
        let mut trailing = Vec::new();
        while let Some(c) = word
            .chars()
            .next_back()
            .filter(|&c| TRAILING_PUNCT.contains(&c) || (last && c == '.'))
        {
            if word.len() == c.len_utf8() {
                break;
            }
            let at = word.len() - c.len_utf8();
            trailing.push(&word[at..]);
            word = &word[..at];
        }
        tokens.push(word);
        tokens.extend(trailing.into_iter().rev());
    }
    tokens
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Replacement {
    /// Token index.
    pub position: usize,
    pub original: String,
    pub substituted: String,
}

/// Positional token comparison; only defined when both sides have the same
/// number of tokens.
pub fn extract_replacements(input: &str, cleaned_output: &str) -> Result<Vec<Replacement>, AnalysisError> {
    let a = tokenize(input);
    let b = tokenize(cleaned_output);
    if a.len() != b.len() {
        return Err(AnalysisError::TokenCountMismatch {
            input: a.len(),
            output: b.len(),
        });
    }
    Ok(a.iter()
        .zip(&b)
        .enumerate()
        .filter(|(_, (x, y))| x != y)
        .map(|(position, (x, y))| Replacement {
            position,
            original: x.to_string(),
            substituted: y.to_string(),
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplacementCount {
    pub original: String,
    pub substituted: String,
    pub count: usize,
}

/// Counts (original, substituted) pairs, most frequent first, ties broken
/// alphabetically.
pub fn replacement_frequency_table<'a, I>(replacements: I) -> Vec<ReplacementCount>
where
    I: IntoIterator<Item = &'a Replacement>,
{
    let mut counts: HashMap<(&str, &str), usize> = HashMap::new();
    for r in replacements {
        *counts.entry((&r.original, &r.substituted)).or_default() += 1;
    }
    let mut table: Vec<ReplacementCount> = counts
        .into_iter()
        .map(|((original, substituted), count)| ReplacementCount {
            original: original.to_string(),
            substituted: substituted.to_string(),
            count,
        })
        .collect();
    table.sort_by(|a, b| {
        b.count
            .cmp(&a.count)
            .then_with(|| a.original.cmp(&b.original))
            .then_with(|| a.substituted.cmp(&b.substituted))
    });
    table
}

/// How often a word was replaced and by how many distinct strings.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplacementSummary {
    pub original: String,
    pub count: usize,
    pub distinct_substitutes: usize,
}

pub fn summarize_by_original(table: &[ReplacementCount]) -> Vec<ReplacementSummary> {
    let mut by_original: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for row in table {
        let entry = by_original.entry(&row.original).or_default();
        entry.0 += row.count;
        entry.1 += 1;
    }
    let mut out: Vec<ReplacementSummary> = by_original
        .into_iter()
        .map(|(original, (count, distinct_substitutes))| ReplacementSummary {
            original: original.to_string(),
            count,
            distinct_substitutes,
        })
        .collect();
    out.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.original.cmp(&b.original)));
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepetitionThresholds {
    pub min_len: usize,
    pub min_count: usize,
}

impl Default for RepetitionThresholds {
    fn default() -> Self {
        RepetitionThresholds {
            min_len: 3,
            min_count: 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Repetition {
    pub unit: String,
    /// Non-overlapping occurrences.
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HallucinatedTail {
    /// Character offset of the tail in the trimmed output.
    pub start: usize,
    pub text: String,
    pub repetition: Option<Repetition>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TailCheck {
    None,
    Tail(HallucinatedTail),
    /// The output is a strict prefix of the input.
    Truncated {
        missing: String,
    },
}

/// Finds the longest substring of at least `min_len` characters that occurs
/// at least `min_count` times without overlapping.
pub fn find_repetition(text: &str, thresholds: RepetitionThresholds) -> Option<Repetition> {
    let chars: Vec<char> = text.chars().collect();
    let best_at = |len: usize| -> Option<(usize, usize)> {
        if len == 0 || len > chars.len() {
            return None;
        }
        let mut seen: HashMap<&[char], (usize, usize, usize)> = HashMap::new();
        for i in 0..=chars.len() - len {
            let entry = seen.entry(&chars[i..i + len]).or_insert((0, 0, i));
            if i >= entry.1 {
                entry.0 += 1;
                entry.1 = i + len;
            }
        }
        seen.into_values()
            .filter(|(count, _, _)| *count >= thresholds.min_count)
            .map(|(count, _, first)| (count, first))
            .max_by(|a, b| a.0.cmp(&b.0).then_with(|| b.1.cmp(&a.1)))
    };
    // Any prefix of a repeated unit repeats at least as often, so the
    // feasible lengths form a range and can be binary searched.
    let min_len = thresholds.min_len.max(1);
    best_at(min_len)?;
    let (mut lo, mut hi) = (min_len, chars.len() / thresholds.min_count.max(1));
    while lo < hi {
        let mid = (lo + hi).div_ceil(2);
        if best_at(mid).is_some() {
            lo = mid;
        } else {
            hi = mid - 1;
        }
    }
    let (count, first) = best_at(lo)?;
    Some(Repetition {
        unit: chars[first..first + lo].iter().collect(),
        count,
    })
}

/// Checks whether `output` is a faithful copy of `input` followed by extra
/// text (or cut short). Outer whitespace is ignored on both sides.
pub fn detect_hallucinated_tail(input: &str, output: &str, thresholds: RepetitionThresholds) -> TailCheck {
    let input = input.trim();
    let output = output.trim();
    if output.len() > input.len() && output.starts_with(input) {
        let text = &output[input.len()..];
        return TailCheck::Tail(HallucinatedTail {
            start: input.chars().count(),
            text: text.to_string(),
            repetition: find_repetition(text, thresholds),
        });
    }
    if output.len() < input.len() && input.starts_with(output) {
        return TailCheck::Truncated {
            missing: input[output.len()..].to_string(),
        };
    }
    TailCheck::None
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FailureKind {
    Exact,
    AnnotationOnlyDiff,
    WordSubstitution,
    WordInsertionDeletion,
    HallucinatedTail,
    BracketMismatch,
    Truncation,
    Other,
}

impl FailureKind {
    pub const ALL: [FailureKind; 8] = [
        FailureKind::Exact,
        FailureKind::AnnotationOnlyDiff,
        FailureKind::WordSubstitution,
        FailureKind::WordInsertionDeletion,
        FailureKind::HallucinatedTail,
        FailureKind::BracketMismatch,
        FailureKind::Truncation,
        FailureKind::Other,
    ];
}

impl fmt::Display for FailureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureLabel {
    pub kind: FailureKind,
    pub evidence: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    pub repetition: RepetitionThresholds,
    /// Largest token-count difference still labelled an insertion/deletion.
    pub max_indel_tokens: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            repetition: RepetitionThresholds::default(),
            max_indel_tokens: 3,
        }
    }
}

/// Tokens of `longer` that are not part of a left-to-right embedding of
/// `shorter`, or `None` if `shorter` is not a subsequence of `longer`.
fn subsequence_extras<'a>(shorter: &[&str], longer: &[&'a str]) -> Option<Vec<&'a str>> {
    let mut extras = Vec::new();
    let mut it = shorter.iter().peekable();
    for token in longer {
        if it.peek().is_some_and(|t| *t == token) {
            it.next();
        } else {
            extras.push(*token);
        }
    }
    it.peek().is_none().then_some(extras)
}

/// Labels a pair by the first matching rule, in [`FailureKind::ALL`] order.
pub fn classify(pair: &SentencePair, config: &AnalysisConfig) -> FailureLabel {
    let label = |kind, evidence: String| FailureLabel { kind, evidence };
    if pair.is_exact_match() {
        return label(FailureKind::Exact, String::new());
    }
    let input = pair.reference_text();
    let output = pair.prediction_clean.as_str();
    if input == output {
        return label(FailureKind::AnnotationOnlyDiff, "clean text identical".into());
    }

    let a = tokenize(input);
    let b = tokenize(output);
    if a.len() == b.len() {
        if let Ok(replacements) = extract_replacements(input, output) {
            if let Some(first) = replacements.first() {
                return label(
                    FailureKind::WordSubstitution,
                    format!(
                        "{} replacement(s); token {}: {:?} -> {:?}",
                        replacements.len(),
                        first.position,
                        first.original,
                        first.substituted
                    ),
                );
            }
        }
    } else if a.len().abs_diff(b.len()) <= config.max_indel_tokens {
        let (extras, verb) = if a.len() < b.len() {
            (subsequence_extras(&a, &b), "inserted")
        } else {
            (subsequence_extras(&b, &a), "deleted")
        };
        if let Some(extras) = extras {
            return label(FailureKind::WordInsertionDeletion, format!("{verb} {extras:?}"));
        }
    }

    let tail = detect_hallucinated_tail(input, output, config.repetition);
    if let TailCheck::Tail(t) = &tail {
        let repetition = t
            .repetition
            .as_ref()
            .map(|r| format!("; {:?} repeated {} times", r.unit, r.count))
            .unwrap_or_default();
        return label(
            FailureKind::HallucinatedTail,
            format!(
                "{} extra characters from {}{repetition}",
                t.text.chars().count(),
                t.start
            ),
        );
    }
    if let Some(d) = pair.diagnostics.iter().next() {
        return label(
            FailureKind::BracketMismatch,
            format!("{} issue(s); first: {d}", pair.diagnostics.len()),
        );
    }
    if let TailCheck::Truncated { missing } = tail {
        return label(FailureKind::Truncation, format!("missing {missing:?}"));
    }
    label(FailureKind::Other, String::new())
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HallucinationEntry {
    /// Index of the pair in the analysed corpus.
    pub index: usize,
    pub tail: HallucinatedTail,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub sentences: usize,
    /// Every kind, in rule order, including zero counts.
    pub histogram: Vec<(FailureKind, usize)>,
    pub labels: Vec<FailureLabel>,
    pub replacements: Vec<ReplacementCount>,
    pub replaced_words: Vec<ReplacementSummary>,
    pub hallucinations: Vec<HallucinationEntry>,
}

impl AnalysisReport {
    pub fn count(&self, kind: FailureKind) -> usize {
        self.histogram.iter().find(|(k, _)| *k == kind).map_or(0, |(_, c)| *c)
    }
}

/// Replacements from every pair whose clean output has as many tokens as
/// its input.
pub fn corpus_replacements(pairs: &[SentencePair]) -> Vec<Replacement> {
    pairs
        .iter()
        .filter_map(|p| extract_replacements(p.reference_text(), &p.prediction_clean).ok())
        .flatten()
        .collect()
}

pub fn analyze_corpus(pairs: &[SentencePair], config: &AnalysisConfig) -> AnalysisReport {
    let labels: Vec<FailureLabel> = pairs.iter().map(|p| classify(p, config)).collect();
    let histogram = FailureKind::ALL
        .iter()
        .map(|k| (*k, labels.iter().filter(|l| l.kind == *k).count()))
        .collect();
    let replacements = replacement_frequency_table(&corpus_replacements(pairs));
    let replaced_words = summarize_by_original(&replacements);
    let hallucinations = pairs
        .iter()
        .zip(&labels)
        .enumerate()
        .filter(|(_, (_, l))| l.kind == FailureKind::HallucinatedTail)
        .filter_map(|(index, (p, _))| {
            match detect_hallucinated_tail(p.reference_text(), &p.prediction_clean, config.repetition) {
                TailCheck::Tail(tail) => Some(HallucinationEntry { index, tail }),
                _ => None,
            }
        })
        .collect();
    AnalysisReport {
        sentences: pairs.len(),
        histogram,
        labels,
        replacements,
        replaced_words,
        hallucinations,
    }
}
