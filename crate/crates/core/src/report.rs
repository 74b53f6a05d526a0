//! Joining gold and predicted records, and the scoring report document.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::markup::strip;
use crate::metrics::{score_pairs, MetricScores};
use crate::records::PredictionRecord;
use crate::strict::{score_corpus, EvalError, EvalReport, LengthGateMode, SentencePair};

pub const TOOLKIT: &str = "litcoref";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// A gold sentence for scoring. Accepts split pair files (`output`) as well
/// as corpus files (`annotated`); a missing `input` is derived by stripping.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldRecord {
    pub novel_id: String,
    pub sent_id: u64,
    #[serde(default)]
    pub input: Option<String>,
    #[serde(alias = "annotated")]
    pub output: String,
}

pub type RecordKey = (String, u64);

#[derive(Debug, Error)]
pub enum JoinError {
    #[error("duplicate {side} record {}/{}", .key.0, .key.1)]
    DuplicateKey { side: &'static str, key: RecordKey },
    #[error("{} gold record(s) without prediction, {} prediction(s) without gold; first: {}", .missing.len(), .unknown.len(), first_key(.missing, .unknown))]
    Unmatched {
        missing: Vec<RecordKey>,
        unknown: Vec<RecordKey>,
    },
    #[error("{}/{}: prediction input {prediction:?} differs from gold input {gold:?}", .key.0, .key.1)]
    InputMismatch {
        key: RecordKey,
        gold: String,
        prediction: String,
    },
    #[error("{}/{}: {source}", .key.0, .key.1)]
    Gold {
        key: RecordKey,
        #[source]
        source: EvalError,
    },
}

fn first_key(missing: &[RecordKey], unknown: &[RecordKey]) -> String {
    missing
        .first()
        .or(unknown.first())
        .map(|(n, s)| format!("{n}/{s}"))
        .unwrap_or_default()
}

/// Sentence pairs in `(novel_id, sent_id)` order.
#[derive(Clone, Debug)]
pub struct JoinedCorpus {
    pub keys: Vec<RecordKey>,
    pub pairs: Vec<SentencePair>,
}

fn index<T>(
    side: &'static str,
    records: Vec<T>,
    key: impl Fn(&T) -> RecordKey,
) -> Result<BTreeMap<RecordKey, T>, JoinError> {
    let mut map = BTreeMap::new();
    for r in records {
        let k = key(&r);
        if map.contains_key(&k) {
            return Err(JoinError::DuplicateKey { side, key: k });
        }
        map.insert(k, r);
    }
    Ok(map)
}

/// Pairs every gold record with exactly one prediction.
pub fn join_records(gold: Vec<GoldRecord>, predictions: Vec<PredictionRecord>) -> Result<JoinedCorpus, JoinError> {
    let gold = index("gold", gold, |r| (r.novel_id.clone(), r.sent_id))?;
    let mut predictions = index("prediction", predictions, |r| (r.novel_id.clone(), r.sent_id))?;

    let missing: Vec<RecordKey> = gold.keys().filter(|k| !predictions.contains_key(*k)).cloned().collect();
    let unknown: Vec<RecordKey> = predictions.keys().filter(|k| !gold.contains_key(*k)).cloned().collect();
    if !missing.is_empty() || !unknown.is_empty() {
        return Err(JoinError::Unmatched { missing, unknown });
    }

    let mut keys = Vec::with_capacity(gold.len());
    let mut pairs = Vec::with_capacity(gold.len());
    for (key, g) in gold {
        let p = predictions.remove(&key).expect("keys checked above");
        let input = g.input.unwrap_or_else(|| strip(&g.output));
        if input.trim() != p.input.trim() {
            return Err(JoinError::InputMismatch {
                key,
                gold: input,
                prediction: p.input,
            });
        }
        let pair = SentencePair::new(input, g.output, p.prediction).map_err(|source| JoinError::Gold {
            key: key.clone(),
            source,
        })?;
        keys.push(key);
        pairs.push(pair);
    }
    Ok(JoinedCorpus { keys, pairs })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Strict,
    Standard,
    #[default]
    All,
}

impl Suite {
    pub fn strict(self) -> bool {
        self != Suite::Standard
    }

    pub fn standard(self) -> bool {
        self != Suite::Strict
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Suite::Strict => "strict",
            Suite::Standard => "standard",
            Suite::All => "all",
        })
    }
}

impl FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "strict" => Ok(Suite::Strict),
            "standard" => Ok(Suite::Standard),
            "all" => Ok(Suite::All),
            other => Err(format!("unknown suite {other:?} (expected strict, standard or all)")),
        }
    }
}

/// Scoring conventions, embedded in every report.
pub fn conventions() -> BTreeMap<String, String> {
    [
        ("units", "precision, recall, F1 and exact match are percentages"),
        ("aggregation", "micro: counts are summed over sentences before dividing"),
        ("length_gate", "a prediction whose stripped text fails the gate earns no entity or coreference credit"),
        ("duplicate_spans", "identical nested spans keep the outermost cluster id"),
        ("whitespace", "outer whitespace of gold and prediction is trimmed before parsing"),
        ("zero_division", "0/0 scores 0, or 100 when both sides have no mentions"),
        ("blanc", "mean of coreference and non-coreference link scores; only the defined link type counts when one is undefined"),
        ("lea_singletons", "a singleton entity is resolved iff the other side has the same singleton"),
        ("conll_avg", "mean of MUC, B3 and CEAF_e F1"),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v.to_string()))
    .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub toolkit: String,
    pub version: String,
    pub suite: Suite,
    pub gate: LengthGateMode,
    pub conventions: BTreeMap<String, String>,
    pub strict: Option<EvalReport>,
    pub standard: Option<MetricScores>,
}

impl ScoreReport {
    pub fn compute(pairs: &[SentencePair], suite: Suite, gate: LengthGateMode) -> Result<Self, EvalError> {
        let strict = if suite.strict() {
            Some(score_corpus(pairs, gate)?)
        } else if pairs.is_empty() {
            return Err(EvalError::EmptyCorpus);
        } else {
            None
        };
        Ok(ScoreReport {
            toolkit: TOOLKIT.to_string(),
            version: VERSION.to_string(),
            suite,
            gate,
            conventions: conventions(),
            strict,
            standard: suite.standard().then(|| score_pairs(pairs, gate)),
        })
    }

    /// Column headers and values for the plain-text table.
    pub fn columns(&self) -> Vec<(&'static str, String)> {
        let mut cols = Vec::new();
        if let Some(s) = &self.strict {
            cols.push(("Ent. F1", format!("{:.2}", s.entity_f1)));
            cols.push(("Coref. F1", format!("{:.2}", s.coref_f1)));
            cols.push(("Average Edit Distance", format!("{:.2}", s.mean_edit_distance)));
            cols.push(("Exact String Match", format!("{:.2}", s.exact_match_rate)));
        }
        if let Some(m) = &self.standard {
            for (name, prf) in [
                ("MUC", m.muc),
                ("B³", m.b_cubed),
                ("CEAF_m", m.ceaf_m),
                ("CEAF_e", m.ceaf_e),
                ("BLANC", m.blanc),
                ("LEA", m.lea),
            ] {
                cols.push((name, format!("{:.2}", prf.f1)));
            }
            cols.push(("CoNLL avg.", format!("{:.2}", m.conll_avg)));
        }
        cols
    }

    /// Aligned two-line table with `label` as the row name.
    pub fn table(&self, label: &str) -> String {
        let cols = self.columns();
        let label_width = label.chars().count().max("Predictions".len());
        let mut header = format!("{:<label_width$}", "Predictions");
        let mut row = format!("{label:<label_width$}");
        for (name, value) in &cols {
            let w = name.chars().count().max(value.len());
            header.push_str(&format!(" | {name:>w$}"));
            row.push_str(&format!(" | {value:>w$}"));
        }
        format!("{header}\n{row}\n")
    }
}
