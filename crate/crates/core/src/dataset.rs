//! Corpus validation and the per-novel train/validation/test split.
//!
//! Novels with fewer than `min_sentences` gold sentences are excluded. A
//! set of withheld novels goes to the test split in full; every other
//! eligible novel contributes a seeded random sample of `train_per_novel`
//! sentences to train, `val_per_novel` to validation and the remainder to
//! test.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::markup::{parse_strict, strip, Diagnostic, ID_DELIMITER};
use crate::records::{CorpusRecord, PairRecord};

/// Sentences every sampled novel must leave for the test split.
pub const MIN_TEST_PER_NOVEL: usize = 8;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SentenceRecord {
    pub sent_id: u64,
    pub annotated: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NovelRecord {
    pub novel_id: String,
    pub sentences: Vec<SentenceRecord>,
}

/// Groups flat corpus records by novel, ordered by novel id and then by
/// sentence id.
pub fn group_records(records: Vec<CorpusRecord>) -> Vec<NovelRecord> {
    let mut novels: BTreeMap<String, Vec<SentenceRecord>> = BTreeMap::new();
    for r in records {
        novels.entry(r.novel_id).or_default().push(SentenceRecord {
            sent_id: r.sent_id,
            annotated: r.annotated,
        });
    }
    novels
        .into_iter()
        .map(|(novel_id, mut sentences)| {
            sentences.sort_by_key(|s| s.sent_id);
            NovelRecord { novel_id, sentences }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    ParseFailure {
        novel_id: String,
        sent_id: u64,
        diagnostic: Diagnostic,
    },
    DuplicateSentId {
        novel_id: String,
        sent_id: u64,
    },
    /// Cluster ids are not 1, 2, 3, ... in order of first appearance.
    ClusterIdOrder {
        novel_id: String,
        sent_id: u64,
        ids: Vec<u32>,
    },
    DuplicateSpan {
        novel_id: String,
        sent_id: u64,
        start: usize,
        end: usize,
    },
    /// A mention's text contains `": "`, which collides with the id delimiter.
    AmbiguousDelimiter {
        novel_id: String,
        sent_id: u64,
        start: usize,
        end: usize,
    },
    ExcludedSmallNovel {
        novel_id: String,
        sentences: usize,
        min_sentences: usize,
    },
}

impl Violation {
    pub fn is_exclusion(&self) -> bool {
        matches!(self, Violation::ExcludedSmallNovel { .. })
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::ParseFailure {
                novel_id,
                sent_id,
                diagnostic,
            } => write!(f, "{novel_id}/{sent_id}: parse failure: {diagnostic}"),
            Violation::DuplicateSentId { novel_id, sent_id } => {
                write!(f, "{novel_id}/{sent_id}: duplicate sentence id")
            }
            Violation::ClusterIdOrder { novel_id, sent_id, ids } => write!(
                f,
                "{novel_id}/{sent_id}: cluster ids {ids:?} are not numbered 1.. in order of first appearance"
            ),
            Violation::DuplicateSpan {
                novel_id,
                sent_id,
                start,
                end,
            } => write!(
                f,
                "{novel_id}/{sent_id}: span {start}..{end} is annotated more than once"
            ),
            Violation::AmbiguousDelimiter {
                novel_id,
                sent_id,
                start,
                end,
            } => write!(
                f,
                "{novel_id}/{sent_id}: mention {start}..{end} contains the id delimiter {ID_DELIMITER:?}"
            ),
            Violation::ExcludedSmallNovel {
                novel_id,
                sentences,
                min_sentences,
            } => write!(
                f,
                "{novel_id}: {sentences} sentences, below the minimum of {min_sentences}; novel excluded"
            ),
        }
    }
}

fn validate_sentence(novel_id: &str, s: &SentenceRecord, out: &mut Vec<Violation>) {
    let sentence = match parse_strict(&s.annotated) {
        Ok(sentence) => sentence,
        Err(diagnostic) => {
            out.push(Violation::ParseFailure {
                novel_id: novel_id.to_string(),
                sent_id: s.sent_id,
                diagnostic,
            });
            return;
        }
    };
    let ids = sentence.cluster_ids();
    if ids.iter().enumerate().any(|(i, &id)| id as usize != i + 1) {
        out.push(Violation::ClusterIdOrder {
            novel_id: novel_id.to_string(),
            sent_id: s.sent_id,
            ids,
        });
    }
    for pair in sentence.mentions().windows(2) {
        if pair[0].span() == pair[1].span() {
            out.push(Violation::DuplicateSpan {
                novel_id: novel_id.to_string(),
                sent_id: s.sent_id,
                start: pair[0].start,
                end: pair[0].end,
            });
        }
    }
    for m in sentence.mentions() {
        if sentence.surface(m).contains(ID_DELIMITER) {
            out.push(Violation::AmbiguousDelimiter {
                novel_id: novel_id.to_string(),
                sent_id: s.sent_id,
                start: m.start,
                end: m.end,
            });
        }
    }
}

/// Reports every problem in the corpus; never fails.
pub fn validate_corpus(novels: &[NovelRecord], min_sentences: usize) -> Vec<Violation> {
    let mut out = Vec::new();
    for novel in novels {
        let mut seen = HashSet::new();
        for s in &novel.sentences {
            if !seen.insert(s.sent_id) {
                out.push(Violation::DuplicateSentId {
                    novel_id: novel.novel_id.clone(),
                    sent_id: s.sent_id,
                });
            }
            validate_sentence(&novel.novel_id, s, &mut out);
        }
        if novel.sentences.len() < min_sentences {
            out.push(Violation::ExcludedSmallNovel {
                novel_id: novel.novel_id.clone(),
                sentences: novel.sentences.len(),
                min_sentences,
            });
        }
    }
    out
}

/// How the fully withheld novels are chosen.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WithheldNovels {
    Ids(BTreeSet<String>),
    /// The `n` eligible novels with the most sentences (ties by id).
    Largest(usize),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitConfig {
    pub withheld: WithheldNovels,
    pub train_per_novel: usize,
    pub val_per_novel: usize,
    pub min_sentences: usize,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            withheld: WithheldNovels::Largest(5),
            train_per_novel: 40,
            val_per_novel: 2,
            min_sentences: 50,
            seed: 0,
        }
    }
}

impl SplitConfig {
    pub fn check(&self) -> Result<(), SplitError> {
        if self.train_per_novel + self.val_per_novel + MIN_TEST_PER_NOVEL > self.min_sentences {
            return Err(SplitError::Config(format!(
                "train_per_novel ({}) + val_per_novel ({}) + {MIN_TEST_PER_NOVEL} exceeds min_sentences ({})",
                self.train_per_novel, self.val_per_novel, self.min_sentences
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum SplitError {
    #[error("invalid split configuration: {0}")]
    Config(String),
    #[error("corpus has {} violation(s); first: {}", .0.len(), .0[0])]
    InvalidCorpus(Vec<Violation>),
    #[error("withheld novel {0:?} is not an eligible novel of the corpus")]
    UnknownWithheld(String),
    #[error("need at least {needed} eligible novels, found {found}")]
    TooFewNovels { needed: usize, found: usize },
    #[error("novel {novel_id:?} has {sentences} sentences, fewer than the {needed} to sample")]
    NovelTooSmall {
        novel_id: String,
        sentences: usize,
        needed: usize,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reason {
    WithheldNovel,
    SampledTrain,
    SampledVal,
    RemainderTest,
    ExcludedSmallNovel,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssignmentRecord {
    pub novel_id: String,
    pub sent_id: u64,
    /// `None` for sentences of excluded novels.
    pub split: Option<Split>,
    pub reason: Reason,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub withheld_novel_ids: Vec<String>,
    pub train_per_novel: usize,
    pub val_per_novel: usize,
    pub min_sentences: usize,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
    pub excluded: usize,
}

/// Deterministic record of where every sentence went and why.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub config: ConfigEcho,
    pub counts: SplitCounts,
    pub assignments: Vec<AssignmentRecord>,
    /// SHA-256 over the canonical JSON of `config` and `assignments`.
    pub content_hash: String,
}

impl SplitManifest {
    fn new(config: ConfigEcho, assignments: Vec<AssignmentRecord>) -> Self {
        let mut counts = SplitCounts::default();
        for a in &assignments {
            match a.split {
                Some(Split::Train) => counts.train += 1,
                Some(Split::Val) => counts.val += 1,
                Some(Split::Test) => counts.test += 1,
                None => counts.excluded += 1,
            }
        }
        let content_hash = content_hash(&config, &assignments);
        SplitManifest {
            config,
            counts,
            assignments,
            content_hash,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    /// Recomputes the hash and compares it with the stored one.
    pub fn verify_hash(&self) -> bool {
        content_hash(&self.config, &self.assignments) == self.content_hash
    }
}

fn content_hash(config: &ConfigEcho, assignments: &[AssignmentRecord]) -> String {
    let canonical = serde_json::to_vec(&(config, assignments)).expect("manifest serializes");
    Sha256::digest(&canonical).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitOutput {
    pub train: Vec<PairRecord>,
    pub val: Vec<PairRecord>,
    pub test: Vec<PairRecord>,
    pub manifest: SplitManifest,
}

/// Input/output pair for one gold sentence: the stripped sentence and the
/// annotated one.
pub fn emit_pair(novel_id: &str, sentence: &SentenceRecord) -> PairRecord {
    PairRecord {
        novel_id: novel_id.to_string(),
        sent_id: sentence.sent_id,
        input: strip(&sentence.annotated),
        output: sentence.annotated.clone(),
    }
}

fn novel_rng(seed: u64, novel_id: &str) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(novel_id.as_bytes());
    ChaCha8Rng::from_seed(hasher.finalize().into())
}

fn resolve_withheld(config: &SplitConfig, eligible: &[&NovelRecord]) -> Result<BTreeSet<String>, SplitError> {
    match &config.withheld {
        WithheldNovels::Ids(ids) => {
            for id in ids {
                if !eligible.iter().any(|n| &n.novel_id == id) {
                    return Err(SplitError::UnknownWithheld(id.clone()));
                }
            }
            Ok(ids.clone())
        }
        WithheldNovels::Largest(n) => {
            let mut by_size: Vec<&&NovelRecord> = eligible.iter().collect();
            by_size.sort_by(|a, b| {
                b.sentences
                    .len()
                    .cmp(&a.sentences.len())
                    .then_with(|| a.novel_id.cmp(&b.novel_id))
            });
            Ok(by_size.iter().take(*n).map(|n| n.novel_id.clone()).collect())
        }
    }
}

pub fn split(novels: &[NovelRecord], config: &SplitConfig) -> Result<SplitOutput, SplitError> {
    config.check()?;
    let violations: Vec<Violation> = validate_corpus(novels, config.min_sentences)
        .into_iter()
        .filter(|v| !v.is_exclusion())
        .collect();
    if !violations.is_empty() {
        return Err(SplitError::InvalidCorpus(violations));
    }

    let mut novels: Vec<&NovelRecord> = novels.iter().collect();
    novels.sort_by(|a, b| a.novel_id.cmp(&b.novel_id));
    let eligible: Vec<&NovelRecord> = novels
        .iter()
        .copied()
        .filter(|n| n.sentences.len() >= config.min_sentences)
        .collect();
    let withheld = resolve_withheld(config, &eligible)?;
    if eligible.len() < withheld.len() + 1 {
        return Err(SplitError::TooFewNovels {
            needed: withheld.len() + 1,
            found: eligible.len(),
        });
    }

    let sampled = config.train_per_novel + config.val_per_novel;
    let mut assignments = Vec::new();
    let mut train = Vec::new();
    let mut val = Vec::new();
    let mut test = Vec::new();
    for novel in novels {
        let mut sentences: Vec<&SentenceRecord> = novel.sentences.iter().collect();
        sentences.sort_by_key(|s| s.sent_id);
        let mut assign = |s: &SentenceRecord, split: Option<Split>, reason: Reason| {
            assignments.push(AssignmentRecord {
                novel_id: novel.novel_id.clone(),
                sent_id: s.sent_id,
                split,
                reason,
            });
            let pair = || emit_pair(&novel.novel_id, s);
            match split {
                Some(Split::Train) => train.push(pair()),
                Some(Split::Val) => val.push(pair()),
                Some(Split::Test) => test.push(pair()),
                None => {}
            }
        };

        if sentences.len() < config.min_sentences {
            for s in sentences {
                assign(s, None, Reason::ExcludedSmallNovel);
            }
            continue;
        }
        if withheld.contains(&novel.novel_id) {
            for s in sentences {
                assign(s, Some(Split::Test), Reason::WithheldNovel);
            }
            continue;
        }
        if sentences.len() < sampled {
            return Err(SplitError::NovelTooSmall {
                novel_id: novel.novel_id.clone(),
                sentences: sentences.len(),
                needed: sampled,
            });
        }
        let mut order: Vec<usize> = (0..sentences.len()).collect();
        order.shuffle(&mut novel_rng(config.seed, &novel.novel_id));
        let mut placement = vec![(Split::Test, Reason::RemainderTest); sentences.len()];
        for &i in &order[..config.train_per_novel] {
            placement[i] = (Split::Train, Reason::SampledTrain);
        }
        for &i in &order[config.train_per_novel..sampled] {
            placement[i] = (Split::Val, Reason::SampledVal);
        }
        for (s, (split, reason)) in sentences.into_iter().zip(placement) {
            assign(s, Some(split), reason);
        }
    }

    let config_echo = ConfigEcho {
        withheld_novel_ids: withheld.into_iter().collect(),
        train_per_novel: config.train_per_novel,
        val_per_novel: config.val_per_novel,
        min_sentences: config.min_sentences,
        seed: config.seed,
    };
    Ok(SplitOutput {
        train,
        val,
        test,
        manifest: SplitManifest::new(config_echo, assignments),
    })
}
