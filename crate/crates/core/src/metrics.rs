//! Standard coreference metrics over mention clusterings.
//!
//! Mentions are identified by their exact character span; singletons are
//! counted. Every metric is computed from raw numerators and denominators
//! ([`MetricCounts`]) so that a corpus of sentences is scored by summing
//! counts before dividing (micro-averaging), as reference scorers do for
//! multi-document input.
//!
//! Conventions:
//! - A ratio whose denominator is zero is 0, unless both the gold and the
//!   system side contain no mentions at all, in which case it is 100.
//! - BLANC uses the variant that tolerates differing mention sets. When
//!   only one link type (coreference or non-coreference) occurs on either
//!   side, BLANC is that link type's score.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::ops::AddAssign;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assignment::optimal_assignment;
use crate::markup::AnnotatedSentence;
use crate::strict::{harmonic_mean, LengthGateMode, SentencePair};

/// A mention identified by its `(start, end)` character span.
pub type MentionKey = (usize, usize);

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ClusteringError {
    #[error("entity {0} has no mentions")]
    EmptyEntity(usize),
    #[error("mention {0:?} appears in more than one entity")]
    SharedMention(MentionKey),
}

/// Entities as pairwise-disjoint, non-empty mention sets.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Clustering {
    entities: Vec<Vec<MentionKey>>,
}

impl Clustering {
    pub fn new(entities: Vec<Vec<MentionKey>>) -> Result<Self, ClusteringError> {
        let mut seen = HashSet::new();
        let mut cleaned = Vec::with_capacity(entities.len());
        for (i, mut entity) in entities.into_iter().enumerate() {
            entity.sort_unstable();
            entity.dedup();
            if entity.is_empty() {
                return Err(ClusteringError::EmptyEntity(i));
            }
            for m in &entity {
                if !seen.insert(*m) {
                    return Err(ClusteringError::SharedMention(*m));
                }
            }
            cleaned.push(entity);
        }
        Ok(Clustering { entities: cleaned })
    }

    pub fn empty() -> Self {
        Clustering::default()
    }

    /// Groups a sentence's mentions by cluster id. A span that occurs more
    /// than once keeps only its outermost mention.
    pub fn from_sentence(sentence: &AnnotatedSentence) -> Self {
        let mut by_id: BTreeMap<u32, Vec<MentionKey>> = BTreeMap::new();
        let mut seen = HashSet::new();
        for m in sentence.mentions() {
            if seen.insert(m.span()) {
                by_id.entry(m.cluster_id).or_default().push(m.span());
            }
        }
        Clustering {
            entities: by_id.into_values().collect(),
        }
    }

    pub fn entities(&self) -> &[Vec<MentionKey>] {
        &self.entities
    }

    pub fn mention_count(&self) -> usize {
        self.entities.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    fn entity_of(&self) -> HashMap<MentionKey, usize> {
        self.entities
            .iter()
            .enumerate()
            .flat_map(|(i, e)| e.iter().map(move |m| (*m, i)))
            .collect()
    }

    fn mentions(&self) -> impl Iterator<Item = MentionKey> + '_ {
        self.entities.iter().flatten().copied()
    }

    /// Shifts every span by `offset`; used to lay sentences side by side.
    pub fn shifted(&self, offset: usize) -> Self {
        Clustering {
            entities: self
                .entities
                .iter()
                .map(|e| e.iter().map(|(s, t)| (s + offset, t + offset)).collect())
                .collect(),
        }
    }
}

/// Exact-span correspondence between two clusterings.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MentionAlignment {
    pub matched: Vec<MentionKey>,
    pub gold_only: Vec<MentionKey>,
    pub system_only: Vec<MentionKey>,
}

pub fn align_mentions(gold: &Clustering, system: &Clustering) -> MentionAlignment {
    let gold_set: HashSet<MentionKey> = gold.mentions().collect();
    let system_set: HashSet<MentionKey> = system.mentions().collect();
    let mut alignment = MentionAlignment::default();
    for m in gold.mentions() {
        if system_set.contains(&m) {
            alignment.matched.push(m);
        } else {
            alignment.gold_only.push(m);
        }
    }
    alignment.system_only = system.mentions().filter(|m| !gold_set.contains(m)).collect();
    alignment.matched.sort_unstable();
    alignment.gold_only.sort_unstable();
    alignment.system_only.sort_unstable();
    alignment
}

/// Precision, recall and F1, all in `[0, 100]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    fn new(precision: f64, recall: f64) -> Self {
        Prf {
            precision,
            recall,
            f1: harmonic_mean(precision, recall),
        }
    }
}

/// Raw numerators and denominators for one precision/recall pair.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PrCounts {
    pub recall_num: f64,
    pub recall_den: f64,
    pub precision_num: f64,
    pub precision_den: f64,
}

impl PrCounts {
    fn from_sides(recall: (f64, f64), precision: (f64, f64)) -> Self {
        PrCounts {
            recall_num: recall.0,
            recall_den: recall.1,
            precision_num: precision.0,
            precision_den: precision.1,
        }
    }

    fn score(&self, all_empty: bool) -> Prf {
        Prf::new(
            ratio(self.precision_num, self.precision_den, all_empty),
            ratio(self.recall_num, self.recall_den, all_empty),
        )
    }
}

impl AddAssign for PrCounts {
    fn add_assign(&mut self, rhs: Self) {
        self.recall_num += rhs.recall_num;
        self.recall_den += rhs.recall_den;
        self.precision_num += rhs.precision_num;
        self.precision_den += rhs.precision_den;
    }
}

fn ratio(num: f64, den: f64, all_empty: bool) -> f64 {
    if den == 0.0 {
        if all_empty {
            100.0
        } else {
            0.0
        }
    } else {
        100.0 * num / den
    }
}

/// Link counts for BLANC.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlancCounts {
    pub coref_common: usize,
    pub gold_coref: usize,
    pub system_coref: usize,
    pub non_coref_common: usize,
    pub gold_non_coref: usize,
    pub system_non_coref: usize,
}

impl AddAssign for BlancCounts {
    fn add_assign(&mut self, rhs: Self) {
        self.coref_common += rhs.coref_common;
        self.gold_coref += rhs.gold_coref;
        self.system_coref += rhs.system_coref;
        self.non_coref_common += rhs.non_coref_common;
        self.gold_non_coref += rhs.gold_non_coref;
        self.system_non_coref += rhs.system_non_coref;
    }
}

impl BlancCounts {
    fn score(&self, all_empty: bool) -> Prf {
        let link_prf = |common: usize, gold: usize, system: usize| {
            Prf::new(
                ratio(common as f64, system as f64, false),
                ratio(common as f64, gold as f64, false),
            )
        };
        let coref_defined = self.gold_coref + self.system_coref > 0;
        let non_defined = self.gold_non_coref + self.system_non_coref > 0;
        let coref = link_prf(self.coref_common, self.gold_coref, self.system_coref);
        let non = link_prf(self.non_coref_common, self.gold_non_coref, self.system_non_coref);
        match (coref_defined, non_defined) {
            (true, true) => Prf {
                precision: (coref.precision + non.precision) / 2.0,
                recall: (coref.recall + non.recall) / 2.0,
                f1: (coref.f1 + non.f1) / 2.0,
            },
            (true, false) => coref,
            (false, true) => non,
            (false, false) => {
                let v = ratio(0.0, 0.0, all_empty);
                Prf {
                    precision: v,
                    recall: v,
                    f1: v,
                }
            }
        }
    }
}

/// Everything needed to compute [`MetricScores`]; sums over sentences.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricCounts {
    pub muc: PrCounts,
    pub b_cubed: PrCounts,
    pub ceaf_m: PrCounts,
    pub ceaf_e: PrCounts,
    pub lea: PrCounts,
    pub blanc: BlancCounts,
    pub gold_mentions: usize,
    pub system_mentions: usize,
}

impl AddAssign for MetricCounts {
    fn add_assign(&mut self, rhs: Self) {
        self.muc += rhs.muc;
        self.b_cubed += rhs.b_cubed;
        self.ceaf_m += rhs.ceaf_m;
        self.ceaf_e += rhs.ceaf_e;
        self.lea += rhs.lea;
        self.blanc += rhs.blanc;
        self.gold_mentions += rhs.gold_mentions;
        self.system_mentions += rhs.system_mentions;
    }
}

impl MetricCounts {
    pub fn compute(gold: &Clustering, system: &Clustering) -> Self {
        MetricCounts {
            muc: muc_counts(gold, system),
            b_cubed: b_cubed_counts(gold, system),
            ceaf_m: ceaf_counts(gold, system, CeafSimilarity::Mention),
            ceaf_e: ceaf_counts(gold, system, CeafSimilarity::Entity),
            lea: lea_counts(gold, system),
            blanc: blanc_counts(gold, system),
            gold_mentions: gold.mention_count(),
            system_mentions: system.mention_count(),
        }
    }

    fn all_empty(&self) -> bool {
        self.gold_mentions == 0 && self.system_mentions == 0
    }

    pub fn scores(&self) -> MetricScores {
        let all_empty = self.all_empty();
        let muc = self.muc.score(all_empty);
        let b_cubed = self.b_cubed.score(all_empty);
        let ceaf_e = self.ceaf_e.score(all_empty);
        MetricScores {
            muc,
            b_cubed,
            ceaf_m: self.ceaf_m.score(all_empty),
            ceaf_e,
            blanc: self.blanc.score(all_empty),
            lea: self.lea.score(all_empty),
            conll_avg: (muc.f1 + b_cubed.f1 + ceaf_e.f1) / 3.0,
        }
    }
}

/// The full metric suite. `conll_avg` is the mean of the MUC, B³ and
/// CEAF_e F1 scores.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricScores {
    pub muc: Prf,
    pub b_cubed: Prf,
    pub ceaf_m: Prf,
    pub ceaf_e: Prf,
    pub blanc: Prf,
    pub lea: Prf,
    pub conll_avg: f64,
}

fn muc_side(key: &Clustering, response: &Clustering) -> (f64, f64) {
    let response_of = response.entity_of();
    let mut num = 0;
    let mut den = 0;
    for entity in key.entities() {
        if entity.len() < 2 {
            continue;
        }
        // Each twinless mention is its own partition.
        let mut partitions = HashSet::new();
        let mut twinless = 0;
        for m in entity {
            match response_of.get(m) {
                Some(r) => {
                    partitions.insert(*r);
                }
                None => twinless += 1,
            }
        }
        num += entity.len() - (partitions.len() + twinless);
        den += entity.len() - 1;
    }
    (num as f64, den as f64)
}

fn muc_counts(gold: &Clustering, system: &Clustering) -> PrCounts {
    PrCounts::from_sides(muc_side(gold, system), muc_side(system, gold))
}

fn b_cubed_side(key: &Clustering, response: &Clustering) -> (f64, f64) {
    let response_of = response.entity_of();
    let mut num = 0.0;
    let mut den = 0.0;
    for entity in key.entities() {
        let mut overlaps: HashMap<usize, usize> = HashMap::new();
        for m in entity {
            if let Some(r) = response_of.get(m) {
                *overlaps.entry(*r).or_default() += 1;
            }
        }
        // Each mention m of this entity contributes |K ∩ R(m)| / |K|.
        let size = entity.len() as f64;
        num += overlaps.values().map(|&c| (c * c) as f64).sum::<f64>() / size;
        den += size;
    }
    (num, den)
}

fn b_cubed_counts(gold: &Clustering, system: &Clustering) -> PrCounts {
    PrCounts::from_sides(b_cubed_side(gold, system), b_cubed_side(system, gold))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CeafSimilarity {
    /// φ_m(K, R) = |K ∩ R|
    Mention,
    /// φ_4(K, R) = 2|K ∩ R| / (|K| + |R|)
    Entity,
}

impl CeafSimilarity {
    fn similarity(self, overlap: usize, key_len: usize, response_len: usize) -> f64 {
        match self {
            CeafSimilarity::Mention => overlap as f64,
            CeafSimilarity::Entity => 2.0 * overlap as f64 / (key_len + response_len) as f64,
        }
    }

    fn self_similarity(self, len: usize) -> f64 {
        self.similarity(len, len, len)
    }
}

fn ceaf_counts(gold: &Clustering, system: &Clustering, phi: CeafSimilarity) -> PrCounts {
    let system_of = system.entity_of();
    let mut weights = vec![vec![0.0; system.entities().len()]; gold.entities().len()];
    for (g, entity) in gold.entities().iter().enumerate() {
        let mut overlaps: HashMap<usize, usize> = HashMap::new();
        for m in entity {
            if let Some(s) = system_of.get(m) {
                *overlaps.entry(*s).or_default() += 1;
            }
        }
        for (s, overlap) in overlaps {
            weights[g][s] = phi.similarity(overlap, entity.len(), system.entities()[s].len());
        }
    }
    let total = optimal_assignment(&weights).total;
    let gold_self: f64 = gold.entities().iter().map(|e| phi.self_similarity(e.len())).sum();
    let system_self: f64 = system.entities().iter().map(|e| phi.self_similarity(e.len())).sum();
    PrCounts::from_sides((total, gold_self), (total, system_self))
}

fn lea_side(key: &Clustering, response: &Clustering) -> (f64, f64) {
    let response_of = response.entity_of();
    let mut num = 0.0;
    let mut den = 0.0;
    for entity in key.entities() {
        let size = entity.len();
        let resolved = if size == 1 {
            // A singleton's self-link is resolved iff it is also a
            // singleton on the response side.
            match response_of.get(&entity[0]) {
                Some(r) if response.entities()[*r].len() == 1 => 1.0,
                _ => 0.0,
            }
        } else {
            let mut per_response: HashMap<usize, usize> = HashMap::new();
            for m in entity {
                if let Some(r) = response_of.get(m) {
                    *per_response.entry(*r).or_default() += 1;
                }
            }
            let common: usize = per_response.values().map(|&c| c * (c - 1) / 2).sum();
            common as f64 / (size * (size - 1) / 2) as f64
        };
        num += size as f64 * resolved;
        den += size as f64;
    }
    (num, den)
}

fn lea_counts(gold: &Clustering, system: &Clustering) -> PrCounts {
    PrCounts::from_sides(lea_side(gold, system), lea_side(system, gold))
}

type LinkSet = HashSet<(MentionKey, MentionKey)>;

fn links(clustering: &Clustering) -> (LinkSet, LinkSet) {
    let mut mentions: Vec<(MentionKey, usize)> = clustering
        .entities()
        .iter()
        .enumerate()
        .flat_map(|(i, e)| e.iter().map(move |m| (*m, i)))
        .collect();
    mentions.sort_unstable();
    let mut coref = HashSet::new();
    let mut non_coref = HashSet::new();
    for (i, (a, ea)) in mentions.iter().enumerate() {
        for (b, eb) in &mentions[i + 1..] {
            if ea == eb {
                coref.insert((*a, *b));
            } else {
                non_coref.insert((*a, *b));
            }
        }
    }
    (coref, non_coref)
}

fn blanc_counts(gold: &Clustering, system: &Clustering) -> BlancCounts {
    let (gold_coref, gold_non) = links(gold);
    let (system_coref, system_non) = links(system);
    BlancCounts {
        coref_common: gold_coref.intersection(&system_coref).count(),
        gold_coref: gold_coref.len(),
        system_coref: system_coref.len(),
        non_coref_common: gold_non.intersection(&system_non).count(),
        gold_non_coref: gold_non.len(),
        system_non_coref: system_non.len(),
    }
}

fn single(counts: PrCounts, gold: &Clustering, system: &Clustering) -> Prf {
    counts.score(gold.mention_count() == 0 && system.mention_count() == 0)
}

pub fn muc(gold: &Clustering, system: &Clustering) -> Prf {
    single(muc_counts(gold, system), gold, system)
}

pub fn b_cubed(gold: &Clustering, system: &Clustering) -> Prf {
    single(b_cubed_counts(gold, system), gold, system)
}

pub fn ceaf(gold: &Clustering, system: &Clustering, similarity: CeafSimilarity) -> Prf {
    single(ceaf_counts(gold, system, similarity), gold, system)
}

pub fn lea(gold: &Clustering, system: &Clustering) -> Prf {
    single(lea_counts(gold, system), gold, system)
}

pub fn blanc(gold: &Clustering, system: &Clustering) -> Prf {
    blanc_counts(gold, system).score(gold.mention_count() == 0 && system.mention_count() == 0)
}

pub fn score_all(gold: &Clustering, system: &Clustering) -> MetricScores {
    MetricCounts::compute(gold, system).scores()
}

/// Micro-averaged scores over independent units (sentences).
pub fn score_units<'a, I>(units: I) -> MetricScores
where
    I: IntoIterator<Item = (&'a Clustering, &'a Clustering)>,
{
    let mut total = MetricCounts::default();
    for (gold, system) in units {
        total += MetricCounts::compute(gold, system);
    }
    total.scores()
}

/// The standard suite over scored sentence pairs. Duplicate spans are
/// already simplified by [`SentencePair`]; a prediction that fails the
/// length gate contributes an empty system clustering.
pub fn score_pairs(pairs: &[SentencePair], gate: LengthGateMode) -> MetricScores {
    let clusterings: Vec<(Clustering, Clustering)> = pairs
        .iter()
        .map(|p| {
            let system = if p.gate_passed(gate) {
                Clustering::from_sentence(&p.prediction)
            } else {
                Clustering::empty()
            };
            (Clustering::from_sentence(&p.gold), system)
        })
        .collect();
    score_units(clusterings.iter().map(|(g, s)| (g, s)))
}
