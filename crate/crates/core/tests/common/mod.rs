//! Brute-force reference implementations and random generators shared by
//! the integration tests.
#![allow(dead_code)]

use std::collections::HashMap;

use litcoref::metrics::{Clustering, MentionKey};
use litcoref::{AnnotatedSentence, Mention};
use rand::seq::SliceRandom;
use rand::Rng;

pub const TOLERANCE: f64 = 1e-9;

/// (precision, recall, f1) in percent.
pub type Triple = (f64, f64, f64);

fn pct(num: f64, den: f64, all_empty: bool) -> f64 {
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

fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

fn triple(p: f64, r: f64) -> Triple {
    (p, r, f1(p, r))
}

pub fn close(a: Triple, b: Triple) -> bool {
    (a.0 - b.0).abs() < TOLERANCE && (a.1 - b.1).abs() < TOLERANCE && (a.2 - b.2).abs() < TOLERANCE
}

fn label_of(c: &[Vec<MentionKey>]) -> HashMap<MentionKey, usize> {
    let mut map = HashMap::new();
    for (i, e) in c.iter().enumerate() {
        for m in e {
            map.insert(*m, i);
        }
    }
    map
}

fn all_empty(g: &[Vec<MentionKey>], s: &[Vec<MentionKey>]) -> bool {
    g.iter().all(Vec::is_empty) && s.iter().all(Vec::is_empty)
}

fn find(parent: &mut [usize], x: usize) -> usize {
    let mut root = x;
    while parent[root] != root {
        root = parent[root];
    }
    parent[x] = root;
    root
}

/// Components of each key entity when its mentions are joined whenever the
/// response puts them together.
fn muc_side(key: &[Vec<MentionKey>], response: &[Vec<MentionKey>]) -> (f64, f64) {
    let response_of = label_of(response);
    let (mut num, mut den) = (0.0, 0.0);
    for entity in key {
        let n = entity.len();
        let mut parent: Vec<usize> = (0..n).collect();
        for i in 0..n {
            for j in i + 1..n {
                let same = matches!(
                    (response_of.get(&entity[i]), response_of.get(&entity[j])),
                    (Some(a), Some(b)) if a == b
                );
                if same {
                    let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                    parent[ri] = rj;
                }
            }
        }
        let components = (0..n).filter(|&i| find(&mut parent, i) == i).count();
        num += (n - components) as f64;
        den += (n - 1) as f64;
    }
    (num, den)
}

pub fn muc(g: &[Vec<MentionKey>], s: &[Vec<MentionKey>]) -> Triple {
    let e = all_empty(g, s);
    let (rn, rd) = muc_side(g, s);
    let (pn, pd) = muc_side(s, g);
    triple(pct(pn, pd, e), pct(rn, rd, e))
}

fn b_cubed_side(key: &[Vec<MentionKey>], response: &[Vec<MentionKey>]) -> (f64, f64) {
    let (mut num, mut den) = (0.0, 0.0);
    for entity in key {
        for m in entity {
            let overlap = response
                .iter()
                .find(|r| r.contains(m))
                .map_or(0, |r| entity.iter().filter(|x| r.contains(x)).count());
            num += overlap as f64 / entity.len() as f64;
            den += 1.0;
        }
    }
    (num, den)
}

pub fn b_cubed(g: &[Vec<MentionKey>], s: &[Vec<MentionKey>]) -> Triple {
    let e = all_empty(g, s);
    let (rn, rd) = b_cubed_side(g, s);
    let (pn, pd) = b_cubed_side(s, g);
    triple(pct(pn, pd, e), pct(rn, rd, e))
}

fn overlap(a: &[MentionKey], b: &[MentionKey]) -> usize {
    a.iter().filter(|m| b.contains(m)).count()
}

fn phi(entity_based: bool, a: &[MentionKey], b: &[MentionKey]) -> f64 {
    let o = overlap(a, b) as f64;
    if entity_based {
        2.0 * o / (a.len() + b.len()) as f64
    } else {
        o
    }
}

/// Best total similarity over every partial injection of gold entities into
/// system entities.
fn best_alignment(g: &[Vec<MentionKey>], s: &[Vec<MentionKey>], entity_based: bool) -> f64 {
    fn go(g: &[Vec<MentionKey>], s: &[Vec<MentionKey>], e: bool, row: usize, used: &mut Vec<bool>) -> f64 {
        if row == g.len() {
            return 0.0;
        }
        let mut best = go(g, s, e, row + 1, used);
        for j in 0..s.len() {
            if !used[j] {
                used[j] = true;
                best = best.max(phi(e, &g[row], &s[j]) + go(g, s, e, row + 1, used));
                used[j] = false;
            }
        }
        best
    }
    go(g, s, entity_based, 0, &mut vec![false; s.len()])
}

pub fn ceaf(g: &[Vec<MentionKey>], s: &[Vec<MentionKey>], entity_based: bool) -> Triple {
    let e = all_empty(g, s);
    let total = best_alignment(g, s, entity_based);
    let gold_self: f64 = g.iter().map(|k| phi(entity_based, k, k)).sum();
    let system_self: f64 = s.iter().map(|k| phi(entity_based, k, k)).sum();
    triple(pct(total, system_self, e), pct(total, gold_self, e))
}

fn lea_side(key: &[Vec<MentionKey>], response: &[Vec<MentionKey>]) -> (f64, f64) {
    let (mut num, mut den) = (0.0, 0.0);
    for entity in key {
        let n = entity.len();
        let resolved = if n == 1 {
            if response.iter().any(|r| r.len() == 1 && r[0] == entity[0]) {
                1.0
            } else {
                0.0
            }
        } else {
            let mut links = 0;
            let mut hit = 0;
            for i in 0..n {
                for j in i + 1..n {
                    links += 1;
                    if response
                        .iter()
                        .any(|r| r.contains(&entity[i]) && r.contains(&entity[j]))
                    {
                        hit += 1;
                    }
                }
            }
            hit as f64 / links as f64
        };
        num += n as f64 * resolved;
        den += n as f64;
    }
    (num, den)
}

pub fn lea(g: &[Vec<MentionKey>], s: &[Vec<MentionKey>]) -> Triple {
    let e = all_empty(g, s);
    let (rn, rd) = lea_side(g, s);
    let (pn, pd) = lea_side(s, g);
    triple(pct(pn, pd, e), pct(rn, rd, e))
}

pub fn blanc(g: &[Vec<MentionKey>], s: &[Vec<MentionKey>]) -> Triple {
    let gl = label_of(g);
    let sl = label_of(s);
    let mut universe: Vec<MentionKey> = gl.keys().chain(sl.keys()).copied().collect();
    universe.sort_unstable();
    universe.dedup();

    // Counts for (coref, non-coref): common, gold, system.
    let mut c = [0usize; 3];
    let mut n = [0usize; 3];
    for i in 0..universe.len() {
        for j in i + 1..universe.len() {
            let (a, b) = (universe[i], universe[j]);
            let gold_link = match (gl.get(&a), gl.get(&b)) {
                (Some(x), Some(y)) => Some(x == y),
                _ => None,
            };
            let system_link = match (sl.get(&a), sl.get(&b)) {
                (Some(x), Some(y)) => Some(x == y),
                _ => None,
            };
            match gold_link {
                Some(true) => c[1] += 1,
                Some(false) => n[1] += 1,
                None => {}
            }
            match system_link {
                Some(true) => c[2] += 1,
                Some(false) => n[2] += 1,
                None => {}
            }
            match (gold_link, system_link) {
                (Some(true), Some(true)) => c[0] += 1,
                (Some(false), Some(false)) => n[0] += 1,
                _ => {}
            }
        }
    }
    let link = |k: [usize; 3]| {
        triple(
            pct(k[0] as f64, k[2] as f64, false),
            pct(k[0] as f64, k[1] as f64, false),
        )
    };
    let coref_defined = c[1] + c[2] > 0;
    let non_defined = n[1] + n[2] > 0;
    match (coref_defined, non_defined) {
        (true, true) => {
            let (a, b) = (link(c), link(n));
            ((a.0 + b.0) / 2.0, (a.1 + b.1) / 2.0, (a.2 + b.2) / 2.0)
        }
        (true, false) => link(c),
        (false, true) => link(n),
        (false, false) => {
            let v = pct(0.0, 0.0, all_empty(g, s));
            (v, v, v)
        }
    }
}

/// Plain recursive Levenshtein distance.
pub fn edit_distance_recursive(a: &[char], b: &[char]) -> usize {
    match (a.split_last(), b.split_last()) {
        (None, _) => b.len(),
        (_, None) => a.len(),
        (Some((x, ra)), Some((y, rb))) => (edit_distance_recursive(ra, b) + 1)
            .min(edit_distance_recursive(a, rb) + 1)
            .min(edit_distance_recursive(ra, rb) + usize::from(x != y)),
    }
}

pub fn random_clustering<R: Rng>(rng: &mut R, max_entities: usize, max_mentions: usize, universe: usize) -> Clustering {
    let mut spans: Vec<MentionKey> = (0..universe).map(|i| (2 * i, 2 * i + 1)).collect();
    spans.shuffle(rng);
    let mentions = rng.gen_range(0..=max_mentions.min(universe));
    let entities = rng.gen_range(1..=max_entities);
    let mut groups = vec![Vec::new(); entities];
    for m in spans.into_iter().take(mentions) {
        groups[rng.gen_range(0..entities)].push(m);
    }
    groups.retain(|g| !g.is_empty());
    Clustering::new(groups).expect("disjoint by construction")
}

/// Like [`random_clustering`] but guaranteed to contain an entity with at
/// least two mentions.
pub fn random_linked_clustering<R: Rng>(rng: &mut R) -> Clustering {
    loop {
        let c = random_clustering(rng, 6, 12, 14);
        if c.entities().iter().any(|e| e.len() > 1) {
            return c;
        }
    }
}

const WORDS: &[&str] = &[
    "Carl",
    "his",
    "hands",
    "the",
    "lady",
    "room",
    "Mr.",
    "niño",
    "Zoë",
    "café",
    "naïve",
    "a",
    "it",
    "said,",
    "\"Go\"",
    "x: 1",
    ":",
    "2",
    "'s",
    "(aside)",
    "là",
    "the study",
    "…",
];
const GLUE: &[&str] = &[" ", " ", " ", ", ", "; ", " - ", "", ": "];

pub fn random_text<R: Rng>(rng: &mut R) -> String {
    let n = rng.gen_range(1..=10);
    let mut text = String::new();
    for i in 0..n {
        if i > 0 {
            text.push_str(GLUE.choose(rng).unwrap());
        }
        text.push_str(WORDS.choose(rng).unwrap());
    }
    if rng.gen_bool(0.1) {
        text.insert(0, ' ');
    }
    if rng.gen_bool(0.5) {
        text.push('.');
    }
    text
}

/// Random well-nested mentions over `[start, end)`, outer mentions first.
/// Nested mentions may repeat their parent's span.
pub fn random_mentions<R: Rng>(rng: &mut R, start: usize, end: usize, depth: usize, out: &mut Vec<Mention>) {
    let mut pos = start;
    while pos < end {
        if rng.gen_bool(0.35) {
            let len = rng.gen_range(1..=(end - pos).min(14));
            out.push(Mention::new(pos, pos + len, rng.gen_range(1..=5)));
            if depth < 3 && rng.gen_bool(0.45) {
                random_mentions(rng, pos, pos + len, depth + 1, out);
            }
            pos += len;
        } else {
            pos += rng.gen_range(1..=5);
        }
    }
}

pub fn random_annotation<R: Rng>(rng: &mut R, text: &str) -> AnnotatedSentence {
    let mut mentions = Vec::new();
    random_mentions(rng, 0, text.chars().count(), 0, &mut mentions);
    AnnotatedSentence::new(text, mentions).expect("well nested by construction")
}

pub fn random_sentence<R: Rng>(rng: &mut R) -> AnnotatedSentence {
    let text = random_text(rng);
    random_annotation(rng, &text)
}
