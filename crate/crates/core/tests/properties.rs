mod common;

use litcoref::analysis::{
    classify, detect_hallucinated_tail, extract_replacements, tokenize, AnalysisConfig, RepetitionThresholds, TailCheck,
};
use litcoref::dataset::{group_records, split, Split, SplitConfig, WithheldNovels, MIN_TEST_PER_NOVEL};
use litcoref::metrics::{score_all, score_units, Clustering, MetricScores, Prf};
use litcoref::records::CorpusRecord;
use litcoref::strict::{edit_distance, score_sentence, LengthGateMode, SentencePair};
use litcoref::{parse_lenient, parse_strict, serialize, simplify_duplicates, strip, AnnotatedSentence};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::*;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn columns(m: &MetricScores) -> [Prf; 6] {
    [m.muc, m.b_cubed, m.ceaf_m, m.ceaf_e, m.blanc, m.lea]
}

fn prf_close(a: Prf, b: Prf) -> bool {
    close((a.precision, a.recall, a.f1), (b.precision, b.recall, b.f1))
}

fn sentence_pair(gold: &AnnotatedSentence, prediction: &str) -> SentencePair {
    SentencePair::new(gold.clean_text(), serialize(gold), prediction).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn parse_inverts_serialize(seed in any::<u64>()) {
        let s = random_sentence(&mut rng(seed));
        let text = serialize(&s);
        prop_assert_eq!(parse_strict(&text).unwrap(), s.clone());
        prop_assert_eq!(strip(&text), s.clean_text());
        let brackets = text.chars().filter(|c| *c == '[' || *c == ']').count();
        prop_assert_eq!(brackets, 2 * s.mentions().len());
    }

    #[test]
    fn lenient_agrees_with_strict_on_valid_markup(seed in any::<u64>()) {
        let text = serialize(&random_sentence(&mut rng(seed)));
        let (lenient, diagnostics) = parse_lenient(&text);
        prop_assert!(diagnostics.is_empty(), "{:?}", diagnostics);
        prop_assert_eq!(lenient, parse_strict(&text).unwrap());
    }

    #[test]
    fn strip_is_idempotent(text in "[\\PC\\[\\]: 1-3]{0,40}") {
        let once = strip(&text);
        prop_assert_eq!(strip(&once), once.clone());
        let (_, diagnostics) = parse_lenient(&text);
        if diagnostics.is_empty() {
            prop_assert!(parse_strict(&text).is_ok() || text.is_empty());
        }
    }

    #[test]
    fn lenient_never_panics_and_keeps_offsets_valid(text in "[a-c\\[\\]: 1-3]{0,40}") {
        let (s, _) = parse_lenient(&text);
        let len = s.char_len();
        for m in s.mentions() {
            prop_assert!(m.start < m.end && m.end <= len);
        }
        if len > 0 {
            prop_assert_eq!(parse_strict(&serialize(&s)).unwrap(), s);
        }
    }

    #[test]
    fn simplification_leaves_no_duplicates(seed in any::<u64>()) {
        let s = random_sentence(&mut rng(seed));
        let simple = simplify_duplicates(&s);
        prop_assert!(!simple.has_duplicate_spans());
        prop_assert_eq!(simple.clean_text(), s.clean_text());
        prop_assert!(simple.mentions().iter().all(|m| s.mentions().contains(m)));
    }

    #[test]
    fn mention_order_does_not_matter(seed in any::<u64>()) {
        let mut r = rng(seed);
        let s = simplify_duplicates(&random_sentence(&mut r));
        let mut shuffled = s.mentions().to_vec();
        shuffled.shuffle(&mut r);
        let rebuilt = AnnotatedSentence::new(s.clean_text(), shuffled).unwrap();
        prop_assert_eq!(&rebuilt, &s);

        let g = random_clustering(&mut r, 6, 12, 14);
        let sys = random_clustering(&mut r, 6, 12, 14);
        let mut entities: Vec<_> = sys.entities().to_vec();
        entities.shuffle(&mut r);
        for e in &mut entities {
            e.reverse();
        }
        let permuted = Clustering::new(entities).unwrap();
        let (a, b) = (score_all(&g, &sys), score_all(&g, &permuted));
        for (x, y) in columns(&a).into_iter().zip(columns(&b)) {
            prop_assert!(prf_close(x, y));
        }
    }

    #[test]
    fn strict_counts_are_consistent(seed in any::<u64>(), gate in prop_oneof![Just(LengthGateMode::Char), Just(LengthGateMode::Token)]) {
        let mut r = rng(seed);
        let text = random_text(&mut r).trim().to_string();
        let gold = random_annotation(&mut r, &text);
        let other = random_annotation(&mut r, gold.clean_text());
        let pair = sentence_pair(&gold, &serialize(&other));
        let c = score_sentence(&pair, gate);
        prop_assert!(c.coref_tp <= c.entity_tp);
        prop_assert_eq!(c.edit_distance, 0);
        let gold_mentions = simplify_duplicates(&gold).mentions().len();
        let predicted = simplify_duplicates(&other).mentions().len();
        prop_assert_eq!(c.entity_tp + c.entity_fn, gold_mentions);
        prop_assert_eq!(c.entity_tp + c.entity_fp, predicted);
        prop_assert_eq!(c.coref_tp + c.coref_fn, gold_mentions);

        let perfect = score_sentence(&sentence_pair(&gold, &serialize(&gold)), gate);
        prop_assert!(perfect.exact_match);
        prop_assert_eq!(perfect.entity_fp + perfect.entity_fn + perfect.coref_fp + perfect.coref_fn, 0);
    }

    #[test]
    fn edit_distance_is_a_metric(a in "[ab\u{e9}c]{0,7}", b in "[ab\u{e9}c]{0,7}", c in "[ab\u{e9}c]{0,7}") {
        let (ac, bc): (Vec<char>, Vec<char>) = (a.chars().collect(), b.chars().collect());
        let d = edit_distance(&a, &b);
        prop_assert_eq!(d, edit_distance_recursive(&ac, &bc));
        prop_assert_eq!(d, edit_distance(&b, &a));
        prop_assert_eq!(d == 0, a == b);
        prop_assert!(edit_distance(&a, &c) <= d + edit_distance(&b, &c));
        prop_assert!(d <= ac.len().max(bc.len()));
    }

    #[test]
    fn precision_recall_duality(seed in any::<u64>()) {
        let mut r = rng(seed);
        let g = random_clustering(&mut r, 6, 12, 14);
        let s = random_clustering(&mut r, 6, 12, 14);
        let (gs, sg) = (score_all(&g, &s), score_all(&s, &g));
        for (x, y) in columns(&gs).into_iter().zip(columns(&sg)) {
            prop_assert!((x.precision - y.recall).abs() < TOLERANCE);
            prop_assert!((x.recall - y.precision).abs() < TOLERANCE);
            prop_assert!((x.f1 - y.f1).abs() < TOLERANCE);
        }
        for x in columns(&gs) {
            for v in [x.precision, x.recall, x.f1] {
                prop_assert!((0.0..=100.0 + TOLERANCE).contains(&v));
            }
            if x.precision == 0.0 && x.recall == 0.0 {
                prop_assert_eq!(x.f1, 0.0);
            }
        }
        let (m, b, e) = (gs.muc.f1, gs.b_cubed.f1, gs.ceaf_e.f1);
        prop_assert!((gs.conll_avg - (m + b + e) / 3.0).abs() < TOLERANCE);
    }

    #[test]
    fn shared_singleton_never_hurts(seed in any::<u64>()) {
        let mut r = rng(seed);
        let g = random_clustering(&mut r, 6, 12, 14);
        let s = random_clustering(&mut r, 6, 12, 14);
        let extra = vec![(1000, 1001)];
        let with = |c: &Clustering| {
            let mut e = c.entities().to_vec();
            e.push(extra.clone());
            Clustering::new(e).unwrap()
        };
        let before = score_all(&g, &s);
        let after = score_all(&with(&g), &with(&s));
        for (x, y) in [(before.b_cubed, after.b_cubed), (before.ceaf_m, after.ceaf_m), (before.ceaf_e, after.ceaf_e), (before.lea, after.lea)] {
            prop_assert!(y.f1 + TOLERANCE >= x.f1, "{:?} -> {:?}", x, y);
        }
        if g.mention_count() + s.mention_count() > 0 {
            prop_assert!((before.muc.f1 - after.muc.f1).abs() < TOLERANCE);
        }
    }

    #[test]
    fn sentence_units_equal_one_bundled_unit(seed in any::<u64>(), n in 1usize..5) {
        let mut r = rng(seed);
        let units: Vec<(Clustering, Clustering)> = (0..n)
            .map(|_| (random_clustering(&mut r, 4, 8, 10), random_clustering(&mut r, 4, 8, 10)))
            .collect();
        let micro = score_units(units.iter().map(|(g, s)| (g, s)));
        let bundle = |pick: fn(&(Clustering, Clustering)) -> &Clustering| {
            let entities = units
                .iter()
                .enumerate()
                .flat_map(|(i, u)| pick(u).shifted(1000 * i).entities().to_vec())
                .collect();
            Clustering::new(entities).unwrap()
        };
        let whole = score_all(&bundle(|u| &u.0), &bundle(|u| &u.1));
        for (x, y) in [
            (micro.muc, whole.muc),
            (micro.b_cubed, whole.b_cubed),
            (micro.ceaf_m, whole.ceaf_m),
            (micro.ceaf_e, whole.ceaf_e),
            (micro.lea, whole.lea),
        ] {
            prop_assert!(prf_close(x, y), "{:?} vs {:?}", x, y);
        }
    }

    #[test]
    fn replacements_track_token_differences(a in "[a-c]{1,3}( [a-c]{1,3}){0,5}\\.?", swaps in proptest::collection::vec(any::<bool>(), 6)) {
        let tokens = tokenize(&a);
        let changed: Vec<String> = tokens
            .iter()
            .zip(swaps.iter().cycle())
            .map(|(t, s)| if *s && *t != "." { format!("{t}x") } else { t.to_string() })
            .collect();
        let b = changed.join(" ");
        let reps = extract_replacements(&a, &b).unwrap();
        prop_assert!(reps.len() <= tokens.len());
        prop_assert_eq!(reps.is_empty(), tokenize(&a) == tokenize(&b));
        for rep in &reps {
            prop_assert_ne!(&rep.original, &rep.substituted);
        }
    }

    #[test]
    fn tail_never_fires_on_identical_text(a in "[a-c .]{0,20}") {
        prop_assert!(!matches!(detect_hallucinated_tail(&a, &a, RepetitionThresholds::default()), TailCheck::Tail(_)));
    }

    #[test]
    fn classify_is_total_and_deterministic(seed in any::<u64>(), junk in "[a-c\\[\\]: 1.]{0,30}") {
        let mut r = rng(seed);
        let text = random_text(&mut r).trim().to_string();
        let gold = random_annotation(&mut r, &text);
        let pair = sentence_pair(&gold, &junk);
        let config = AnalysisConfig::default();
        prop_assert_eq!(classify(&pair, &config), classify(&pair, &config));
    }

    #[test]
    fn split_partitions_every_sentence(seed in any::<u64>(), sizes in proptest::collection::vec(20usize..70, 2..9), withhold in 0usize..3) {
        let mut records = Vec::new();
        for (n, size) in sizes.iter().enumerate() {
            for s in 0..*size {
                records.push(CorpusRecord {
                    novel_id: format!("n{n}"),
                    sent_id: s as u64 * 3,
                    annotated: format!("[Someone: 1] said line {s}."),
                });
            }
        }
        let config = SplitConfig {
            withheld: WithheldNovels::Largest(withhold),
            train_per_novel: 10,
            val_per_novel: 2,
            min_sentences: 30,
            seed,
        };
        let novels = group_records(records);
        let eligible: Vec<usize> = sizes.iter().copied().filter(|s| *s >= 30).collect();
        let out = match split(&novels, &config) {
            Ok(out) => out,
            Err(_) => {
                prop_assert!(eligible.len() < withhold + 1);
                return Ok(());
            }
        };
        let total: usize = sizes.iter().sum();
        let c = out.manifest.counts;
        prop_assert_eq!(c.train + c.val + c.test + c.excluded, total);
        prop_assert_eq!(out.manifest.assignments.len(), total);
        prop_assert_eq!(c.excluded, sizes.iter().filter(|s| **s < 30).sum::<usize>());
        let sampled = eligible.len() - withhold;
        prop_assert_eq!(c.train, 10 * sampled);
        prop_assert_eq!(c.val, 2 * sampled);
        prop_assert!(c.test >= MIN_TEST_PER_NOVEL * sampled);
        prop_assert_eq!((out.train.len(), out.val.len(), out.test.len()), (c.train, c.val, c.test));
        prop_assert!(out.manifest.verify_hash());
        let mut keys: Vec<_> = out.manifest.assignments.iter().map(|a| (a.novel_id.clone(), a.sent_id)).collect();
        keys.sort();
        keys.dedup();
        prop_assert_eq!(keys.len(), total);
        for a in &out.manifest.assignments {
            prop_assert_eq!(a.split.is_none(), a.reason == litcoref::dataset::Reason::ExcludedSmallNovel);
            if a.split == Some(Split::Train) {
                prop_assert!(out.train.iter().any(|p| p.novel_id == a.novel_id && p.sent_id == a.sent_id));
            }
        }
        let again = split(&novels, &config).unwrap();
        prop_assert_eq!(again.manifest.to_json(), out.manifest.to_json());
    }
}
