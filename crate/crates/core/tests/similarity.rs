mod common;

use common::levenshtein_oracle;
use kgen::resolver::{
    entity_score, label_similarity, levenshtein, predicate_score, similar_entities, similar_predicates,
    SimilarityWeights, Thresholds,
};
use proptest::prelude::*;

fn short_string() -> impl Strategy<Value = String> {
    // A small alphabet makes shared characters, and so non-trivial
    // alignments, likely; a few non-ASCII letters exercise char handling.
    proptest::collection::vec(
        prop::sample::select(vec!['a', 'b', 'c', 'd', 'é', 'ß', ' ', 'A']),
        0..=40,
    )
    .prop_map(|chars| chars.into_iter().collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn levenshtein_matches_full_matrix(a in short_string(), b in short_string()) {
        prop_assert_eq!(levenshtein(&a, &b), levenshtein_oracle(&a, &b));
    }

    #[test]
    fn label_similarity_is_normalized_distance(a in short_string(), b in short_string()) {
        let (fa, fb) = (a.trim().to_lowercase(), b.trim().to_lowercase());
        let longest = fa.chars().count().max(fb.chars().count());
        let expected = if longest == 0 { 1.0 } else { 1.0 - levenshtein_oracle(&fa, &fb) as f64 / longest as f64 };
        let got = label_similarity(&a, &b);
        prop_assert!((got - expected).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&got));
        prop_assert!((got - label_similarity(&b, &a)).abs() < 1e-12);
    }

    #[test]
    fn scores_are_the_weighted_sums(l in 0.0f64..=1.0, d in 0.0f64..=1.0) {
        let w = SimilarityWeights::default();
        prop_assert!((entity_score(l, d, &w) - (0.35 * l + 0.65 * d)).abs() < 1e-12);
        prop_assert!((predicate_score(l, d, &w) - (0.25 * l + 0.75 * d)).abs() < 1e-12);
    }
}

#[test]
fn entity_threshold_truth_table() {
    let th = Thresholds::default();
    let expected = [
        (0.69, [false, false]),
        (0.70, [false, false]),
        (0.71, [false, true]),
        (0.80, [false, true]),
        (0.90, [true, true]),
        (0.91, [true, true]),
    ];
    for (score, row) in expected {
        for (t, want) in [0.25, 0.26].into_iter().zip(row) {
            assert_eq!(similar_entities(score, t, &th), want, "S_e={score} t={t}");
        }
    }
}

#[test]
fn predicate_threshold_is_inclusive() {
    let th = Thresholds::default();
    assert!(!similar_predicates(0.79, &th));
    assert!(similar_predicates(0.8, &th));
    assert!(similar_predicates(0.81, &th));
}

#[test]
fn plural_labels_are_close() {
    assert!((label_similarity("vegetables", "vegetable") - 0.9).abs() < 1e-12);
    assert_eq!(levenshtein("kitten", "sitting"), 3);
}
