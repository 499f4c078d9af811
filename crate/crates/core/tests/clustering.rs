mod common;

use common::closure_components;
use kgen::resolver::{build_clusters, split_oversized, Edge};
use proptest::prelude::*;

fn instance() -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
    (1usize..=200).prop_flat_map(|n| {
        let max_edges = n * 2;
        (Just(n), proptest::collection::vec((0..n, 0..n), 0..=max_edges))
    })
}

fn edges(pairs: &[(usize, usize)]) -> Vec<Edge> {
    pairs
        .iter()
        .filter(|(i, j)| i != j)
        .enumerate()
        .map(|(k, &(i, j))| Edge {
            i: i.min(j),
            j: i.max(j),
            score: 0.5 + (k % 50) as f64 / 100.0,
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn components_match_transitive_closure((n, pairs) in instance()) {
        let mut got = build_clusters(n, &edges(&pairs));
        for c in &mut got {
            c.sort_unstable();
        }
        got.sort();
        let mut want = closure_components(n, &pairs);
        want.sort();
        prop_assert_eq!(got, want);
    }

    #[test]
    fn splitting_respects_the_cap((n, pairs) in instance(), cap in 2usize..10) {
        let e = edges(&pairs);
        let clusters = build_clusters(n, &e);
        let split = split_oversized(clusters.clone(), &e, cap);
        let mut members: Vec<usize> = split.iter().flatten().copied().collect();
        members.sort_unstable();
        prop_assert_eq!(members, (0..n).collect::<Vec<_>>());
        prop_assert!(split.iter().all(|c| c.len() <= cap));
        // Splitting only refines: each part lies inside one original cluster.
        for part in &split {
            prop_assert!(clusters.iter().any(|c| part.iter().all(|m| c.contains(m))));
        }
    }
}

#[test]
fn isolated_items_are_singletons() {
    assert_eq!(build_clusters(3, &[]), vec![vec![0], vec![1], vec![2]]);
}
