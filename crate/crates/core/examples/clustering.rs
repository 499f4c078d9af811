//! Connected components over admitted similarity edges, then the split of
//! an oversized component by descending edge score.
//!
//! ```text
//! cargo run --example clustering
//! ```

use kgen::resolver::{build_clusters, split_oversized, Edge};

const LABELS: [&str; 8] = [
    "car",
    "automobile",
    "motorcar",
    "auto",
    "bike",
    "bicycle",
    "Poetto",
    "Cagliari",
];

fn main() {
    let edge = |i, j, score| Edge { i, j, score };
    let edges = vec![
        edge(0, 1, 0.93),
        edge(1, 2, 0.91),
        edge(0, 3, 0.88),
        edge(3, 4, 0.72),
        edge(4, 5, 0.95),
    ];
    let show = |clusters: &[Vec<usize>]| {
        for c in clusters {
            let names: Vec<&str> = c.iter().map(|&i| LABELS[i]).collect();
            println!("  {names:?}");
        }
    };
    let clusters = build_clusters(LABELS.len(), &edges);
    println!("components:");
    show(&clusters);
    println!("after capping clusters at 3 members:");
    show(&split_oversized(clusters, &edges, 3));
}
