//! Pairwise entity scores for a few labelled descriptions, with the
//! threshold decision for each pair.
//!
//! ```text
//! cargo run --example similarity
//! ```

use kgen::resolver::{
    description_similarity, entity_score, label_similarity, similar_entities, types_similarity, SimilarityWeights,
    StubEmbedder, Thresholds,
};

const ITEMS: &[(&str, &str, &[&str])] = &[
    ("motor car", "A vehicle rented at the port of Cagliari for getting around Sardinia, best for the coast road.", &["Vehicle"]),
    ("automobile", "A vehicle rented at the port of Cagliari for getting around Sardinia, best for the coast road to Villasimius.", &["Vehicle"]),
    ("motorcycle", "A vehicle rented at the port of Cagliari for getting around Sardinia, suited to the mountain passes.", &["Vehicle"]),
    ("motorbike", "A vehicle rented at the port of Cagliari for getting around Sardinia, suited to the mountain passes of the interior.", &["Vehicle"]),
    ("bicycle", "A vehicle rented at the port of Cagliari for getting around Sardinia, enough for the flat promenade of Poetto.", &["Vehicle"]),
    ("bike", "A vehicle rented at the port of Cagliari for getting around Sardinia, enough for the promenade of Poetto.", &["Vehicle"]),
    ("bike", "A vehicle people ride along the promenade of Poetto.", &["Vehicle"]),
    ("vegetables", "Edible plants or their parts.", &["Food"]),
    ("vegetable", "An edible plant or part of a plant.", &["Food"]),
];

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let embedder = StubEmbedder::default();
    let weights = SimilarityWeights::default();
    let thresholds = Thresholds::default();
    println!(
        "{:<10} {:<10} {:>6} {:>6} {:>6} {:>6}  similar",
        "a", "b", "label", "desc", "types", "S_e"
    );
    for (i, (la, da, ta)) in ITEMS.iter().enumerate() {
        for (lb, db, tb) in &ITEMS[i + 1..] {
            let label = label_similarity(la, lb);
            let desc = description_similarity(da, db, &embedder)?.score;
            let types = types_similarity(
                &ta.iter().map(|s| s.to_string()).collect::<Vec<_>>(),
                &tb.iter().map(|s| s.to_string()).collect::<Vec<_>>(),
            );
            let score = entity_score(label, desc, &weights);
            let similar = similar_entities(score, types, &thresholds);
            println!("{la:<10} {lb:<10} {label:>6.3} {desc:>6.3} {types:>6.3} {score:>6.3}  {similar}");
        }
    }
    Ok(())
}
