//! Resolves the golden candidate graph and shows how the vehicle cluster
//! splits into groups of true synonyms, each shrunk to one label.
//!
//! ```text
//! cargo run --example resolve_vehicles
//! ```

use std::path::Path;

use kgen::llm::{FixtureBackend, FixtureStore, Gateway, WhitespaceTokenizer, DEFAULT_TOKEN_LIMIT};
use kgen::model::{import_graph, EntityId};
use kgen::prompting::DiagnosticLog;
use kgen::prompts::PromptSet;
use kgen::resolver::{Resolver, ResolverConfig, StubEmbedder};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/golden");
    let candidate = import_graph(&std::fs::read(golden.join("expected/candidate_graph.json"))?)?;
    let gateway = Gateway::new(
        Box::new(FixtureBackend::new(FixtureStore::load(&golden.join("llm.json"))?)),
        std::sync::Arc::new(WhitespaceTokenizer),
        DEFAULT_TOKEN_LIMIT,
    );
    let prompts = PromptSet::builtin();
    let embedder = StubEmbedder::default();
    let log = DiagnosticLog::default();
    let resolution =
        Resolver::new(&gateway, &prompts, &embedder, ResolverConfig::default(), &log).resolve(&candidate)?;

    let label = |id: &String| {
        candidate
            .entity(&EntityId::new(id.clone()))
            .map_or(id.clone(), |e| e.label.clone())
    };
    for cluster in &resolution.report.entity_clusters {
        let members: Vec<String> = cluster.members.iter().map(label).collect();
        println!("cluster {members:?}");
        for g in &cluster.groups {
            let group: Vec<String> = g.members.iter().map(label).collect();
            println!("  {group:?} -> {}", g.canonical_label);
        }
    }
    let r = &resolution.report;
    println!(
        "\nentities {} -> {}, predicates {} -> {}, triplets {} -> {}",
        r.entities_before,
        r.entities_after,
        r.predicates_before,
        r.predicates_after,
        r.triplets_before,
        r.triplets_after
    );
    Ok(())
}
