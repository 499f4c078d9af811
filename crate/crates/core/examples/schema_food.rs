//! Builds a type taxonomy over six food types from the recorded
//! hypernym transcript and prints it level by level.
//!
//! ```text
//! cargo run --example schema_food
//! ```

use std::path::Path;

use kgen::llm::{FixtureBackend, FixtureStore, Gateway, WhitespaceTokenizer, DEFAULT_TOKEN_LIMIT};
use kgen::prompting::DiagnosticLog;
use kgen::prompts::PromptSet;
use kgen::schema::{SchemaConfig, SchemaInferencer};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let transcript = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/golden/food.json");
    let gateway = Gateway::new(
        Box::new(FixtureBackend::new(FixtureStore::load(&transcript)?)),
        std::sync::Arc::new(WhitespaceTokenizer),
        DEFAULT_TOKEN_LIMIT,
    );
    let prompts = PromptSet::builtin();
    let log = DiagnosticLog::default();
    let types: Vec<String> = ["legumes", "green vegetables", "poultry", "pork", "fish", "crustacean"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let schema = SchemaInferencer::new(&gateway, &prompts, SchemaConfig::default(), &log).infer(&[types])?;
    schema.check_invariants()?;
    for level in 0..schema.levels() {
        for node in schema.nodes_at(level) {
            let parents: Vec<&str> = schema.parents_of(node).map(|p| p.label.as_str()).collect();
            println!("{}{} -> {}", "  ".repeat(level), node.label, parents.join(", "));
        }
    }
    print!("\n{}", schema.to_ntriples());
    Ok(())
}
