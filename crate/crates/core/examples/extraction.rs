//! Extracts one document of the golden corpus with the recorded model
//! transcript and prints its entities and triplets.
//!
//! ```text
//! cargo run --example extraction
//! ```

use std::path::Path;

use kgen::chunker::SplitConfig;
use kgen::extractor::{Extractor, ExtractorConfig};
use kgen::llm::{FixtureBackend, FixtureStore, Gateway, WhitespaceTokenizer, DEFAULT_TOKEN_LIMIT};
use kgen::prompting::DiagnosticLog;
use kgen::prompts::PromptSet;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/golden");
    let store = FixtureStore::load(&golden.join("llm.json"))?;
    let gateway = Gateway::new(
        Box::new(FixtureBackend::new(store)),
        std::sync::Arc::new(WhitespaceTokenizer),
        DEFAULT_TOKEN_LIMIT,
    );
    let prompts = PromptSet::builtin();
    let log = DiagnosticLog::default();
    let text = std::fs::read_to_string(golden.join("corpus/cagliari.txt"))?;
    let extractor = Extractor::new(
        &gateway,
        &prompts,
        SplitConfig::default(),
        ExtractorConfig::default(),
        &log,
    );
    let graph = extractor.extract_document("cagliari", &text)?;

    for e in graph.entities() {
        println!("{:<26} {:<40} {}", e.label, e.types.join(", "), e.description);
    }
    println!();
    for t in graph.triplets() {
        let label = |id| graph.entity(id).map_or("?", |e| e.label.as_str());
        let predicate = graph.predicate(&t.predicate).map_or("?", |p| p.label.as_str());
        println!("({}, {predicate}, {})", label(&t.subject), label(&t.object));
    }
    println!(
        "\n{} gateway call(s), {} rejected line(s)",
        gateway.calls(),
        log.take().len()
    );
    Ok(())
}
