//! Serializes the golden resolved graph as N-Triples.
//!
//! ```text
//! cargo run --example export_ntriples
//! ```

use std::io::Write;
use std::path::Path;

use kgen::model::{export_graph, import_graph, ExportFormat};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/golden/expected/resolved_graph.json");
    let graph = import_graph(&std::fs::read(path)?)?;
    std::io::stdout().write_all(&export_graph(&graph, ExportFormat::NTriples))?;
    Ok(())
}
