//! Runs every stage over the golden corpus, then runs again to show that
//! unchanged stages come from the cache without model calls.
//!
//! ```text
//! cargo run --example golden_pipeline [-- OUT_DIR]
//! ```

use std::path::{Path, PathBuf};

use kgen::llm::Gateway;
use kgen::pipeline::{Pipeline, PipelineConfig, RunReport, Stage};
use kgen::prompts::PromptSet;

fn print(report: &RunReport) {
    for o in &report.outcomes {
        let status = if o.cached { "cached" } else { "built" };
        println!(
            "  {:<8} {status:<6} {:>3} call(s)  {}",
            o.stage.name(),
            o.gateway_calls,
            &o.output_digest[..12]
        );
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/golden");
    let mut config = PipelineConfig::load(&golden.join("config.toml"))?;
    config.out_dir = match std::env::args().nth(1) {
        Some(dir) => PathBuf::from(dir),
        None => std::env::temp_dir().join("kgen-golden"),
    };
    let gateway = Gateway::from_config(&config.backend)?;
    let embedder = config.embedding.build()?;
    let prompts = PromptSet::builtin();
    let pipeline = Pipeline::new(&config, &gateway, embedder.as_ref(), &prompts);

    println!("first run into {}", config.out_dir.display());
    print(&pipeline.run(&Stage::ALL)?);
    println!("second run");
    print(&pipeline.run(&Stage::ALL)?);
    Ok(())
}
