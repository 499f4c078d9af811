//! Serves the review API over a fresh golden run, posts one verdict and
//! reads the metrics back.
//!
//! ```text
//! cargo run --example review_api
//! ```

use std::path::Path;
use std::sync::Arc;

use kgen::eval::{Annotation, Verdict};
use kgen::llm::Gateway;
use kgen::model::import_graph;
use kgen::pipeline::server::{spawn, AppState};
use kgen::pipeline::{Pipeline, PipelineConfig, Stage};
use kgen::prompts::PromptSet;
use serde_json::Value;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/golden");
    let mut config = PipelineConfig::load(&golden.join("config.toml"))?;
    config.out_dir = std::env::temp_dir().join(format!("kgen-review-{}", std::process::id()));
    let gateway = Gateway::from_config(&config.backend)?;
    let embedder = config.embedding.build()?;
    let prompts = PromptSet::builtin();
    Pipeline::new(&config, &gateway, embedder.as_ref(), &prompts).run(&Stage::ALL)?;

    let server = spawn(Arc::new(AppState::new(&config)), "127.0.0.1:0".parse()?)?;
    let base = format!("http://{}", server.addr);
    let client = reqwest::blocking::Client::new();

    let docs: Value = client.get(format!("{base}/api/documents")).send()?.json()?;
    println!("documents: {docs}");
    let graph = import_graph(&client.get(format!("{base}/api/graph")).send()?.bytes()?)?;
    let cagliari = graph.entities().find(|e| e.label == "Cagliari").ok_or("no Cagliari")?;
    let verdict = Annotation::entity(&cagliari.id, Verdict::Correct, "example");
    let reply: Value = client
        .post(format!("{base}/api/annotations"))
        .json(&verdict)
        .send()?
        .json()?;
    println!("annotations: {reply}");
    let metrics: Value = client.get(format!("{base}/api/metrics")).send()?.json()?;
    print!("{}", metrics["table"].as_str().unwrap_or_default());

    server.stop();
    std::fs::remove_dir_all(&config.out_dir)?;
    Ok(())
}
