use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use kgen::llm::{BackendKind, FixtureBackend, FixtureStore, Gateway};
use kgen::model::ExportFormat;
use kgen::pipeline::server::{serve, AppState};
use kgen::pipeline::{self, ExportTarget, Pipeline, PipelineConfig, PipelineError, Stage};

/// Builds a knowledge graph from a directory of plain-text documents.
#[derive(Parser)]
#[command(name = "kgen", version)]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    input_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    backend: Option<Backend>,
    /// Transcript for the fixture backend.
    #[arg(long, global = true)]
    fixture_file: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Backend {
    Remote,
    Fixture,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Ntriples,
    Doc,
}

#[derive(Clone, Copy, ValueEnum)]
enum Target {
    Graph,
    Schema,
}

#[derive(Subcommand)]
enum Command {
    /// Scan the input directory and write the corpus manifest.
    Ingest,
    /// Run pipeline stages; cached stages are reused.
    Run {
        /// Comma-separated subset of ingest,extract,resolve,schema,metrics.
        #[arg(long, value_delimiter = ',')]
        stages: Vec<Stage>,
    },
    /// Print the metrics table for the current annotations.
    Evaluate {
        #[arg(long)]
        json: bool,
    },
    /// Serve the review API and UI.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
    },
    /// Write the graph or the schema to stdout or a file.
    Export {
        #[arg(long, value_enum, default_value_t = Format::Doc)]
        format: Format,
        #[arg(long, value_enum, default_value_t = Target::Graph)]
        target: Target,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn load_config(cli: &Cli) -> Result<PipelineConfig, PipelineError> {
    let mut config = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(d) = &cli.input_dir {
        config.input_dir = d.clone();
    }
    if let Some(d) = &cli.out_dir {
        config.out_dir = d.clone();
    }
    if let Some(b) = cli.backend {
        config.backend.kind = match b {
            Backend::Remote => BackendKind::Remote,
            Backend::Fixture => BackendKind::Fixture,
        };
    }
    if let Some(f) = &cli.fixture_file {
        config.backend.fixture_file = Some(f.clone());
    }
    Ok(config)
}

fn execute(cli: Cli) -> Result<(), PipelineError> {
    let mut config = load_config(&cli)?;
    match cli.command {
        Command::Ingest => {
            // Ingestion never talks to the model; an empty transcript
            // satisfies the gateway without requiring backend settings.
            if config.backend.fixture_file.is_none() {
                config.backend.fixture_file = Some(PathBuf::new());
            }
            config.validate()?;
            let gateway = Gateway::new(
                Box::new(FixtureBackend::new(FixtureStore::default())),
                config.backend.tokenizer.build(),
                config.backend.token_limit,
            );
            let embedder = config.embedding.build()?;
            let prompts = pipeline::load_prompts(&config)?;
            Pipeline::new(&config, &gateway, embedder.as_ref(), &prompts).run(&[Stage::Ingest])?;
            let manifest = pipeline::StageStore::new(&config.out_dir).read(Stage::Ingest, pipeline::MANIFEST)?;
            let manifest: pipeline::Manifest = serde_json::from_slice(&manifest)?;
            println!(
                "{} document(s), {} skipped",
                manifest.documents.len(),
                manifest.skipped.len()
            );
            for s in &manifest.skipped {
                println!("skipped {}: {}", s.file, s.reason);
            }
        }
        Command::Run { stages } => {
            config.validate()?;
            let gateway = Gateway::from_config(&config.backend).map_err(|e| PipelineError::Config(e.to_string()))?;
            let embedder = config.embedding.build()?;
            let prompts = pipeline::load_prompts(&config)?;
            let stages = if stages.is_empty() { Stage::ALL.to_vec() } else { stages };
            let report = Pipeline::new(&config, &gateway, embedder.as_ref(), &prompts).run(&stages)?;
            for o in &report.outcomes {
                let status = if o.cached { "cached" } else { "built" };
                println!("{:<8} {status:<6} {} gateway call(s)", o.stage.name(), o.gateway_calls);
            }
        }
        Command::Evaluate { json } => {
            let report = pipeline::evaluate(&config.out_dir)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                print!("{}", report.to_table());
            }
        }
        Command::Serve { port, ref host } => {
            pipeline::annotated_graph(&config.out_dir)?;
            let addr: SocketAddr = format!("{host}:{port}")
                .parse()
                .map_err(|e| PipelineError::Config(format!("bad address: {e}")))?;
            serve(Arc::new(AppState::new(&config)), addr).map_err(|e| PipelineError::io(&config.out_dir, e))?;
        }
        Command::Export { format, target, output } => {
            let format = match format {
                Format::Ntriples => ExportFormat::NTriples,
                Format::Doc => ExportFormat::Document,
            };
            let target = match target {
                Target::Graph => ExportTarget::Graph,
                Target::Schema => ExportTarget::Schema,
            };
            let bytes = pipeline::export(&config.out_dir, target, format)?;
            match output {
                Some(path) => pipeline::write_atomic(&path, &bytes)?,
                None => {
                    use std::io::Write;
                    std::io::stdout()
                        .write_all(&bytes)
                        .map_err(|e| PipelineError::io(std::path::Path::new("stdout"), e))?;
                }
            }
        }
    }
    Ok(())
}
