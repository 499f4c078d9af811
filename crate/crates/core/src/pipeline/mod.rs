//! End-to-end orchestration with a stage cache.
//!
//! Stages run in a fixed chain: ingest, extract, resolve, schema, metrics.
//! Requesting a stage also runs whatever it depends on. Every stage is keyed
//! by a digest of its inputs (upstream output, configuration, prompt set,
//! backend fingerprint including the fixture transcript), so an unchanged
//! rerun is served from disk without a single gateway call.

pub mod config;
pub mod ingest;
pub mod server;
pub mod store;

pub use config::PipelineConfig;
pub use ingest::{ingest, Corpus, DocumentEntry, Manifest, SkippedFile};
pub use store::{write_atomic, StageRecord, StageStore};

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::digest::{digest_fields, sha256_hex};
use crate::eval::{compute_report, AnnotationSet, EvalError, GroundTruth, MetricsReport};
use crate::extractor::{ExtractError, Extractor};
use crate::llm::{Gateway, GatewayError};
use crate::model::{export_graph, import_graph, ExportFormat, KnowledgeGraph, ModelError};
use crate::prompting::{render_log, DiagnosticLog};
use crate::prompts::{PromptError, PromptSet};
use crate::resolver::{EmbedError, EmbeddingProvider, ResolutionReport, ResolveError, Resolver};
use crate::schema::{collect_types, SchemaError, SchemaGraph, SchemaInferencer};

pub const MANIFEST: &str = "manifest.json";
pub const CANDIDATE_GRAPH: &str = "candidate_graph.json";
pub const RESOLVED_GRAPH: &str = "resolved_graph.json";
pub const RESOLUTION_REPORT: &str = "resolution_report.json";
pub const SCHEMA: &str = "schema.json";
pub const SCHEMA_NTRIPLES: &str = "schema.nt";
pub const METRICS: &str = "metrics.json";
pub const METRICS_TABLE: &str = "metrics.txt";
pub const REJECTIONS: &str = "rejections.log";
pub const ANNOTATIONS_FILE: &str = "annotations.json";
pub const GROUND_TRUTH_FILE: &str = "ground_truth.json";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("no UTF-8 documents in {}", .0.display())]
    EmptyCorpus(PathBuf),
    #[error("missing artifact: {0}")]
    Missing(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Extract(#[from] ExtractError),
    #[error(transparent)]
    Resolve(#[from] ResolveError),
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Embedding(#[from] EmbedError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl PipelineError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Process exit code: 1 for usage and configuration problems, 2 for a
    /// failed stage.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 1,
            _ => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Ingest,
    Extract,
    Resolve,
    Schema,
    Metrics,
}

impl Stage {
    pub const ALL: [Stage; 5] = [
        Stage::Ingest,
        Stage::Extract,
        Stage::Resolve,
        Stage::Schema,
        Stage::Metrics,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Extract => "extract",
            Stage::Resolve => "resolve",
            Stage::Schema => "schema",
            Stage::Metrics => "metrics",
        }
    }

    pub fn upstream(self) -> Option<Stage> {
        match self {
            Stage::Ingest => None,
            Stage::Extract => Some(Stage::Ingest),
            Stage::Resolve => Some(Stage::Extract),
            Stage::Schema | Stage::Metrics => Some(Stage::Resolve),
        }
    }

    /// `requested` plus everything it depends on, in execution order.
    pub fn closure(requested: &[Stage]) -> Vec<Stage> {
        let mut needed = std::collections::BTreeSet::new();
        for &s in requested {
            let mut cur = Some(s);
            while let Some(c) = cur {
                needed.insert(c);
                cur = c.upstream();
            }
        }
        needed.into_iter().collect()
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s.trim())
            .ok_or_else(|| format!("unknown stage `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StageOutcome {
    pub stage: Stage,
    pub cached: bool,
    /// Gateway calls made by this run for the stage.
    pub gateway_calls: usize,
    pub input_digest: String,
    pub output_digest: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct RunReport {
    pub outcomes: Vec<StageOutcome>,
}

impl RunReport {
    pub fn gateway_calls(&self) -> usize {
        self.outcomes.iter().map(|o| o.gateway_calls).sum()
    }

    pub fn outcome(&self, stage: Stage) -> Option<&StageOutcome> {
        self.outcomes.iter().find(|o| o.stage == stage)
    }
}

/// Loads the configured prompt set, or the built-in one.
pub fn load_prompts(config: &PipelineConfig) -> Result<PromptSet, PipelineError> {
    Ok(match &config.prompts_file {
        Some(path) => PromptSet::load(path)?,
        None => PromptSet::builtin(),
    })
}

pub struct Pipeline<'a> {
    config: &'a PipelineConfig,
    gateway: &'a Gateway,
    embedder: &'a dyn EmbeddingProvider,
    prompts: &'a PromptSet,
    store: StageStore,
}

impl<'a> Pipeline<'a> {
    pub fn new(
        config: &'a PipelineConfig,
        gateway: &'a Gateway,
        embedder: &'a dyn EmbeddingProvider,
        prompts: &'a PromptSet,
    ) -> Self {
        Self {
            config,
            gateway,
            embedder,
            prompts,
            store: StageStore::new(&config.out_dir),
        }
    }

    pub fn store(&self) -> &StageStore {
        &self.store
    }

    /// Runs the requested stages and their dependencies in order.
    pub fn run(&self, requested: &[Stage]) -> Result<RunReport, PipelineError> {
        let mut report = RunReport::default();
        let mut outputs: BTreeMap<Stage, String> = BTreeMap::new();
        for stage in Stage::closure(requested) {
            let upstream = stage.upstream().map(|u| outputs[&u].clone());
            let outcome = self.run_stage(stage, upstream.as_deref())?;
            info!(
                "{stage}: {} ({} gateway call(s))",
                if outcome.cached { "cached" } else { "built" },
                outcome.gateway_calls
            );
            outputs.insert(stage, outcome.output_digest.clone());
            report.outcomes.push(outcome);
        }
        Ok(report)
    }

    fn run_stage(&self, stage: Stage, upstream: Option<&str>) -> Result<StageOutcome, PipelineError> {
        // Ingest always rereads the corpus: it is cheap and its digest is
        // what every later stage is keyed on.
        let corpus = match stage {
            Stage::Ingest => Some(ingest(&self.config.input_dir, self.gateway.tokenizer().as_ref())?),
            _ => None,
        };
        let input_digest = self.input_digest(stage, upstream, corpus.as_ref())?;
        if let Some(record) = self.store.valid(stage, &input_digest) {
            return Ok(StageOutcome {
                stage,
                cached: true,
                gateway_calls: 0,
                output_digest: record.output_digest(),
                input_digest,
            });
        }

        self.store.begin(stage)?;
        let calls_before = self.gateway.calls();
        let payloads = match stage {
            Stage::Ingest => self.build_ingest(corpus.as_ref().expect("read above"))?,
            Stage::Extract => self.build_extract()?,
            Stage::Resolve => self.build_resolve()?,
            Stage::Schema => self.build_schema()?,
            Stage::Metrics => self.build_metrics()?,
        };
        let mut outputs = BTreeMap::new();
        for (name, bytes) in payloads {
            outputs.insert(name.to_string(), self.store.write(stage, name, &bytes)?);
        }
        let record = StageRecord {
            stage,
            input_digest: input_digest.clone(),
            outputs,
            gateway_calls: self.gateway.calls() - calls_before,
        };
        self.store.commit(&record)?;
        Ok(StageOutcome {
            stage,
            cached: false,
            gateway_calls: record.gateway_calls,
            output_digest: record.output_digest(),
            input_digest,
        })
    }

    fn input_digest(
        &self,
        stage: Stage,
        upstream: Option<&str>,
        corpus: Option<&Corpus>,
    ) -> Result<String, PipelineError> {
        let llm = [self.gateway.fingerprint(), self.prompts.digest().to_string()];
        let mut fields: Vec<String> = vec![stage.name().to_string(), upstream.unwrap_or("").to_string()];
        match stage {
            Stage::Ingest => fields.push(corpus.expect("ingest reads the corpus").manifest.digest()),
            Stage::Extract => {
                fields.extend(llm);
                fields.push(json(&self.config.split));
                fields.push(json(&self.config.extractor));
            }
            Stage::Resolve => {
                fields.extend(llm);
                fields.push(json(&self.config.resolver));
                fields.push(self.embedder.fingerprint());
            }
            Stage::Schema => {
                fields.extend(llm);
                fields.push(json(&self.config.schema));
            }
            Stage::Metrics => {
                for name in [ANNOTATIONS_FILE, GROUND_TRUTH_FILE] {
                    let path = self.config.out_dir.join(name);
                    fields.push(std::fs::read(&path).map(sha256_hex).unwrap_or_default());
                }
            }
        }
        Ok(digest_fields(fields))
    }

    fn build_ingest(&self, corpus: &Corpus) -> Result<Vec<(&'static str, Vec<u8>)>, PipelineError> {
        for s in &corpus.manifest.skipped {
            log::warn!("skipped {}: {}", s.file, s.reason);
        }
        Ok(vec![(MANIFEST, pretty(&corpus.manifest)?)])
    }

    fn build_extract(&self) -> Result<Vec<(&'static str, Vec<u8>)>, PipelineError> {
        let manifest: Manifest = serde_json::from_slice(&self.store.read(Stage::Ingest, MANIFEST)?)?;
        let texts = manifest
            .documents
            .iter()
            .map(|d| {
                let path = self.config.input_dir.join(&d.file);
                std::fs::read_to_string(&path).map_err(|e| PipelineError::io(&path, e))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let log = DiagnosticLog::default();
        let extractor = Extractor::new(
            self.gateway,
            self.prompts,
            self.config.split,
            self.config.extractor.clone(),
            &log,
        );
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.config.parallelism)
            .build()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        let fragments: Vec<KnowledgeGraph> = pool.install(|| {
            manifest
                .documents
                .par_iter()
                .zip(texts.par_iter())
                .map(|(doc, text)| extractor.extract_document(&doc.id, text))
                .collect::<Result<_, _>>()
        })?;
        let mut graph = KnowledgeGraph::default();
        for fragment in fragments {
            graph.absorb(fragment)?;
        }
        Ok(vec![
            (CANDIDATE_GRAPH, export_graph(&graph, ExportFormat::Document)),
            (REJECTIONS, render_log(&log.take()).into_bytes()),
        ])
    }

    fn build_resolve(&self) -> Result<Vec<(&'static str, Vec<u8>)>, PipelineError> {
        let candidate = import_graph(&self.store.read(Stage::Extract, CANDIDATE_GRAPH)?)?;
        let log = DiagnosticLog::default();
        let resolver = Resolver::new(
            self.gateway,
            self.prompts,
            self.embedder,
            self.config.resolver.clone(),
            &log,
        );
        let resolution = resolver.resolve(&candidate)?;
        Ok(vec![
            (RESOLVED_GRAPH, export_graph(&resolution.graph, ExportFormat::Document)),
            (RESOLUTION_REPORT, pretty(&resolution.report)?),
            (REJECTIONS, render_log(&log.take()).into_bytes()),
        ])
    }

    fn build_schema(&self) -> Result<Vec<(&'static str, Vec<u8>)>, PipelineError> {
        let graph = import_graph(&self.store.read(Stage::Resolve, RESOLVED_GRAPH)?)?;
        let report: ResolutionReport = serde_json::from_slice(&self.store.read(Stage::Resolve, RESOLUTION_REPORT)?)?;
        let clusters = collect_types(&graph, &report.resolved_entity_clusters(&graph));
        let log = DiagnosticLog::default();
        let schema =
            SchemaInferencer::new(self.gateway, self.prompts, self.config.schema.clone(), &log).infer(&clusters)?;
        schema.check_invariants()?;
        Ok(vec![
            (SCHEMA, pretty(&schema)?),
            (SCHEMA_NTRIPLES, schema.to_ntriples().into_bytes()),
            (REJECTIONS, render_log(&log.take()).into_bytes()),
        ])
    }

    fn build_metrics(&self) -> Result<Vec<(&'static str, Vec<u8>)>, PipelineError> {
        let report = evaluate(&self.config.out_dir)?;
        Ok(vec![
            (METRICS, pretty(&report)?),
            (METRICS_TABLE, report.to_table().into_bytes()),
        ])
    }
}

fn pretty<T: Serialize>(value: &T) -> Result<Vec<u8>, PipelineError> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

fn json<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("config sections serialize")
}

/// The graph assessors judge: the resolved graph when the resolve stage
/// has completed, the candidate graph otherwise.
pub fn annotated_graph(out_dir: &Path) -> Result<KnowledgeGraph, PipelineError> {
    let store = StageStore::new(out_dir);
    for (stage, name) in [(Stage::Resolve, RESOLVED_GRAPH), (Stage::Extract, CANDIDATE_GRAPH)] {
        if store.record(stage).is_some() {
            return Ok(import_graph(&store.read(stage, name)?)?);
        }
    }
    Err(PipelineError::Missing(
        "no extracted graph; run the extract stage first".into(),
    ))
}

pub fn load_schema(out_dir: &Path) -> Result<SchemaGraph, PipelineError> {
    let store = StageStore::new(out_dir);
    if store.record(Stage::Schema).is_none() {
        return Err(PipelineError::Missing("no schema; run the schema stage first".into()));
    }
    Ok(serde_json::from_slice(&store.read(Stage::Schema, SCHEMA)?)?)
}

fn load_or_default<T: Default + serde::de::DeserializeOwned>(path: &Path) -> Result<T, PipelineError> {
    match std::fs::read(path) {
        Ok(bytes) => Ok(serde_json::from_slice(&bytes)?),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(T::default()),
        Err(e) => Err(PipelineError::io(path, e)),
    }
}

pub fn load_annotations(out_dir: &Path) -> Result<AnnotationSet, PipelineError> {
    load_or_default(&out_dir.join(ANNOTATIONS_FILE))
}

pub fn load_ground_truth(out_dir: &Path) -> Result<GroundTruth, PipelineError> {
    load_or_default(&out_dir.join(GROUND_TRUTH_FILE))
}

/// Metrics for the current annotation state; shared by the CLI, the
/// metrics stage and the HTTP service so all three always agree.
pub fn evaluate(out_dir: &Path) -> Result<MetricsReport, PipelineError> {
    let graph = annotated_graph(out_dir)?;
    Ok(compute_report(
        &graph,
        &load_annotations(out_dir)?,
        &load_ground_truth(out_dir)?,
    )?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportTarget {
    Graph,
    Schema,
}

/// Serialized graph or schema in the requested format.
pub fn export(out_dir: &Path, target: ExportTarget, format: ExportFormat) -> Result<Vec<u8>, PipelineError> {
    match target {
        ExportTarget::Graph => Ok(export_graph(&annotated_graph(out_dir)?, format)),
        ExportTarget::Schema => {
            let schema = load_schema(out_dir)?;
            Ok(match format {
                ExportFormat::NTriples => schema.to_ntriples().into_bytes(),
                ExportFormat::Document => pretty(&schema)?,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closure_adds_upstream_stages() {
        assert_eq!(Stage::closure(&[Stage::Extract]), vec![Stage::Ingest, Stage::Extract]);
        assert_eq!(Stage::closure(&[Stage::Metrics]).len(), 4);
        assert_eq!(Stage::closure(&Stage::ALL), Stage::ALL.to_vec());
    }

    #[test]
    fn stage_names_round_trip() {
        for s in Stage::ALL {
            assert_eq!(s.name().parse::<Stage>().unwrap(), s);
        }
        assert!("extraction".parse::<Stage>().is_err());
    }

    #[test]
    fn config_errors_are_usage_errors() {
        assert_eq!(PipelineError::Config("x".into()).exit_code(), 1);
        assert_eq!(PipelineError::Missing("x".into()).exit_code(), 2);
    }
}
