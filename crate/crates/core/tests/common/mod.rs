//! Shared fixtures and independent oracles for the integration tests.
#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use kgen::eval::{Annotation, AnnotationSet, GroundTruth, Verdict};
use kgen::extractor::RejectReason;
use kgen::llm::{FixtureBackend, FixtureStore, Gateway, WhitespaceTokenizer, DEFAULT_TOKEN_LIMIT};
use kgen::model::{EntityRecord, KnowledgeGraph, ProvenanceRef};
use kgen::pipeline::{Pipeline, PipelineConfig, PipelineError, RunReport, Stage};
use kgen::prompts::{PromptSet, TaskId};

pub const FOOD_TYPES: [&str; 6] = ["legumes", "green vegetables", "poultry", "pork", "fish", "crustacean"];

pub fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/golden")
}

pub fn golden_config(out_dir: &Path) -> PipelineConfig {
    let mut config = PipelineConfig::load(&golden_dir().join("config.toml")).expect("golden config");
    config.out_dir = out_dir.to_path_buf();
    config
}

/// Runs `stages` of the golden pipeline into `out_dir` with a fresh gateway.
pub fn run_golden(out_dir: &Path, stages: &[Stage]) -> Result<RunReport, PipelineError> {
    let config = golden_config(out_dir);
    let gateway = Gateway::from_config(&config.backend)?;
    let embedder = config.embedding.build()?;
    let prompts = PromptSet::builtin();
    Pipeline::new(&config, &gateway, embedder.as_ref(), &prompts).run(stages)
}

pub fn fixture_gateway(store: FixtureStore) -> Gateway {
    Gateway::new(
        Box::new(FixtureBackend::new(store)),
        Arc::new(WhitespaceTokenizer),
        DEFAULT_TOKEN_LIMIT,
    )
}

pub fn food_gateway() -> Gateway {
    fixture_gateway(FixtureStore::load(&golden_dir().join("food.json")).expect("food transcript"))
}

/// Textbook full-matrix edit distance, kept deliberately naive.
pub fn levenshtein_oracle(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for (j, cell) in d[0].iter_mut().enumerate() {
        *cell = j;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let cost = if a[i - 1] == b[j - 1] { 0 } else { 1 };
            d[i][j] = (d[i - 1][j] + 1).min(d[i][j - 1] + 1).min(d[i - 1][j - 1] + cost);
        }
    }
    d[a.len()][b.len()]
}

/// Components by Warshall transitive closure over a symmetric adjacency
/// matrix, each sorted, ordered by smallest member.
pub fn closure_components(n: usize, pairs: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let mut reach = vec![vec![false; n]; n];
    for (i, row) in reach.iter_mut().enumerate() {
        row[i] = true;
    }
    for &(i, j) in pairs {
        reach[i][j] = true;
        reach[j][i] = true;
    }
    for k in 0..n {
        let via = reach[k].clone();
        for row in reach.iter_mut() {
            if row[k] {
                for (cell, v) in row.iter_mut().zip(&via) {
                    *cell |= *v;
                }
            }
        }
    }
    let mut seen = vec![false; n];
    let mut out = Vec::new();
    for i in 0..n {
        if seen[i] {
            continue;
        }
        let members: Vec<usize> = (0..n).filter(|&j| reach[i][j]).collect();
        for &m in &members {
            seen[m] = true;
        }
        out.push(members);
    }
    out
}

/// A graph of 761 typed entities in one document, with 752 judged correct,
/// 9 incorrect, and 55 missed entities recorded for their type.
pub fn reference_counts_fixture() -> (KnowledgeGraph, AnnotationSet, GroundTruth) {
    let mut graph = KnowledgeGraph::default();
    let mut annotations = AnnotationSet::default();
    for i in 0..761 {
        let id = graph
            .add_entity(
                EntityRecord::new(format!("site {i}"), format!("Site number {i} of the city."), ["Place"])
                    .with_provenance(ProvenanceRef::chunk("city", 0)),
            )
            .expect("distinct entities");
        let verdict = if i < 752 { Verdict::Correct } else { Verdict::Incorrect };
        annotations
            .push(Annotation::entity(&id, verdict, "assessor-1"))
            .expect("valid");
    }
    let mut truth = GroundTruth::default();
    for k in 0..55 {
        truth.add("city", "Place", &format!("missed site {k}"));
    }
    (graph, annotations, truth)
}

/// Artifacts frozen under `fixtures/golden/expected`, with their stages.
pub const GOLDEN_ARTIFACTS: [(Stage, &str); 5] = [
    (Stage::Extract, kgen::pipeline::CANDIDATE_GRAPH),
    (Stage::Resolve, kgen::pipeline::RESOLVED_GRAPH),
    (Stage::Resolve, kgen::pipeline::RESOLUTION_REPORT),
    (Stage::Schema, kgen::pipeline::SCHEMA),
    (Stage::Schema, kgen::pipeline::SCHEMA_NTRIPLES),
];

pub fn read_artifacts(out_dir: &Path) -> Vec<(String, Vec<u8>)> {
    let store = kgen::pipeline::StageStore::new(out_dir);
    GOLDEN_ARTIFACTS
        .iter()
        .map(|(stage, name)| (name.to_string(), store.read(*stage, name).expect("artifact")))
        .collect()
}

pub fn expected_artifacts() -> Vec<(String, Vec<u8>)> {
    GOLDEN_ARTIFACTS
        .iter()
        .map(|(_, name)| {
            (
                name.to_string(),
                std::fs::read(golden_dir().join("expected").join(name)).expect("frozen"),
            )
        })
        .collect()
}

/// `(subject, predicate, object)` labels of every triplet.
pub fn labelled_triplets(graph: &KnowledgeGraph) -> Vec<(String, String, String)> {
    let label = |id| graph.entity(id).map(|e| e.label.clone()).unwrap_or_default();
    graph
        .triplets()
        .map(|t| {
            let p = graph
                .predicate(&t.predicate)
                .map(|p| p.label.clone())
                .unwrap_or_default();
            (label(&t.subject), p, label(&t.object))
        })
        .collect()
}

/// Candidate labels per disambiguation group of the cluster holding a
/// `motorcycle`, each group sorted.
pub fn vehicle_groups(out_dir: &Path) -> Vec<Vec<String>> {
    let store = kgen::pipeline::StageStore::new(out_dir);
    let candidate =
        kgen::model::import_graph(&store.read(Stage::Extract, kgen::pipeline::CANDIDATE_GRAPH).unwrap()).unwrap();
    let report: kgen::resolver::ResolutionReport =
        serde_json::from_slice(&store.read(Stage::Resolve, kgen::pipeline::RESOLUTION_REPORT).unwrap()).unwrap();
    let label = |id: &String| {
        candidate
            .entity(&kgen::model::EntityId::new(id.clone()))
            .map(|e| e.label.clone())
            .unwrap_or_default()
    };
    let cluster = report
        .entity_clusters
        .iter()
        .find(|c| c.members.iter().any(|m| label(m) == "motorcycle"))
        .expect("a cluster holds the motorcycle");
    cluster
        .groups
        .iter()
        .map(|g| {
            let mut labels: Vec<String> = g.members.iter().map(label).collect();
            labels.sort();
            labels
        })
        .collect()
}

/// A single response line and the verdict the validator must reach;
/// `expect` is `None` for accepted lines.
pub struct ValidatorCase {
    pub task: TaskId,
    pub reference: Option<Vec<String>>,
    pub line: &'static str,
    pub expect: Option<RejectReason>,
}

pub fn validator_cases() -> Vec<ValidatorCase> {
    use RejectReason::*;
    let strings = |labels: &[&str]| Some(labels.iter().map(|s| s.to_string()).collect::<Vec<_>>());
    let entities = strings(&["Bastione di Santa Croce", "Cagliari", "Marina District"]);
    let pair = strings(&["Cagliari", "Bastione di Santa Croce"]);
    let predicates = strings(&["has landmark"]);
    let vehicles = strings(&["motor car", "automobile", "motorcycle"]);
    let case = |task, reference: &Option<Vec<String>>, line, expect| ValidatorCase {
        task,
        reference: reference.clone(),
        line,
        expect,
    };
    vec![
        case(
            TaskId::EntityExtraction,
            &None,
            "1. Cagliari | The capital of Sardinia | City; Tourist Destination",
            None,
        ),
        case(
            TaskId::EntityExtraction,
            &None,
            "Cagliari is a city",
            Some(PatternMismatch),
        ),
        case(
            TaskId::EntityExtraction,
            &None,
            "1. Cagliari | The capital of Sardinia",
            Some(PatternMismatch),
        ),
        case(
            TaskId::EntityExtraction,
            &None,
            "Cagliari | The capital of Sardinia | City",
            Some(PatternMismatch),
        ),
        case(TaskId::MentionRecognition, &entities, "2. Cagliari - yes", None),
        case(
            TaskId::MentionRecognition,
            &entities,
            "2. Marina District - yes",
            Some(ConsistencyViolation),
        ),
        case(
            TaskId::MentionRecognition,
            &entities,
            "3. Cagliari - yes",
            Some(ConsistencyViolation),
        ),
        case(
            TaskId::MentionRecognition,
            &entities,
            "9. Poetto - no",
            Some(ConsistencyViolation),
        ),
        case(
            TaskId::MentionRecognition,
            &entities,
            "2. Cagliari - maybe",
            Some(PatternMismatch),
        ),
        case(
            TaskId::RelationExtraction,
            &pair,
            "(1) Cagliari; has landmark; (2) Bastione di Santa Croce",
            None,
        ),
        case(
            TaskId::RelationExtraction,
            &pair,
            "(1) Cagliari; is near; (3) Poetto",
            Some(ConsistencyViolation),
        ),
        case(
            TaskId::RelationExtraction,
            &pair,
            "Cagliari; has landmark; Bastione di Santa Croce",
            Some(PatternMismatch),
        ),
        case(
            TaskId::PredicateDescription,
            &predicates,
            "has landmark :: Expresses a relationship between a place and a landmark located in it",
            None,
        ),
        case(
            TaskId::PredicateDescription,
            &predicates,
            "includes :: Anything",
            Some(ConsistencyViolation),
        ),
        case(
            TaskId::PredicateDescription,
            &predicates,
            "has landmark - a landmark",
            Some(PatternMismatch),
        ),
        case(
            TaskId::ClusterDisambiguation,
            &vehicles,
            "(1) motor car | (2) automobile",
            None,
        ),
        case(
            TaskId::ClusterDisambiguation,
            &vehicles,
            "(1) motor car | (4) bicycle",
            Some(ConsistencyViolation),
        ),
        case(
            TaskId::ClusterDisambiguation,
            &vehicles,
            "motor car = automobile",
            Some(PatternMismatch),
        ),
        case(TaskId::ConceptShrinkage, &None, "Label: car", None),
        case(TaskId::ConceptShrinkage, &None, "car", Some(PatternMismatch)),
        case(
            TaskId::HypernymGeneration,
            &vehicles,
            "vehicle :: is type of :: (1) motor car; (3) motorcycle",
            None,
        ),
        case(
            TaskId::HypernymGeneration,
            &vehicles,
            "vehicle :: is type of :: (7) plane",
            Some(ConsistencyViolation),
        ),
        case(
            TaskId::HypernymGeneration,
            &vehicles,
            "vehicle: motor car, motorcycle",
            Some(PatternMismatch),
        ),
    ]
}

/// A hypernym response covering one type twice: the second claim is
/// rejected, the first kept.
pub const DOUBLE_COVERAGE: &str = "vehicle :: is type of :: (1) motor car; (2) automobile\n\
                                   machine :: is type of :: (1) motor car";
