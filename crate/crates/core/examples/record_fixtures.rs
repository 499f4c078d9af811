//! Authors the offline transcripts under `fixtures/golden/`.
//!
//! A rule-based responder stands in for the model: it recognizes each task
//! by its system prompt, parses the user prompt and answers from the tables
//! below. Every exchange is recorded and saved, then the pipeline is rerun
//! on the saved transcript and its artifacts are frozen as the expected
//! outputs.
//!
//! ```text
//! cargo run --example record_fixtures
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use kgen::extractor::label_key;
use kgen::llm::{ChatMessage, Gateway, RecordingBackend, WhitespaceTokenizer, DEFAULT_TOKEN_LIMIT};
use kgen::pipeline::{self, Pipeline, PipelineConfig, Stage};
use kgen::prompting::DiagnosticLog;
use kgen::prompts::PromptSet;
use kgen::schema::{SchemaConfig, SchemaInferencer};

/// Entities per document, keyed by a phrase unique to the document.
const ENTITIES: &[(&str, &[&str])] = &[
    (
        "Bastione di Santa Croce",
        &[
            "Cagliari | The capital city of Sardinia, offering history, art, seashores, parks, and fine cuisine. | City; Tourist Destination",
            "Sardinia | A Mediterranean island whose capital is Cagliari. | Island; Region",
            "Bastione di Santa Croce | A panoramic terrace in Cagliari, offering a romantic view of the sunset. | Tourist Attraction; Landmark",
        ],
    ),
    (
        "Rental agencies",
        &[
            "Cagliari | The capital city of Sardinia, whose port hosts rental agencies for every kind of vehicle. | City; Port",
            "motor car | A vehicle rented at the port of Cagliari for getting around Sardinia, best for the coast road. | Vehicle; Means of Transport",
            "automobile | A vehicle rented at the port of Cagliari for getting around Sardinia, best for the coast road to Villasimius. | Vehicle; Means of Transport",
            "motorcycle | A vehicle rented at the port of Cagliari for getting around Sardinia, suited to the mountain passes. | Vehicle; Means of Transport",
            "motorbike | A vehicle rented at the port of Cagliari for getting around Sardinia, suited to the mountain passes of the interior. | Vehicle; Means of Transport",
            "bicycle | A vehicle rented at the port of Cagliari for getting around Sardinia, enough for the flat promenade of Poetto. | Vehicle; Means of Transport",
            "bike | A vehicle rented at the port of Cagliari for getting around Sardinia, enough for the promenade of Poetto. | Vehicle; Means of Transport",
            "Villasimius | A seaside town reached by the coast road from Cagliari. | Town; Tourist Destination",
            "Poetto | The flat promenade along the beach of Cagliari. | Beach; Promenade",
        ],
    ),
    (
        "Sella del Diavolo",
        &[
            "Poetto | The long beach of Cagliari, stretching for eight kilometres from the Sella del Diavolo. | Beach",
            "Cagliari | The capital city of Sardinia, whose long beach is Poetto. | City",
            "Sella del Diavolo | A promontory at one end of the Poetto beach in Cagliari. | Promontory; Landmark",
            "bike | A vehicle people ride along the promenade of Poetto. | Vehicle",
        ],
    ),
];

/// Facts the responder will state whenever both endpoints are listed.
const FACTS: &[(&str, &str, &str)] = &[
    ("Cagliari", "has landmark", "Bastione di Santa Croce"),
    ("Cagliari", "is capital of", "Sardinia"),
    ("Cagliari", "has beach", "Poetto"),
    ("Sella del Diavolo", "is located in", "Cagliari"),
    ("Villasimius", "is located in", "Sardinia"),
    ("automobile", "is used to reach", "Villasimius"),
    ("bicycle", "is used on", "Poetto"),
    ("bike", "is used on", "Poetto"),
    ("motor car", "is rented in", "Cagliari"),
    ("automobile", "is rented in", "Cagliari"),
    ("motorcycle", "is rented in", "Cagliari"),
    ("motorbike", "is rented in", "Cagliari"),
    ("bicycle", "is rented in", "Cagliari"),
    ("bike", "is rented in", "Cagliari"),
];

const PREDICATES: &[(&str, &str)] = &[
    (
        "has landmark",
        "Expresses a relationship between a place and a landmark located in it",
    ),
    (
        "is capital of",
        "Expresses that a city is the seat of government of a larger territory",
    ),
    (
        "has beach",
        "Expresses a relationship between a place and a beach that belongs to it",
    ),
    (
        "is located in",
        "Expresses that a place lies within the area of another place",
    ),
    (
        "is used to reach",
        "Expresses that a means of transport is a way to get to a destination",
    ),
    (
        "is used on",
        "Expresses that a means of transport travels along a route or area",
    ),
    ("is rented in", "Expresses that an item can be hired at a place"),
];

/// Labels that denote the same concept share a canonical name.
const SYNONYMS: &[(&str, &str)] = &[
    ("motor car", "car"),
    ("automobile", "car"),
    ("motorbike", "motorcycle"),
    ("bike", "bicycle"),
];

const HYPERNYMS: &[(&str, &str)] = &[
    ("city", "place"),
    ("town", "place"),
    ("island", "place"),
    ("region", "place"),
    ("beach", "place"),
    ("promenade", "place"),
    ("port", "place"),
    ("promontory", "place"),
    ("tourist destination", "place"),
    ("tourist attraction", "attraction"),
    ("landmark", "attraction"),
    ("vehicle", "transport"),
    ("means of transport", "transport"),
    ("place", "location"),
    ("attraction", "location"),
    ("location", "thing"),
    ("transport", "artifact"),
    ("artifact", "thing"),
    ("legumes", "vegetables"),
    ("green vegetables", "vegetables"),
    ("poultry", "meat"),
    ("pork", "meat"),
    ("fish", "seafood"),
    ("crustacean", "seafood"),
    ("vegetables", "food"),
    ("meat", "food"),
    ("seafood", "food"),
];

const FOOD_TYPES: [&str; 6] = ["legumes", "green vegetables", "poultry", "pork", "fish", "crustacean"];

fn between<'a>(text: &'a str, open: &str, close: &str) -> &'a str {
    let start = text.find(open).map_or(0, |i| i + open.len());
    let end = text[start..].find(close).map_or(text.len(), |i| start + i);
    text[start..end].trim()
}

/// `(n) label` or `n. label` lines of a block, in order.
fn listed(block: &str) -> Vec<String> {
    block
        .lines()
        .filter_map(|line| {
            let line = line.trim();
            if let Some(rest) = line.strip_prefix('(') {
                let (n, label) = rest.split_once(')')?;
                n.parse::<usize>().ok()?;
                Some(label.trim().to_string())
            } else {
                let (n, label) = line.split_once(". ")?;
                n.parse::<usize>().ok()?;
                Some(label.trim().to_string())
            }
        })
        .collect()
}

fn canonical(label: &str) -> String {
    let key = label_key(label);
    SYNONYMS
        .iter()
        .find(|(from, _)| *from == key)
        .map_or(key, |(_, to)| to.to_string())
}

fn respond(messages: &[ChatMessage]) -> Option<String> {
    let system = &messages.first()?.content;
    let user = &messages.get(1)?.content;
    if system.starts_with("You extract entities") {
        let text = between(user, "```", "```");
        let (_, lines) = ENTITIES.iter().find(|(marker, _)| text.contains(marker))?;
        return Some(
            lines
                .iter()
                .enumerate()
                .map(|(i, l)| format!("{}. {l}", i + 1))
                .collect::<Vec<_>>()
                .join("\n"),
        );
    }
    if system.starts_with("You check which entities") {
        let excerpt = between(user, "<<<TEXT", "TEXT>>>").to_lowercase();
        let labels = listed(between(user, "Entities:", "<<<TEXT"));
        return Some(
            labels
                .iter()
                .enumerate()
                .map(|(i, l)| {
                    let answer = if excerpt.contains(&l.to_lowercase()) {
                        "yes"
                    } else {
                        "no"
                    };
                    format!("{}. {l} - {answer}", i + 1)
                })
                .collect::<Vec<_>>()
                .join("\n"),
        );
    }
    if system.starts_with("You extract relations") {
        let labels = listed(user.rsplit("Entities:").next()?);
        let number = |label: &str| labels.iter().position(|l| l == label).map(|i| i + 1);
        let lines: Vec<String> = FACTS
            .iter()
            .filter_map(|(s, p, o)| Some(format!("({}) {s}; {p}; ({}) {o}", number(s)?, number(o)?)))
            .collect();
        return Some(lines.join("\n"));
    }
    if system.starts_with("You describe predicates") {
        let mut seen = Vec::new();
        for line in user.rsplit("Triplets:").next()?.lines() {
            let mut parts = line.split("; ");
            let (Some(_), Some(p), Some(_)) = (parts.next(), parts.next(), parts.next()) else {
                continue;
            };
            if !seen.contains(&p) {
                seen.push(p);
            }
        }
        let lines: Vec<String> = seen
            .iter()
            .filter_map(|p| PREDICATES.iter().find(|(q, _)| q == p))
            .map(|(p, d)| format!("{p} :: {d}"))
            .collect();
        return Some(lines.join("\n"));
    }
    if system.starts_with("You maintain a running summary") {
        let part = between(user, "<<<PART", "PART>>>");
        return Some(part.split(". ").next().unwrap_or(part).to_string());
    }
    if system.starts_with("You decide which items") {
        let items = listed(user);
        let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, label) in items.iter().enumerate() {
            groups.entry(canonical(label)).or_default().push(i);
        }
        let lines: Vec<String> = groups
            .values()
            .filter(|g| g.len() > 1)
            .map(|g| {
                g.iter()
                    .map(|&i| format!("({}) {}", i + 1, items[i]))
                    .collect::<Vec<_>>()
                    .join(" | ")
            })
            .collect();
        return Some(lines.join("\n"));
    }
    if system.starts_with("The user supplies a list of") {
        let items = listed(user);
        let first = items.first()?;
        let label = match SYNONYMS
            .iter()
            .find(|(from, to)| canonical(first) == *to || label_key(first) == *from)
        {
            Some((_, to)) => to.to_string(),
            None => first.clone(),
        };
        return Some(format!("Label: {label}"));
    }
    if system.starts_with("You build a taxonomy") {
        let types = listed(user);
        let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, t) in types.iter().enumerate() {
            if let Some((_, h)) = HYPERNYMS.iter().find(|(from, _)| *from == label_key(t)) {
                groups.entry(h).or_default().push(i);
            }
        }
        let lines: Vec<String> = groups
            .iter()
            .map(|(h, members)| {
                let covered: Vec<String> = members.iter().map(|&i| format!("({}) {}", i + 1, types[i])).collect();
                format!("{h} :: is type of :: {}", covered.join("; "))
            })
            .collect();
        return Some(lines.join("\n"));
    }
    None
}

/// A gateway answering through `respond`, plus a handle on its recording.
fn recording_gateway() -> (Gateway, Arc<RecordingBackend>) {
    let recorder = Arc::new(RecordingBackend::new(Box::new(respond)));
    let gateway = Gateway::new(
        Box::new(recorder.clone()),
        Arc::new(WhitespaceTokenizer),
        DEFAULT_TOKEN_LIMIT,
    );
    (gateway, recorder)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/golden");
    let mut config = PipelineConfig::load(&golden.join("config.toml"))?;
    let scratch = tempfile_dir()?;
    config.out_dir = scratch.join("record");
    let prompts = PromptSet::builtin();
    let embedder = config.embedding.build()?;

    let (gateway, recorder) = recording_gateway();
    Pipeline::new(&config, &gateway, embedder.as_ref(), &prompts).run(&Stage::ALL)?;
    let transcript = recorder.snapshot();
    transcript.save(&golden.join("llm.json"))?;
    println!("llm.json: {} exchange(s)", transcript.len());

    let (food_gateway, recorder) = recording_gateway();
    let log = DiagnosticLog::default();
    let types: Vec<String> = FOOD_TYPES.iter().map(|s| s.to_string()).collect();
    SchemaInferencer::new(&food_gateway, &prompts, SchemaConfig::default(), &log).infer(&[types])?;
    let food = recorder.snapshot();
    food.save(&golden.join("food.json"))?;
    println!("food.json: {} exchange(s)", food.len());

    // Replay from the saved transcript and freeze the artifacts.
    let mut replay = PipelineConfig::load(&golden.join("config.toml"))?;
    replay.out_dir = scratch.join("replay");
    let gateway = Gateway::from_config(&replay.backend)?;
    let report = Pipeline::new(&replay, &gateway, embedder.as_ref(), &prompts).run(&Stage::ALL)?;
    let expected = golden.join("expected");
    fs::create_dir_all(&expected)?;
    let store = pipeline::StageStore::new(&replay.out_dir);
    for (stage, name) in [
        (Stage::Extract, pipeline::CANDIDATE_GRAPH),
        (Stage::Resolve, pipeline::RESOLVED_GRAPH),
        (Stage::Resolve, pipeline::RESOLUTION_REPORT),
        (Stage::Schema, pipeline::SCHEMA),
        (Stage::Schema, pipeline::SCHEMA_NTRIPLES),
    ] {
        fs::write(expected.join(name), store.read(stage, name)?)?;
    }
    println!(
        "replayed with {} gateway call(s); expected artifacts frozen",
        report.gateway_calls()
    );
    fs::remove_dir_all(&scratch)?;
    Ok(())
}

fn tempfile_dir() -> std::io::Result<PathBuf> {
    let dir = std::env::temp_dir().join(format!("kgen-record-{}", std::process::id()));
    fs::create_dir_all(&dir)?;
    Ok(dir)
}
