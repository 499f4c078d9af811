use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use percent_encoding::{utf8_percent_encode, AsciiSet, NON_ALPHANUMERIC};
use serde::{Deserialize, Serialize};

use super::{EntityId, EntityRecord, GraphStage, KnowledgeGraph, ModelError, PredicateRecord, TripletRecord};

/// Namespace under which N-Triples IRIs are minted.
pub const BASE_IRI: &str = "http://kgen.example.org/";

/// Everything outside RFC 3986 "unreserved" gets percent-encoded.
const IRI_UNSAFE: &AsciiSet = &NON_ALPHANUMERIC.remove(b'-').remove(b'.').remove(b'_').remove(b'~');

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    /// Pretty JSON with `entities`, `predicates`, `triplets` and `stage`.
    Document,
    NTriples,
}

/// On-disk shape of a graph. Field names are part of the external interface.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct GraphDocument {
    entities: Vec<EntityRecord>,
    predicates: Vec<PredicateRecord>,
    triplets: Vec<TripletRecord>,
    stage: GraphStage,
}

impl From<KnowledgeGraph> for GraphDocument {
    fn from(g: KnowledgeGraph) -> Self {
        Self {
            entities: g.entities.into_values().collect(),
            predicates: g.predicates.into_values().collect(),
            triplets: g.triplets.into_values().collect(),
            stage: g.stage,
        }
    }
}

impl TryFrom<GraphDocument> for KnowledgeGraph {
    type Error = ModelError;

    fn try_from(doc: GraphDocument) -> Result<Self, Self::Error> {
        let mut graph = KnowledgeGraph::new(doc.stage);
        for e in doc.entities {
            if graph.entities.insert(e.id.clone(), e.clone()).is_some() {
                return Err(ModelError::DuplicateId {
                    kind: "entity",
                    id: e.id.to_string(),
                });
            }
        }
        for p in doc.predicates {
            if graph.predicates.insert(p.id.clone(), p.clone()).is_some() {
                return Err(ModelError::DuplicateId {
                    kind: "predicate",
                    id: p.id.to_string(),
                });
            }
        }
        for t in doc.triplets {
            if graph.triplets.insert(t.id.clone(), t.clone()).is_some() {
                return Err(ModelError::DuplicateId {
                    kind: "triplet",
                    id: t.id.to_string(),
                });
            }
        }
        graph.check_integrity()?;
        Ok(graph)
    }
}

pub fn export_graph(graph: &KnowledgeGraph, format: ExportFormat) -> Vec<u8> {
    match format {
        ExportFormat::Document => {
            let mut out = serde_json::to_vec_pretty(graph).expect("graph serializes");
            out.push(b'\n');
            out
        }
        ExportFormat::NTriples => graph_ntriples(graph).into_bytes(),
    }
}

pub fn import_graph(bytes: &[u8]) -> Result<KnowledgeGraph, serde_json::Error> {
    serde_json::from_slice(bytes)
}

fn graph_ntriples(graph: &KnowledgeGraph) -> String {
    // Entities sharing a label get an id suffix so distinct records never
    // collapse onto one IRI.
    let mut label_counts: HashMap<&str, usize> = HashMap::new();
    for e in graph.entities() {
        *label_counts.entry(e.label.as_str()).or_default() += 1;
    }
    let entity_iri: BTreeMap<&EntityId, String> = graph
        .entities()
        .map(|e| {
            let mut local = encode(&e.label);
            if label_counts[e.label.as_str()] > 1 {
                local.push('_');
                local.push_str(e.id.as_str());
            }
            (&e.id, format!("{BASE_IRI}entity/{local}"))
        })
        .collect();

    let mut writer = NTriplesWriter::default();
    for t in graph.triplets() {
        let predicate = graph.predicate(&t.predicate).expect("integrity checked");
        writer.push(
            &entity_iri[&t.subject],
            &format!("{BASE_IRI}predicate/{}", encode(&predicate.label)),
            &entity_iri[&t.object],
        );
    }
    writer.finish()
}

/// Percent-encodes a label into an IRI-safe local name.
pub(crate) fn encode(label: &str) -> String {
    utf8_percent_encode(label.trim(), IRI_UNSAFE).to_string()
}

/// Formats one `<s> <p> <o> .` line from absolute IRIs.
pub fn ntriples_line(subject: &str, predicate: &str, object: &str) -> String {
    format!("<{subject}> <{predicate}> <{object}> .\n")
}

/// Accumulates N-Triples lines in insertion order.
#[derive(Debug, Default)]
pub struct NTriplesWriter {
    out: String,
}

impl NTriplesWriter {
    pub fn push(&mut self, subject: &str, predicate: &str, object: &str) {
        let _ = write!(self.out, "{}", ntriples_line(subject, predicate, object));
    }

    /// Adds a statement between two labels under the given path segments of
    /// the base namespace.
    pub fn push_labels(&mut self, kind: &str, subject: &str, predicate: &str, object: &str) {
        self.push(
            &format!("{BASE_IRI}{kind}/{}", encode(subject)),
            &format!("{BASE_IRI}predicate/{}", encode(predicate)),
            &format!("{BASE_IRI}{kind}/{}", encode(object)),
        );
    }

    pub fn finish(self) -> String {
        self.out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ProvenanceRef, TripletRecord};

    fn fixture() -> KnowledgeGraph {
        let mut g = KnowledgeGraph::default();
        let s = g
            .add_entity(
                EntityRecord::new("Cagliari", "The capital of Sardinia", ["City"])
                    .with_provenance(ProvenanceRef::chunk("cagliari", 0)),
            )
            .unwrap();
        let o = g
            .add_entity(EntityRecord::new(
                "Bastione di Santa Croce",
                "A panoramic terrace in Cagliari",
                ["Landmark"],
            ))
            .unwrap();
        let p = g
            .add_predicate(PredicateRecord::new(
                "has landmark",
                Some("Expresses a relationship between a place and a landmark located in it".into()),
            ))
            .unwrap();
        g.add_triplet(TripletRecord::new(s, p, o)).unwrap();
        g
    }

    #[test]
    fn empty_graph_has_empty_ntriples() {
        assert!(export_graph(&KnowledgeGraph::default(), ExportFormat::NTriples).is_empty());
    }

    #[test]
    fn one_triplet_one_line() {
        let out = String::from_utf8(export_graph(&fixture(), ExportFormat::NTriples)).unwrap();
        assert_eq!(
            out,
            "<http://kgen.example.org/entity/Cagliari> \
             <http://kgen.example.org/predicate/has%20landmark> \
             <http://kgen.example.org/entity/Bastione%20di%20Santa%20Croce> .\n"
        );
    }

    #[test]
    fn exports_are_byte_stable() {
        let g = fixture();
        for format in [ExportFormat::Document, ExportFormat::NTriples] {
            assert_eq!(export_graph(&g, format), export_graph(&g.clone(), format));
        }
    }

    #[test]
    fn document_round_trips() {
        let g = fixture();
        let back = import_graph(&export_graph(&g, ExportFormat::Document)).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn document_has_stable_top_level_keys() {
        let v: serde_json::Value = serde_json::from_slice(&export_graph(&fixture(), ExportFormat::Document)).unwrap();
        let mut keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
        keys.sort();
        assert_eq!(keys, ["entities", "predicates", "stage", "triplets"]);
        assert_eq!(v["stage"], "candidate");
    }

    #[test]
    fn import_rejects_dangling_endpoints() {
        let mut v: serde_json::Value =
            serde_json::from_slice(&export_graph(&fixture(), ExportFormat::Document)).unwrap();
        v["entities"].as_array_mut().unwrap().pop();
        assert!(import_graph(&serde_json::to_vec(&v).unwrap()).is_err());
    }

    #[test]
    fn unicode_labels_are_percent_encoded() {
        assert_eq!(encode("Poetto à"), "Poetto%20%C3%A0");
        assert_eq!(encode("a/b#c"), "a%2Fb%23c");
    }
}
