//! Domain records and the knowledge-graph container.
//!
//! Identifiers are content digests. At the candidate stage an entity id is
//! derived from `(label, description, sorted types)` and a predicate id from
//! `(label, description)`, so re-running extraction over the same text yields
//! the same ids. The resolver re-keys everything to digests of the member ids
//! of each equivalence group.
//!
//! Entities, predicates and triplets are kept in ordered maps keyed by id,
//! which makes every serialization sorted and byte-stable.

mod export;

pub(crate) use export::encode;
pub use export::{export_graph, import_graph, ntriples_line, ExportFormat, NTriplesWriter, BASE_IRI};

use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::digest::{digest_fields, short_id};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ModelError {
    #[error("label must not be empty")]
    EmptyLabel,
    #[error("triplet endpoint {0} does not reference an entity in this graph")]
    DanglingEndpoint(EntityId),
    #[error("triplet predicate {0} does not reference a predicate in this graph")]
    DanglingPredicate(PredicateId),
    #[error("triplet subject and object are the same entity {0}")]
    SelfLoop(EntityId),
    #[error("duplicate {kind} id {id} in graph document")]
    DuplicateId { kind: &'static str, id: String },
    #[error("record {id} does not match its stored content digest")]
    IdMismatch { id: String },
}

macro_rules! id_newtype {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(String);

        impl $name {
            pub fn new(raw: impl Into<String>) -> Self {
                Self(raw.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }
    };
}

id_newtype!(
    /// Stable entity identifier.
    EntityId
);
id_newtype!(
    /// Stable predicate identifier.
    PredicateId
);
id_newtype!(
    /// Identifier of a `(subject, predicate, object)` statement.
    TripletId
);

/// Where a record came from.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ProvenanceRef {
    pub document_id: String,
    pub chunk_index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub focus_entity: Option<EntityId>,
}

impl ProvenanceRef {
    pub fn chunk(document_id: impl Into<String>, chunk_index: usize) -> Self {
        Self {
            document_id: document_id.into(),
            chunk_index,
            focus_entity: None,
        }
    }

    pub fn focused(mut self, focus: EntityId) -> Self {
        self.focus_entity = Some(focus);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityRecord {
    pub id: EntityId,
    pub label: String,
    pub description: String,
    pub types: Vec<String>,
    #[serde(default)]
    pub provenance: Vec<ProvenanceRef>,
}

impl EntityRecord {
    /// Builds a candidate-stage record whose id is the content digest.
    pub fn new(
        label: impl Into<String>,
        description: impl Into<String>,
        types: impl IntoIterator<Item = impl Into<String>>,
    ) -> Self {
        let label = label.into().trim().to_string();
        let description = description.into().trim().to_string();
        let types: Vec<String> = types
            .into_iter()
            .map(|t| t.into().trim().to_string())
            .filter(|t| !t.is_empty())
            .collect();
        let id = Self::content_id(&label, &description, &types);
        Self {
            id,
            label,
            description,
            types,
            provenance: Vec::new(),
        }
    }

    pub fn content_id(label: &str, description: &str, types: &[String]) -> EntityId {
        let mut sorted = types.to_vec();
        sorted.sort();
        let digest = digest_fields([label, description, &sorted.join("\u{1e}")]);
        EntityId(short_id("e-", &digest))
    }

    pub fn with_provenance(mut self, provenance: ProvenanceRef) -> Self {
        self.provenance.push(provenance);
        self
    }

    fn same_content(&self, other: &EntityRecord) -> bool {
        let mut a = self.types.clone();
        let mut b = other.types.clone();
        a.sort();
        b.sort();
        self.label == other.label && self.description == other.description && a == b
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredicateRecord {
    pub id: PredicateId,
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
}

impl PredicateRecord {
    pub fn new(label: impl Into<String>, description: Option<String>) -> Self {
        let label = label.into().trim().to_string();
        let description = description.map(|d| d.trim().to_string()).filter(|d| !d.is_empty());
        let digest = digest_fields([label.as_str(), description.as_deref().unwrap_or("")]);
        Self {
            id: PredicateId(short_id("p-", &digest)),
            label,
            description,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TripletRecord {
    pub id: TripletId,
    pub subject: EntityId,
    pub predicate: PredicateId,
    pub object: EntityId,
    #[serde(default)]
    pub provenance: Vec<ProvenanceRef>,
}

impl TripletRecord {
    pub fn new(subject: EntityId, predicate: PredicateId, object: EntityId) -> Self {
        let id = Self::statement_id(&subject, &predicate, &object);
        Self {
            id,
            subject,
            predicate,
            object,
            provenance: Vec::new(),
        }
    }

    pub fn statement_id(s: &EntityId, p: &PredicateId, o: &EntityId) -> TripletId {
        let digest = digest_fields([s.as_str(), p.as_str(), o.as_str()]);
        TripletId(short_id("t-", &digest))
    }

    pub fn with_provenance(mut self, provenance: ProvenanceRef) -> Self {
        self.provenance.push(provenance);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GraphStage {
    #[default]
    Candidate,
    Resolved,
}

/// Entities, predicates and entity–entity statements.
///
/// Every mutating method preserves referential integrity: a triplet can only
/// be stored once both endpoints and its predicate exist.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(into = "export::GraphDocument", try_from = "export::GraphDocument")]
pub struct KnowledgeGraph {
    entities: BTreeMap<EntityId, EntityRecord>,
    predicates: BTreeMap<PredicateId, PredicateRecord>,
    triplets: BTreeMap<TripletId, TripletRecord>,
    stage: GraphStage,
}

impl KnowledgeGraph {
    pub fn new(stage: GraphStage) -> Self {
        Self {
            stage,
            ..Self::default()
        }
    }

    pub fn stage(&self) -> GraphStage {
        self.stage
    }

    pub fn set_stage(&mut self, stage: GraphStage) {
        self.stage = stage;
    }

    /// Inserts an entity, returning the id of an existing record with the
    /// same content when there is one. Provenance of duplicates is merged.
    pub fn add_entity(&mut self, entity: EntityRecord) -> Result<EntityId, ModelError> {
        if entity.label.trim().is_empty() {
            return Err(ModelError::EmptyLabel);
        }
        if let Some(existing) = self.entities.values_mut().find(|e| e.same_content(&entity)) {
            merge_provenance(&mut existing.provenance, entity.provenance);
            return Ok(existing.id.clone());
        }
        match self.entities.entry(entity.id.clone()) {
            Entry::Occupied(mut slot) => {
                // Same id with different content: the id was assigned by a
                // later stage, so the id wins and provenance is merged.
                merge_provenance(&mut slot.get_mut().provenance, entity.provenance);
                Ok(slot.key().clone())
            }
            Entry::Vacant(slot) => {
                let id = slot.key().clone();
                let mut entity = entity;
                entity.provenance.sort();
                entity.provenance.dedup();
                slot.insert(entity);
                Ok(id)
            }
        }
    }

    pub fn add_predicate(&mut self, predicate: PredicateRecord) -> Result<PredicateId, ModelError> {
        if predicate.label.trim().is_empty() {
            return Err(ModelError::EmptyLabel);
        }
        let id = predicate.id.clone();
        self.predicates.entry(id.clone()).or_insert(predicate);
        Ok(id)
    }

    /// Stores a statement; an identical `(s, p, o)` only gains provenance.
    pub fn add_triplet(&mut self, triplet: TripletRecord) -> Result<TripletId, ModelError> {
        for endpoint in [&triplet.subject, &triplet.object] {
            if !self.entities.contains_key(endpoint) {
                return Err(ModelError::DanglingEndpoint(endpoint.clone()));
            }
        }
        if !self.predicates.contains_key(&triplet.predicate) {
            return Err(ModelError::DanglingPredicate(triplet.predicate.clone()));
        }
        if triplet.subject == triplet.object {
            return Err(ModelError::SelfLoop(triplet.subject.clone()));
        }
        let id = TripletRecord::statement_id(&triplet.subject, &triplet.predicate, &triplet.object);
        match self.triplets.entry(id.clone()) {
            Entry::Occupied(mut slot) => {
                merge_provenance(&mut slot.get_mut().provenance, triplet.provenance);
            }
            Entry::Vacant(slot) => {
                let mut triplet = triplet;
                triplet.id = id.clone();
                triplet.provenance.sort();
                triplet.provenance.dedup();
                slot.insert(triplet);
            }
        }
        Ok(id)
    }

    /// Merges another graph's records into this one.
    pub fn absorb(&mut self, other: KnowledgeGraph) -> Result<(), ModelError> {
        let mut remap = BTreeMap::new();
        for (old, entity) in other.entities {
            let new = self.add_entity(entity)?;
            remap.insert(old, new);
        }
        for (_, predicate) in other.predicates {
            self.add_predicate(predicate)?;
        }
        for (_, mut triplet) in other.triplets {
            triplet.subject = remap[&triplet.subject].clone();
            triplet.object = remap[&triplet.object].clone();
            self.add_triplet(triplet)?;
        }
        Ok(())
    }

    pub fn entity(&self, id: &EntityId) -> Option<&EntityRecord> {
        self.entities.get(id)
    }

    pub fn predicate(&self, id: &PredicateId) -> Option<&PredicateRecord> {
        self.predicates.get(id)
    }

    pub fn triplet(&self, id: &TripletId) -> Option<&TripletRecord> {
        self.triplets.get(id)
    }

    pub fn entities(&self) -> impl ExactSizeIterator<Item = &EntityRecord> {
        self.entities.values()
    }

    pub fn predicates(&self) -> impl ExactSizeIterator<Item = &PredicateRecord> {
        self.predicates.values()
    }

    pub fn triplets(&self) -> impl ExactSizeIterator<Item = &TripletRecord> {
        self.triplets.values()
    }

    pub fn entity_count(&self) -> usize {
        self.entities.len()
    }

    pub fn triplet_count(&self) -> usize {
        self.triplets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty() && self.predicates.is_empty() && self.triplets.is_empty()
    }

    /// Checks every invariant; used on import.
    pub fn check_integrity(&self) -> Result<(), ModelError> {
        for (id, e) in &self.entities {
            if e.label.trim().is_empty() {
                return Err(ModelError::EmptyLabel);
            }
            if &e.id != id {
                return Err(ModelError::IdMismatch { id: id.to_string() });
            }
        }
        for (id, t) in &self.triplets {
            for endpoint in [&t.subject, &t.object] {
                if !self.entities.contains_key(endpoint) {
                    return Err(ModelError::DanglingEndpoint(endpoint.clone()));
                }
            }
            if !self.predicates.contains_key(&t.predicate) {
                return Err(ModelError::DanglingPredicate(t.predicate.clone()));
            }
            if t.subject == t.object {
                return Err(ModelError::SelfLoop(t.subject.clone()));
            }
            if &TripletRecord::statement_id(&t.subject, &t.predicate, &t.object) != id {
                return Err(ModelError::IdMismatch { id: id.to_string() });
            }
        }
        Ok(())
    }

    /// Document ids mentioned in any provenance record, sorted.
    pub fn document_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self
            .entities
            .values()
            .flat_map(|e| e.provenance.iter())
            .chain(self.triplets.values().flat_map(|t| t.provenance.iter()))
            .map(|p| p.document_id.clone())
            .collect();
        ids.sort();
        ids.dedup();
        ids
    }
}

fn merge_provenance(into: &mut Vec<ProvenanceRef>, extra: Vec<ProvenanceRef>) {
    into.extend(extra);
    into.sort();
    into.dedup();
}
