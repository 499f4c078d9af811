//! Candidate triplet extraction.
//!
//! A document is split into chunks, entities are extracted chunk by chunk
//! into one per-document entity set, and then every entity takes a turn as
//! the focus of a four-step iteration:
//!
//! 1. phrase selection: the focus entity's own description is the excerpt;
//! 2. mention recognition: which listed entities the excerpt mentions;
//! 3. relation extraction: triplets among the mentioned entities only;
//! 4. predicate description: a generic description per predicate.
//!
//! Each step is a small prompt over a small context. Responses go through
//! [`validate_response`]; echoed list numbers tie every triplet endpoint back
//! to a known entity, so fragments never reference unknown entities.

pub mod validate;

pub use validate::{
    label_key, validate_response, AcceptedLine, NumberedRef, ParsedLine, RejectReason, RejectedLine, ValidationReport,
};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chunker::{split, summarize_chunks, Chunk, ChunkError, SplitConfig};
use crate::llm::{Gateway, GatewayError};
use crate::model::{EntityId, EntityRecord, KnowledgeGraph, ModelError, PredicateRecord, ProvenanceRef, TripletRecord};
use crate::prompting::{ask_validated, DiagnosticLog};
use crate::prompts::{numbered_list, PromptError, PromptSet, TaskId};

#[derive(Debug, Error)]
pub enum ExtractError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Chunk(#[from] ChunkError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractorConfig {
    /// Entities per mention-recognition call.
    pub mention_batch_size: usize,
}

impl Default for ExtractorConfig {
    fn default() -> Self {
        Self { mention_batch_size: 40 }
    }
}

/// The focus of one triplet-extraction iteration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FocusContext {
    pub focus: EntityId,
    pub excerpt: String,
    /// Entities mentioned in the excerpt; always contains `focus`.
    pub mentioned: Vec<EntityId>,
}

/// A relation between two entities of a focus context.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct ExtractedRelation {
    pub subject: EntityId,
    pub predicate: String,
    pub object: EntityId,
}

pub struct Extractor<'a> {
    gateway: &'a Gateway,
    prompts: &'a PromptSet,
    split: SplitConfig,
    config: ExtractorConfig,
    log: &'a DiagnosticLog,
}

impl<'a> Extractor<'a> {
    pub fn new(
        gateway: &'a Gateway,
        prompts: &'a PromptSet,
        split: SplitConfig,
        config: ExtractorConfig,
        log: &'a DiagnosticLog,
    ) -> Self {
        Self {
            gateway,
            prompts,
            split,
            config,
            log,
        }
    }

    /// Entities of one chunk, with provenance pointing at it. Blank chunks
    /// are refused without a call.
    pub fn extract_entities(&self, document_id: &str, chunk: &Chunk) -> Result<Vec<EntityRecord>, ExtractError> {
        let text = chunk.prompt_text();
        if chunk.text.trim().is_empty() {
            return Ok(Vec::new());
        }
        let template = self.prompts.get(TaskId::EntityExtraction);
        let messages = template.render(&[("text", &text)])?;
        let Some(report) = ask_validated(self.gateway, template, messages, None, document_id, self.log)? else {
            return Ok(Vec::new());
        };
        Ok(report
            .parsed()
            .filter_map(|line| match line {
                ParsedLine::Entity {
                    label,
                    description,
                    types,
                    ..
                } => Some(
                    EntityRecord::new(label.as_str(), description.as_str(), types.iter().map(String::as_str))
                        .with_provenance(ProvenanceRef::chunk(document_id, chunk.index)),
                ),
                _ => None,
            })
            .collect())
    }

    /// The excerpt for a focus entity is its own description; `None` means
    /// the entity cannot be a focus.
    pub fn select_phrase(focus: &EntityRecord) -> Option<String> {
        let description = focus.description.trim();
        (!description.is_empty()).then(|| description.to_string())
    }

    /// Entities of `all` mentioned in `excerpt`, in the order of `all`.
    pub fn recognize_mentions(
        &self,
        scope: &str,
        focus: &EntityId,
        excerpt: &str,
        all: &[EntityRecord],
    ) -> Result<Vec<EntityId>, ExtractError> {
        let template = self.prompts.get(TaskId::MentionRecognition);
        let mut mentioned = Vec::new();
        for batch in all.chunks(self.config.mention_batch_size.max(1)) {
            let labels: Vec<String> = batch.iter().map(|e| e.label.clone()).collect();
            let messages = template.render(&[("entities", &numbered_list(&labels)), ("excerpt", excerpt)])?;
            let Some(report) = ask_validated(self.gateway, template, messages, Some(&labels), scope, self.log)? else {
                continue;
            };
            for line in report.parsed() {
                if let ParsedLine::Mention { entry, mentioned: true } = line {
                    mentioned.push(batch[entry.number - 1].id.clone());
                }
            }
        }
        if !mentioned.contains(focus) {
            mentioned.push(focus.clone());
        }
        let order: BTreeMap<&EntityId, usize> = all.iter().enumerate().map(|(i, e)| (&e.id, i)).collect();
        mentioned.sort_by_key(|id| order.get(id).copied().unwrap_or(usize::MAX));
        mentioned.dedup();
        Ok(mentioned)
    }

    /// Triplets among `subset`; endpoints outside it are rejected by the
    /// consistency check. Fewer than two entities means no call.
    pub fn extract_relations(
        &self,
        scope: &str,
        excerpt: &str,
        subset: &[&EntityRecord],
    ) -> Result<Vec<ExtractedRelation>, ExtractError> {
        if subset.len() < 2 {
            return Ok(Vec::new());
        }
        let template = self.prompts.get(TaskId::RelationExtraction);
        let labels: Vec<String> = subset.iter().map(|e| e.label.clone()).collect();
        let listed: Vec<String> = labels
            .iter()
            .enumerate()
            .map(|(i, l)| format!("({}) {l}", i + 1))
            .collect();
        let messages = template.render(&[("excerpt", excerpt), ("entities", &listed.join("\n"))])?;
        let Some(report) = ask_validated(self.gateway, template, messages, Some(&labels), scope, self.log)? else {
            return Ok(Vec::new());
        };
        let mut relations: Vec<ExtractedRelation> = report
            .parsed()
            .filter_map(|line| match line {
                ParsedLine::Relation {
                    subject,
                    predicate,
                    object,
                } => Some(ExtractedRelation {
                    subject: subset[subject.number - 1].id.clone(),
                    predicate: predicate.clone(),
                    object: subset[object.number - 1].id.clone(),
                }),
                _ => None,
            })
            .collect();
        relations.dedup();
        Ok(relations)
    }

    /// One generic description per distinct predicate label. Predicates the
    /// model leaves undescribed are simply absent from the map.
    pub fn describe_predicates(
        &self,
        scope: &str,
        excerpt: &str,
        triplets: &[(String, String, String)],
    ) -> Result<BTreeMap<String, String>, ExtractError> {
        if triplets.is_empty() {
            return Ok(BTreeMap::new());
        }
        let template = self.prompts.get(TaskId::PredicateDescription);
        let mut predicates: Vec<String> = Vec::new();
        for (_, p, _) in triplets {
            if !predicates.iter().any(|q| label_key(q) == label_key(p)) {
                predicates.push(p.clone());
            }
        }
        let listed = triplets
            .iter()
            .map(|(s, p, o)| format!("{s}; {p}; {o}"))
            .collect::<Vec<_>>()
            .join("\n");
        let messages = template.render(&[("excerpt", excerpt), ("triplets", &listed)])?;
        let Some(report) = ask_validated(self.gateway, template, messages, Some(&predicates), scope, self.log)? else {
            return Ok(BTreeMap::new());
        };
        let mut out = BTreeMap::new();
        for line in report.parsed() {
            if let ParsedLine::PredicateDescription { predicate, description } = line {
                let key = label_key(predicate);
                if let Some(original) = predicates.iter().find(|p| label_key(p) == key) {
                    out.insert(original.clone(), description.clone());
                }
            }
        }
        Ok(out)
    }

    /// Runs the whole extraction for one document.
    pub fn extract_document(&self, document_id: &str, text: &str) -> Result<KnowledgeGraph, ExtractError> {
        let mut fragment = KnowledgeGraph::default();
        let mut chunks = split(text, &self.split, self.gateway.tokenizer().as_ref())?;
        summarize_chunks(
            self.gateway,
            self.prompts,
            &mut chunks,
            self.split.summary_budget_tokens,
        )?;
        for chunk in &chunks {
            for entity in self.extract_entities(document_id, chunk)? {
                fragment.add_entity(entity)?;
            }
        }

        let entities: Vec<EntityRecord> = fragment.entities().cloned().collect();
        for focus in &entities {
            let Some(context) = self.focus_context(document_id, focus, &entities)? else {
                continue;
            };
            self.extract_focus(document_id, focus, &context, &mut fragment)?;
        }
        Ok(fragment)
    }

    fn focus_context(
        &self,
        document_id: &str,
        focus: &EntityRecord,
        entities: &[EntityRecord],
    ) -> Result<Option<FocusContext>, ExtractError> {
        let Some(excerpt) = Self::select_phrase(focus) else {
            return Ok(None);
        };
        let scope = format!("{document_id}#{}", focus.id);
        let mentioned = self.recognize_mentions(&scope, &focus.id, &excerpt, entities)?;
        Ok(Some(FocusContext {
            focus: focus.id.clone(),
            excerpt,
            mentioned,
        }))
    }

    fn extract_focus(
        &self,
        document_id: &str,
        focus: &EntityRecord,
        context: &FocusContext,
        fragment: &mut KnowledgeGraph,
    ) -> Result<(), ExtractError> {
        let scope = format!("{document_id}#{}", focus.id);
        let subset: Vec<&EntityRecord> = context.mentioned.iter().filter_map(|id| fragment.entity(id)).collect();
        let relations = self.extract_relations(&scope, &context.excerpt, &subset)?;
        if relations.is_empty() {
            return Ok(());
        }
        let label = |id: &EntityId| fragment.entity(id).map(|e| e.label.clone()).unwrap_or_default();
        let rendered: Vec<(String, String, String)> = relations
            .iter()
            .map(|r| (label(&r.subject), r.predicate.clone(), label(&r.object)))
            .collect();
        let descriptions = self.describe_predicates(&scope, &context.excerpt, &rendered)?;
        let chunk_index = focus.provenance.first().map(|p| p.chunk_index).unwrap_or(0);
        for relation in relations {
            let predicate = fragment.add_predicate(PredicateRecord::new(
                relation.predicate.as_str(),
                descriptions.get(&relation.predicate).cloned(),
            ))?;
            fragment.add_triplet(
                TripletRecord::new(relation.subject, predicate, relation.object)
                    .with_provenance(ProvenanceRef::chunk(document_id, chunk_index).focused(focus.id.clone())),
            )?;
        }
        Ok(())
    }
}
