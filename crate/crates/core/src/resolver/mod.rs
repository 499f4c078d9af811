//! Entity and predicate resolution.
//!
//! Candidate records are clustered by pairwise similarity, each cluster is
//! split by the model into groups of truly equal items, and each group is
//! collapsed into one record under a label chosen by the model. Triplets are
//! rewritten onto the resolved records; statements that become self-loops
//! are dropped.

pub mod cluster;
pub mod embedding;
pub mod similarity;

pub use cluster::{build_clusters, split_oversized, Edge, UnionFind};
pub use embedding::{
    cosine, EmbedError, EmbeddingConfig, EmbeddingKind, EmbeddingProvider, RemoteEmbedder, StubEmbedder,
};
pub use similarity::{
    description_similarity, embedding_similarity, entity_score, label_similarity, levenshtein, predicate_score,
    similar_entities, similar_predicates, type_similarity, types_similarity, DescriptionScore, SimilarityWeights,
    Thresholds,
};

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::digest::{digest_fields, short_id};
use crate::extractor::ParsedLine;
use crate::llm::{Gateway, GatewayError};
use crate::model::{
    EntityId, EntityRecord, GraphStage, KnowledgeGraph, ModelError, PredicateId, PredicateRecord, ProvenanceRef,
    TripletRecord,
};
use crate::prompting::{ask_validated, DiagnosticLog};
use crate::prompts::{PromptError, PromptSet, TaskId};

pub const DEFAULT_MAX_CLUSTER_SIZE: usize = 30;

#[derive(Debug, Error)]
pub enum ResolveError {
    #[error("invalid resolver configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Embedding(#[from] EmbedError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResolverConfig {
    pub weights: SimilarityWeights,
    pub thresholds: Thresholds,
    pub max_cluster_size: usize,
}

impl Default for ResolverConfig {
    fn default() -> Self {
        Self {
            weights: SimilarityWeights::default(),
            thresholds: Thresholds::default(),
            max_cluster_size: DEFAULT_MAX_CLUSTER_SIZE,
        }
    }
}

impl ResolverConfig {
    pub fn validate(&self) -> Result<(), ResolveError> {
        self.weights.validate().map_err(ResolveError::InvalidConfig)?;
        self.thresholds.validate().map_err(ResolveError::InvalidConfig)?;
        if self.max_cluster_size < 2 {
            return Err(ResolveError::InvalidConfig(
                "max_cluster_size must be at least 2".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ItemKind {
    Entity,
    Predicate,
}

impl ItemKind {
    fn noun(self) -> &'static str {
        match self {
            ItemKind::Entity => "entity",
            ItemKind::Predicate => "relation",
        }
    }
}

/// What the model sees of a cluster member.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterItem {
    pub id: String,
    pub label: String,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupReport {
    pub members: Vec<String>,
    pub canonical_label: String,
    pub resolved_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterReport {
    pub members: Vec<String>,
    pub groups: Vec<GroupReport>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ResolutionReport {
    /// Clusters with at least two members.
    pub entity_clusters: Vec<ClusterReport>,
    pub predicate_clusters: Vec<ClusterReport>,
    pub entities_before: usize,
    pub entities_after: usize,
    pub predicates_before: usize,
    pub predicates_after: usize,
    pub triplets_before: usize,
    pub triplets_after: usize,
    pub dropped_self_loops: usize,
    /// Pairs scored without a description on at least one side.
    pub degraded_pairs: usize,
}

impl ResolutionReport {
    /// Resolved entity ids per similarity cluster, singletons included,
    /// in the order the schema stage consumes them.
    pub fn resolved_entity_clusters(&self, graph: &KnowledgeGraph) -> Vec<Vec<EntityId>> {
        let mut covered = std::collections::BTreeSet::new();
        let mut out: Vec<Vec<EntityId>> = Vec::new();
        for c in &self.entity_clusters {
            let mut ids: Vec<EntityId> = c.groups.iter().map(|g| EntityId::new(g.resolved_id.clone())).collect();
            ids.sort();
            ids.dedup();
            ids.retain(|id| graph.entity(id).is_some());
            covered.extend(ids.iter().cloned());
            if !ids.is_empty() {
                out.push(ids);
            }
        }
        out.extend(
            graph
                .entities()
                .filter(|e| !covered.contains(&e.id))
                .map(|e| vec![e.id.clone()]),
        );
        out
    }
}

pub struct Resolution {
    pub graph: KnowledgeGraph,
    pub report: ResolutionReport,
}

/// Clusters as item indices, the admitted edges, and the number of pairs
/// scored without an embedding.
pub type Clustering = (Vec<Vec<usize>>, Vec<Edge>, usize);

pub struct Resolver<'a> {
    gateway: &'a Gateway,
    prompts: &'a PromptSet,
    embedder: &'a dyn EmbeddingProvider,
    config: ResolverConfig,
    log: &'a DiagnosticLog,
}

/// Pairwise scores with embeddings computed once per record.
pub struct PairScorer<'a> {
    labels: Vec<&'a str>,
    types: Vec<&'a [String]>,
    embeddings: Vec<Option<Vec<f64>>>,
}

/// All components of one pair score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairScore {
    pub label: f64,
    pub description: f64,
    pub types: f64,
    pub degraded: bool,
}

impl<'a> PairScorer<'a> {
    pub fn new(
        items: &'a [(&'a str, &'a str, &'a [String])],
        embedder: &dyn EmbeddingProvider,
    ) -> Result<Self, EmbedError> {
        let embeddings = items
            .par_iter()
            .map(|(_, d, _)| {
                let d = d.trim();
                if d.is_empty() {
                    Ok(None)
                } else {
                    embedder.embed(d).map(Some)
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            labels: items.iter().map(|(l, _, _)| *l).collect(),
            types: items.iter().map(|(_, _, t)| *t).collect(),
            embeddings,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn score(&self, i: usize, j: usize) -> PairScore {
        let (description, degraded) = match (&self.embeddings[i], &self.embeddings[j]) {
            (Some(a), Some(b)) => (embedding_similarity(a, b), false),
            _ => (0.0, true),
        };
        PairScore {
            label: label_similarity(self.labels[i], self.labels[j]),
            description,
            types: types_similarity(self.types[i], self.types[j]),
            degraded,
        }
    }

    /// Every admitted pair `i < j`, ordered by `(i, j)`, plus the number of
    /// degraded pairs.
    pub fn admitted(&self, admit: impl Fn(&PairScore) -> Option<f64> + Sync) -> (Vec<Edge>, usize) {
        let n = self.len();
        let rows: Vec<(Vec<Edge>, usize)> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut edges = Vec::new();
                let mut degraded = 0;
                for j in i + 1..n {
                    let s = self.score(i, j);
                    degraded += usize::from(s.degraded);
                    if let Some(score) = admit(&s) {
                        edges.push(Edge { i, j, score });
                    }
                }
                (edges, degraded)
            })
            .collect();
        let degraded = rows.iter().map(|r| r.1).sum();
        (rows.into_iter().flat_map(|r| r.0).collect(), degraded)
    }
}

impl<'a> Resolver<'a> {
    pub fn new(
        gateway: &'a Gateway,
        prompts: &'a PromptSet,
        embedder: &'a dyn EmbeddingProvider,
        config: ResolverConfig,
        log: &'a DiagnosticLog,
    ) -> Self {
        Self {
            gateway,
            prompts,
            embedder,
            config,
            log,
        }
    }

    /// Similarity clusters of entities, as indices into `entities`.
    pub fn entity_clusters(&self, entities: &[&EntityRecord]) -> Result<Clustering, ResolveError> {
        let items: Vec<(&str, &str, &[String])> = entities
            .iter()
            .map(|e| (e.label.as_str(), e.description.as_str(), e.types.as_slice()))
            .collect();
        let scorer = PairScorer::new(&items, self.embedder)?;
        let (w, t) = (self.config.weights, self.config.thresholds);
        let (edges, degraded) = scorer.admitted(|s| {
            let score = entity_score(s.label, s.description, &w);
            similar_entities(score, s.types, &t).then_some(score)
        });
        let clusters = split_oversized(
            build_clusters(items.len(), &edges),
            &edges,
            self.config.max_cluster_size,
        );
        Ok((clusters, edges, degraded))
    }

    /// Similarity clusters of predicates, as indices into `predicates`.
    pub fn predicate_clusters(&self, predicates: &[&PredicateRecord]) -> Result<Clustering, ResolveError> {
        let none: &[String] = &[];
        let items: Vec<(&str, &str, &[String])> = predicates
            .iter()
            .map(|p| (p.label.as_str(), p.description.as_deref().unwrap_or(""), none))
            .collect();
        let scorer = PairScorer::new(&items, self.embedder)?;
        let (w, t) = (self.config.weights, self.config.thresholds);
        let (edges, degraded) = scorer.admitted(|s| {
            let score = predicate_score(s.label, s.description, &w);
            similar_predicates(score, &t).then_some(score)
        });
        let clusters = split_oversized(
            build_clusters(items.len(), &edges),
            &edges,
            self.config.max_cluster_size,
        );
        Ok((clusters, edges, degraded))
    }

    /// Splits a cluster into groups of semantically equal items, as indices
    /// into `items`. Items left out by the model, or every item when the
    /// step fails, become singletons.
    pub fn disambiguate(&self, kind: ItemKind, items: &[ClusterItem]) -> Result<Vec<Vec<usize>>, ResolveError> {
        if items.len() < 2 {
            return Ok((0..items.len()).map(|i| vec![i]).collect());
        }
        let template = self.prompts.get(TaskId::ClusterDisambiguation);
        let listed = items
            .iter()
            .enumerate()
            .map(|(n, item)| render_item(n, item))
            .collect::<Vec<_>>()
            .join("\n");
        let messages = template.render(&[("kind", kind.noun()), ("items", &listed)])?;
        let labels: Vec<String> = items.iter().map(|i| i.label.clone()).collect();
        let scope = cluster_scope(kind, items);
        let mut groups: Vec<Vec<usize>> = Vec::new();
        if let Some(report) = ask_validated(self.gateway, template, messages, Some(&labels), &scope, self.log)? {
            for line in report.parsed() {
                if let ParsedLine::Group(members) = line {
                    let mut g: Vec<usize> = members.iter().map(|m| m.number - 1).collect();
                    g.sort_unstable();
                    groups.push(g);
                }
            }
        }
        let mut covered = vec![false; items.len()];
        for g in &groups {
            for &i in g {
                covered[i] = true;
            }
        }
        groups.extend((0..items.len()).filter(|&i| !covered[i]).map(|i| vec![i]));
        groups.sort_by_key(|g| g[0]);
        Ok(groups)
    }

    /// One label for a group of equal items. Singletons keep their label;
    /// when the step fails the lexicographically smallest label is used.
    pub fn shrink(&self, kind: ItemKind, items: &[ClusterItem]) -> Result<String, ResolveError> {
        let fallback = || items.iter().map(|i| i.label.clone()).min().unwrap_or_default();
        if items.len() < 2 {
            return Ok(fallback());
        }
        let template = self.prompts.get(TaskId::ConceptShrinkage);
        let listed = items
            .iter()
            .enumerate()
            .map(|(n, item)| render_item(n, item))
            .collect::<Vec<_>>()
            .join("\n");
        let messages = template.render(&[("kind", kind.noun()), ("items", &listed)])?;
        let scope = cluster_scope(kind, items);
        let chosen = ask_validated(self.gateway, template, messages, None, &scope, self.log)?.and_then(|report| {
            report.parsed().find_map(|line| match line {
                ParsedLine::Label(label) => Some(label.trim().to_string()),
                _ => None,
            })
        });
        Ok(chosen.filter(|l| !l.is_empty()).unwrap_or_else(fallback))
    }

    /// Resolves a whole graph.
    pub fn resolve(&self, graph: &KnowledgeGraph) -> Result<Resolution, ResolveError> {
        self.config.validate()?;
        let mut report = ResolutionReport {
            entities_before: graph.entity_count(),
            predicates_before: graph.predicates().len(),
            triplets_before: graph.triplet_count(),
            ..ResolutionReport::default()
        };
        let mut out = KnowledgeGraph::new(GraphStage::Resolved);

        let entities: Vec<&EntityRecord> = graph.entities().collect();
        let (clusters, _, degraded) = self.entity_clusters(&entities)?;
        report.degraded_pairs += degraded;
        let entity_groups = self.group_clusters(ItemKind::Entity, &clusters, |i| ClusterItem {
            id: entities[i].id.to_string(),
            label: entities[i].label.clone(),
            description: entities[i].description.clone(),
        })?;
        let mut entity_map: BTreeMap<EntityId, EntityId> = BTreeMap::new();
        for (members, groups) in entity_groups {
            let mut cluster_report = ClusterReport {
                members: members.iter().map(|&i| entities[i].id.to_string()).collect(),
                groups: Vec::new(),
            };
            for (group, label) in groups {
                let records: Vec<&EntityRecord> = group.iter().map(|&i| entities[i]).collect();
                let resolved = out.add_entity(merge_entities(&records, &label))?;
                for r in &records {
                    entity_map.insert(r.id.clone(), resolved.clone());
                }
                cluster_report.groups.push(GroupReport {
                    members: records.iter().map(|r| r.id.to_string()).collect(),
                    canonical_label: label,
                    resolved_id: resolved.to_string(),
                });
            }
            if cluster_report.members.len() > 1 {
                report.entity_clusters.push(cluster_report);
            }
        }

        let predicates: Vec<&PredicateRecord> = graph.predicates().collect();
        let (clusters, _, degraded) = self.predicate_clusters(&predicates)?;
        report.degraded_pairs += degraded;
        let predicate_groups = self.group_clusters(ItemKind::Predicate, &clusters, |i| ClusterItem {
            id: predicates[i].id.to_string(),
            label: predicates[i].label.clone(),
            description: predicates[i].description.clone().unwrap_or_default(),
        })?;
        let mut predicate_map: BTreeMap<PredicateId, PredicateId> = BTreeMap::new();
        for (members, groups) in predicate_groups {
            let mut cluster_report = ClusterReport {
                members: members.iter().map(|&i| predicates[i].id.to_string()).collect(),
                groups: Vec::new(),
            };
            for (group, label) in groups {
                let records: Vec<&PredicateRecord> = group.iter().map(|&i| predicates[i]).collect();
                let resolved = out.add_predicate(merge_predicates(&records, &label))?;
                for r in &records {
                    predicate_map.insert(r.id.clone(), resolved.clone());
                }
                cluster_report.groups.push(GroupReport {
                    members: records.iter().map(|r| r.id.to_string()).collect(),
                    canonical_label: label,
                    resolved_id: resolved.to_string(),
                });
            }
            if cluster_report.members.len() > 1 {
                report.predicate_clusters.push(cluster_report);
            }
        }

        for t in graph.triplets() {
            let (s, o) = (entity_map[&t.subject].clone(), entity_map[&t.object].clone());
            if s == o {
                report.dropped_self_loops += 1;
                continue;
            }
            let mut rewritten = TripletRecord::new(s, predicate_map[&t.predicate].clone(), o);
            rewritten.provenance = t.provenance.clone();
            out.add_triplet(rewritten)?;
        }

        report.entities_after = out.entity_count();
        report.predicates_after = out.predicates().len();
        report.triplets_after = out.triplet_count();
        Ok(Resolution { graph: out, report })
    }

    /// Disambiguates and labels every cluster. Clusters are independent, so
    /// they run in parallel; output keeps cluster order.
    #[allow(clippy::type_complexity)]
    fn group_clusters(
        &self,
        kind: ItemKind,
        clusters: &[Vec<usize>],
        item: impl Fn(usize) -> ClusterItem + Sync,
    ) -> Result<Vec<(Vec<usize>, Vec<(Vec<usize>, String)>)>, ResolveError> {
        clusters
            .par_iter()
            .map(|members| {
                let items: Vec<ClusterItem> = members.iter().map(|&i| item(i)).collect();
                let mut labelled = Vec::new();
                for group in self.disambiguate(kind, &items)? {
                    let group_items: Vec<ClusterItem> = group.iter().map(|&g| items[g].clone()).collect();
                    let label = self.shrink(kind, &group_items)?;
                    labelled.push((group.iter().map(|&g| members[g]).collect(), label));
                }
                Ok((members.clone(), labelled))
            })
            .collect()
    }
}

fn render_item(n: usize, item: &ClusterItem) -> String {
    if item.description.trim().is_empty() {
        format!("({}) {}", n + 1, item.label)
    } else {
        format!("({}) {}\n    {}", n + 1, item.label, item.description.trim())
    }
}

fn cluster_scope(kind: ItemKind, items: &[ClusterItem]) -> String {
    format!(
        "{}-cluster:{}",
        kind.noun(),
        items.first().map_or("", |i| i.id.as_str())
    )
}

fn group_id(prefix: &str, members: &[&str]) -> String {
    let mut sorted = members.to_vec();
    sorted.sort_unstable();
    short_id(prefix, &digest_fields(sorted))
}

/// Longest description, ties broken by the smaller string.
fn longest<'a>(descriptions: impl Iterator<Item = &'a str>) -> Option<&'a str> {
    descriptions
        .filter(|d| !d.trim().is_empty())
        .min_by(|a, b| b.chars().count().cmp(&a.chars().count()).then(a.cmp(b)))
}

/// Collapses a group into one entity. A singleton keeps its record.
pub fn merge_entities(records: &[&EntityRecord], label: &str) -> EntityRecord {
    if let [only] = records {
        return (*only).clone();
    }
    let mut sorted = records.to_vec();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    let mut types: Vec<String> = Vec::new();
    for t in sorted.iter().flat_map(|r| r.types.iter()) {
        if !types.iter().any(|u| u.to_lowercase() == t.to_lowercase()) {
            types.push(t.clone());
        }
    }
    let mut provenance: Vec<ProvenanceRef> = sorted.iter().flat_map(|r| r.provenance.iter().cloned()).collect();
    provenance.sort();
    provenance.dedup();
    let ids: Vec<&str> = sorted.iter().map(|r| r.id.as_str()).collect();
    EntityRecord {
        id: EntityId::new(group_id("e-", &ids)),
        label: label.trim().to_string(),
        description: longest(sorted.iter().map(|r| r.description.as_str()))
            .unwrap_or("")
            .to_string(),
        types,
        provenance,
    }
}

/// Collapses a group into one predicate. A singleton keeps its record.
pub fn merge_predicates(records: &[&PredicateRecord], label: &str) -> PredicateRecord {
    if let [only] = records {
        return (*only).clone();
    }
    let ids: Vec<&str> = records.iter().map(|r| r.id.as_str()).collect();
    PredicateRecord {
        id: PredicateId::new(group_id("p-", &ids)),
        label: label.trim().to_string(),
        description: longest(records.iter().filter_map(|r| r.description.as_deref())).map(str::to_string),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn merged_entity_takes_longest_description_and_union_of_types() {
        let a = EntityRecord::new("car", "A road vehicle", ["Vehicle"]);
        let b = EntityRecord::new("automobile", "A road vehicle with four wheels", ["vehicle", "Machine"]);
        let m = merge_entities(&[&a, &b], "car");
        assert_eq!(m.label, "car");
        assert_eq!(m.description, "A road vehicle with four wheels");
        assert_eq!(m.types.len(), 2);
        assert_eq!(merge_entities(&[&b, &a], "car").id, m.id);
    }

    #[test]
    fn singleton_group_is_unchanged() {
        let a = EntityRecord::new("Cagliari", "A city", ["City"]);
        assert_eq!(merge_entities(&[&a], "whatever"), a);
    }

    #[test]
    fn merged_predicate_without_descriptions_has_none() {
        let a = PredicateRecord::new("located in", None);
        let b = PredicateRecord::new("situated in", None);
        assert_eq!(merge_predicates(&[&a, &b], "located in").description, None);
    }

    #[test]
    fn config_validation() {
        assert!(ResolverConfig::default().validate().is_ok());
        let bad = ResolverConfig {
            max_cluster_size: 1,
            ..ResolverConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
