//! Bottom-up taxonomy of entity types.
//!
//! Level 0 holds the types found on resolved entities. Each round asks the
//! model for hypernyms per cluster of labels, merges the hypernyms of all
//! clusters into the next level and re-clusters them by label similarity.
//! The loop ends when a round yields a single hypernym. A level guard bounds
//! the depth: if it trips, a synthetic root is placed over the current top.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::extractor::{label_key, ParsedLine};
use crate::llm::{Gateway, GatewayError};
use crate::model::{encode, EntityId, KnowledgeGraph, NTriplesWriter, BASE_IRI};
use crate::prompting::{ask_validated, DiagnosticLog};
use crate::prompts::{PromptError, PromptSet, TaskId};
use crate::resolver::{build_clusters, label_similarity, Edge};

pub const DEFAULT_RELATION: &str = "is type of";
pub const SYNTHETIC_ROOT: &str = "entity";
pub const DEFAULT_MAX_LEVELS: usize = 10;

#[derive(Debug, Error)]
pub enum SchemaError {
    #[error("invalid schema configuration: {0}")]
    InvalidConfig(String),
    #[error("schema invariant violated: {0}")]
    Invariant(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchemaConfig {
    pub max_levels: usize,
    /// Label similarity at which hypernyms of one level share a cluster.
    pub aggregation_threshold: f64,
}

impl Default for SchemaConfig {
    fn default() -> Self {
        Self {
            max_levels: DEFAULT_MAX_LEVELS,
            aggregation_threshold: 0.9,
        }
    }
}

impl SchemaConfig {
    pub fn validate(&self) -> Result<(), SchemaError> {
        if self.max_levels == 0 {
            return Err(SchemaError::InvalidConfig("max_levels must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.aggregation_threshold) {
            return Err(SchemaError::InvalidConfig(
                "aggregation_threshold must lie in [0, 1]".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SchemaNode {
    pub level: usize,
    pub label: String,
}

impl SchemaNode {
    pub fn new(level: usize, label: impl Into<String>) -> Self {
        Self {
            level,
            label: label.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SchemaEdge {
    pub child: SchemaNode,
    pub parent: SchemaNode,
    pub relation: String,
}

/// One hypernym of a generation round and the labels it covers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HypernymEntry {
    pub hypernym: String,
    pub relation: String,
    pub covered: Vec<String>,
    /// The label was not covered by the model and lifts itself.
    #[serde(default)]
    pub self_lift: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaGraph {
    pub nodes: Vec<SchemaNode>,
    pub edges: Vec<SchemaEdge>,
    pub root: SchemaNode,
    /// The level guard tripped and `root` was added without the model.
    pub synthetic_root: bool,
}

impl SchemaGraph {
    pub fn levels(&self) -> usize {
        self.nodes.iter().map(|n| n.level).max().map_or(0, |m| m + 1)
    }

    pub fn nodes_at(&self, level: usize) -> impl Iterator<Item = &SchemaNode> {
        self.nodes.iter().filter(move |n| n.level == level)
    }

    pub fn parents_of<'a>(&'a self, node: &'a SchemaNode) -> impl Iterator<Item = &'a SchemaNode> {
        self.edges.iter().filter(move |e| &e.child == node).map(|e| &e.parent)
    }

    /// Checks label uniqueness per level, level discipline, single root and
    /// that every node reaches the root.
    pub fn check_invariants(&self) -> Result<(), SchemaError> {
        let fail = |m: String| Err(SchemaError::Invariant(m));
        let mut keys = BTreeSet::new();
        for n in &self.nodes {
            if !keys.insert((n.level, label_key(&n.label))) {
                return fail(format!("label `{}` repeated at level {}", n.label, n.level));
            }
        }
        let nodes: BTreeSet<&SchemaNode> = self.nodes.iter().collect();
        if !nodes.contains(&self.root) {
            return fail("root is not a node".into());
        }
        for e in &self.edges {
            if !nodes.contains(&e.child) || !nodes.contains(&e.parent) {
                return fail(format!(
                    "edge `{}` -> `{}` has an unknown endpoint",
                    e.child.label, e.parent.label
                ));
            }
            if e.parent.level != e.child.level + 1 {
                return fail(format!("edge `{}` -> `{}` skips levels", e.child.label, e.parent.label));
            }
        }
        let top = self.levels() - 1;
        if self.root.level != top || self.nodes_at(top).count() != 1 {
            return fail("root must be the only node at the top level".into());
        }
        if self.parents_of(&self.root).next().is_some() {
            return fail("root has a parent".into());
        }
        // Levels are strictly increasing along edges, so walking up from any
        // node terminates; it must end at the root.
        let mut reaches: BTreeSet<&SchemaNode> = BTreeSet::from([&self.root]);
        for level in (0..top).rev() {
            for n in self.nodes_at(level) {
                if self.parents_of(n).any(|p| reaches.contains(p)) {
                    reaches.insert(n);
                } else {
                    return fail(format!("`{}` at level {level} does not reach the root", n.label));
                }
            }
        }
        Ok(())
    }

    /// `child <relation> parent` statements, one per edge.
    pub fn to_ntriples(&self) -> String {
        let iri = |n: &SchemaNode| format!("{BASE_IRI}type/{}/{}", n.level, encode(&n.label));
        let mut w = NTriplesWriter::default();
        for e in &self.edges {
            w.push(
                &iri(&e.child),
                &format!("{BASE_IRI}predicate/{}", encode(&e.relation)),
                &iri(&e.parent),
            );
        }
        w.finish()
    }
}

/// Per-cluster type lists: case-folded dedup, sorted; clusters without
/// types are dropped and identical lists are kept once.
pub fn collect_types(graph: &KnowledgeGraph, clusters: &[Vec<EntityId>]) -> Vec<Vec<String>> {
    let mut out: Vec<Vec<String>> = Vec::new();
    for cluster in clusters {
        let mut by_key: BTreeMap<String, String> = BTreeMap::new();
        for t in cluster
            .iter()
            .filter_map(|id| graph.entity(id))
            .flat_map(|e| e.types.iter())
        {
            by_key.entry(label_key(t)).or_insert_with(|| t.trim().to_string());
        }
        if by_key.is_empty() {
            continue;
        }
        let types: Vec<String> = by_key.into_values().collect();
        if !out.contains(&types) {
            out.push(types);
        }
    }
    out
}

/// Merges the hypernyms of one level and clusters them for the next round.
/// Returns the deduplicated labels and the clusters over them.
pub fn agglomerate(entries: &[HypernymEntry], threshold: f64) -> (Vec<String>, Vec<Vec<String>>) {
    let mut labels: Vec<String> = Vec::new();
    let mut seen = BTreeSet::new();
    for e in entries {
        if seen.insert(label_key(&e.hypernym)) {
            labels.push(e.hypernym.trim().to_string());
        }
    }
    let mut edges = Vec::new();
    for i in 0..labels.len() {
        for j in i + 1..labels.len() {
            let score = label_similarity(&labels[i], &labels[j]);
            if score >= threshold {
                edges.push(Edge { i, j, score });
            }
        }
    }
    let clusters = build_clusters(labels.len(), &edges)
        .into_iter()
        .map(|c| c.into_iter().map(|i| labels[i].clone()).collect())
        .collect();
    (labels, clusters)
}

pub struct SchemaInferencer<'a> {
    gateway: &'a Gateway,
    prompts: &'a PromptSet,
    config: SchemaConfig,
    log: &'a DiagnosticLog,
}

impl<'a> SchemaInferencer<'a> {
    pub fn new(gateway: &'a Gateway, prompts: &'a PromptSet, config: SchemaConfig, log: &'a DiagnosticLog) -> Self {
        Self {
            gateway,
            prompts,
            config,
            log,
        }
    }

    /// Hypernyms for one cluster of labels. Labels the model leaves out, or
    /// all labels when the step fails, lift themselves one level.
    pub fn generate_hypernyms(&self, labels: &[String]) -> Result<Vec<HypernymEntry>, SchemaError> {
        let template = self.prompts.get(TaskId::HypernymGeneration);
        let listed = labels
            .iter()
            .enumerate()
            .map(|(i, l)| format!("({}) {l}", i + 1))
            .collect::<Vec<_>>()
            .join("\n");
        let messages = template.render(&[("types", &listed)])?;
        let scope = format!("schema:{}", labels.first().map_or("", String::as_str));
        let mut entries: Vec<HypernymEntry> = Vec::new();
        let mut covered = vec![false; labels.len()];
        if let Some(report) = ask_validated(self.gateway, template, messages, Some(labels), &scope, self.log)? {
            for line in report.parsed() {
                if let ParsedLine::Hypernym {
                    hypernym,
                    relation,
                    covered: members,
                } = line
                {
                    let relation = relation.trim();
                    entries.push(HypernymEntry {
                        hypernym: hypernym.trim().to_string(),
                        relation: if relation.is_empty() {
                            DEFAULT_RELATION
                        } else {
                            relation
                        }
                        .to_string(),
                        covered: members
                            .iter()
                            .map(|m| {
                                covered[m.number - 1] = true;
                                labels[m.number - 1].clone()
                            })
                            .collect(),
                        self_lift: false,
                    });
                }
            }
        }
        for (label, _) in labels.iter().zip(&covered).filter(|(_, c)| !**c) {
            entries.push(HypernymEntry {
                hypernym: label.clone(),
                relation: DEFAULT_RELATION.into(),
                covered: vec![label.clone()],
                self_lift: true,
            });
        }
        Ok(entries)
    }

    /// Builds the taxonomy over per-cluster type lists.
    pub fn infer(&self, clusters: &[Vec<String>]) -> Result<SchemaGraph, SchemaError> {
        self.config.validate()?;
        let mut builder = Builder::default();
        let mut current: Vec<Vec<String>> = clusters
            .iter()
            .map(|c| {
                c.iter()
                    .filter(|l| !l.trim().is_empty())
                    .map(|l| builder.node(0, l))
                    .collect::<BTreeSet<_>>()
                    .into_iter()
                    .collect()
            })
            .filter(|c: &Vec<String>| !c.is_empty())
            .collect();
        current.sort();
        current.dedup();
        if builder.level_len(0) == 0 {
            let root = SchemaNode::new(0, SYNTHETIC_ROOT);
            return Ok(builder.finish(root, true));
        }

        let mut level = 0;
        loop {
            if level + 1 >= self.config.max_levels {
                let root = SchemaNode::new(level + 1, builder.node(level + 1, SYNTHETIC_ROOT));
                for child in builder.labels_at(level) {
                    builder.edge(level, &child, &root.label, DEFAULT_RELATION);
                }
                return Ok(builder.finish(root, true));
            }
            let generated: Vec<Vec<HypernymEntry>> = current
                .par_iter()
                .map(|labels| self.generate_hypernyms(labels))
                .collect::<Result<_, _>>()?;
            let entries: Vec<HypernymEntry> = generated.into_iter().flatten().collect();
            for e in &entries {
                let parent = builder.node(level + 1, &e.hypernym);
                for child in &e.covered {
                    builder.edge(level, child, &parent, &e.relation);
                }
            }
            level += 1;
            if builder.level_len(level) == 1 {
                let root = SchemaNode::new(level, builder.labels_at(level).remove(0));
                return Ok(builder.finish(root, false));
            }
            let labels = builder.labels_at(level);
            let (_, clusters) = agglomerate(
                &labels
                    .iter()
                    .map(|l| HypernymEntry {
                        hypernym: l.clone(),
                        relation: DEFAULT_RELATION.into(),
                        covered: Vec::new(),
                        self_lift: false,
                    })
                    .collect::<Vec<_>>(),
                self.config.aggregation_threshold,
            );
            current = clusters;
        }
    }
}

/// Accumulates nodes keyed by `(level, label_key)`; the first spelling wins.
#[derive(Default)]
struct Builder {
    nodes: BTreeMap<(usize, String), SchemaNode>,
    order: Vec<(usize, String)>,
    edges: BTreeSet<SchemaEdge>,
}

impl Builder {
    /// Returns the canonical spelling of the node.
    fn node(&mut self, level: usize, label: &str) -> String {
        let key = (level, label_key(label));
        if let Some(n) = self.nodes.get(&key) {
            return n.label.clone();
        }
        self.order.push(key.clone());
        let node = SchemaNode::new(level, label.trim());
        self.nodes.insert(key, node.clone());
        node.label
    }

    fn canonical(&self, level: usize, label: &str) -> Option<&SchemaNode> {
        self.nodes.get(&(level, label_key(label)))
    }

    fn edge(&mut self, child_level: usize, child: &str, parent: &str, relation: &str) {
        let (Some(c), Some(p)) = (
            self.canonical(child_level, child),
            self.canonical(child_level + 1, parent),
        ) else {
            return;
        };
        self.edges.insert(SchemaEdge {
            child: c.clone(),
            parent: p.clone(),
            relation: relation.to_string(),
        });
    }

    fn level_len(&self, level: usize) -> usize {
        self.order.iter().filter(|(l, _)| *l == level).count()
    }

    fn labels_at(&self, level: usize) -> Vec<String> {
        self.order
            .iter()
            .filter(|(l, _)| *l == level)
            .map(|k| self.nodes[k].label.clone())
            .collect()
    }

    fn finish(self, root: SchemaNode, synthetic_root: bool) -> SchemaGraph {
        let mut nodes: Vec<SchemaNode> = self.nodes.into_values().collect();
        if !nodes.contains(&root) {
            nodes.push(root.clone());
        }
        nodes.sort_by_key(|n| (n.level, label_key(&n.label)));
        SchemaGraph {
            nodes,
            edges: self.edges.into_iter().collect(),
            root,
            synthetic_root,
        }
    }
}
