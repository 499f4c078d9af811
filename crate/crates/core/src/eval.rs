//! Human annotations and extraction-quality metrics.
//!
//! Every entity, entity-type assignment and triplet can be judged correct or
//! incorrect by one or more assessors. Correct entities and triplets also
//! carry an `inferred` flag: the information came from the model's own
//! knowledge rather than the text. Missed entities per type form the ground
//! truth for recall.
//!
//! | metric | formula |
//! |---|---|
//! | precision | `TP / (TP + FP)` |
//! | recall | `TP / (TP + FN)` (entities only) |
//! | F1 | `2PR / (P + R)` |
//! | sigma | `I / D`, inferred over all correct |

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::extractor::label_key;
use crate::model::{EntityId, KnowledgeGraph, TripletId};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("invalid annotation for `{target}`: {reason}")]
    InvalidAnnotation { target: String, reason: String },
    #[error("annotation targets unknown {kind} `{target}`")]
    UnknownTarget { kind: TargetKind, target: String },
    #[error("conflicting verdicts: {}", .0.join("; "))]
    Conflicts(Vec<String>),
    #[error("invalid ground truth: {0}")]
    GroundTruth(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetKind {
    Entity,
    EntityType,
    Triplet,
}

impl std::fmt::Display for TargetKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TargetKind::Entity => "entity",
            TargetKind::EntityType => "entity-type",
            TargetKind::Triplet => "triplet",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Correct,
    Incorrect,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Annotation {
    pub kind: TargetKind,
    pub target: String,
    /// The judged type, for entity-type targets only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub type_label: Option<String>,
    pub verdict: Verdict,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inferred: Option<bool>,
    pub assessor: String,
    #[serde(default)]
    pub timestamp: String,
}

impl Annotation {
    pub fn new(kind: TargetKind, target: impl Into<String>, verdict: Verdict, assessor: impl Into<String>) -> Self {
        Self {
            kind,
            target: target.into(),
            type_label: None,
            verdict,
            inferred: None,
            assessor: assessor.into(),
            timestamp: String::new(),
        }
    }

    pub fn entity(id: &EntityId, verdict: Verdict, assessor: &str) -> Self {
        Self::new(TargetKind::Entity, id.as_str(), verdict, assessor)
    }

    pub fn entity_type(id: &EntityId, type_label: &str, verdict: Verdict, assessor: &str) -> Self {
        Self {
            type_label: Some(type_label.to_string()),
            ..Self::new(TargetKind::EntityType, id.as_str(), verdict, assessor)
        }
    }

    pub fn triplet(id: &TripletId, verdict: Verdict, assessor: &str) -> Self {
        Self::new(TargetKind::Triplet, id.as_str(), verdict, assessor)
    }

    pub fn inferred(mut self, inferred: bool) -> Self {
        self.inferred = Some(inferred);
        self
    }

    /// Key of the judged component: the target id, plus the case-folded
    /// type for entity-type targets.
    pub fn key(&self) -> String {
        match (&self.kind, &self.type_label) {
            (TargetKind::EntityType, Some(t)) => format!("{}#{}", self.target, label_key(t)),
            _ => self.target.clone(),
        }
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        let invalid = |reason: &str| {
            Err(EvalError::InvalidAnnotation {
                target: self.target.clone(),
                reason: reason.into(),
            })
        };
        if self.target.trim().is_empty() {
            return invalid("empty target");
        }
        if self.assessor.trim().is_empty() {
            return invalid("empty assessor");
        }
        match (self.kind, &self.type_label) {
            (TargetKind::EntityType, None) => return invalid("entity-type annotation without a type label"),
            (TargetKind::EntityType, Some(t)) if t.trim().is_empty() => return invalid("empty type label"),
            (TargetKind::Entity | TargetKind::Triplet, Some(_)) => return invalid("type label on a non-type target"),
            _ => {}
        }
        if self.inferred.is_some() {
            if self.verdict != Verdict::Correct {
                return invalid("inferred is only allowed on correct verdicts");
            }
            if self.kind == TargetKind::EntityType {
                return invalid("inferred does not apply to entity types");
            }
        }
        Ok(())
    }
}

/// Annotations grouped by target key, as stored on disk.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AnnotationSet {
    by_target: BTreeMap<String, Vec<Annotation>>,
}

impl AnnotationSet {
    pub fn push(&mut self, annotation: Annotation) -> Result<(), EvalError> {
        annotation.validate()?;
        self.by_target.entry(annotation.key()).or_default().push(annotation);
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = &Annotation> {
        self.by_target.values().flatten()
    }

    pub fn len(&self) -> usize {
        self.by_target.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl FromIterator<Annotation> for AnnotationSet {
    fn from_iter<I: IntoIterator<Item = Annotation>>(iter: I) -> Self {
        let mut set = Self::default();
        for a in iter {
            set.by_target.entry(a.key()).or_default().push(a);
        }
        set
    }
}

/// Missed entity labels per document and type.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GroundTruth {
    pub documents: BTreeMap<String, BTreeMap<String, Vec<String>>>,
}

impl GroundTruth {
    pub fn add(&mut self, document: &str, type_label: &str, missed: &str) {
        self.documents
            .entry(document.to_string())
            .or_default()
            .entry(type_label.to_string())
            .or_default()
            .push(missed.to_string());
    }

    /// Number of distinct missed labels, counted per document and type
    /// with types and labels case-folded.
    pub fn missed_count(&self) -> usize {
        let mut distinct = BTreeSet::new();
        for (doc, types) in &self.documents {
            for (t, labels) in types {
                distinct.extend(labels.iter().map(|l| (doc, label_key(t), label_key(l))));
            }
        }
        distinct.len()
    }

    /// Types eligible for ground truth: those carried by at least two
    /// entities of the graph, case-folded.
    pub fn qualifying_types(graph: &KnowledgeGraph) -> BTreeSet<String> {
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for e in graph.entities() {
            let distinct: BTreeSet<String> = e.types.iter().map(|t| label_key(t)).collect();
            for t in distinct {
                *counts.entry(t).or_default() += 1;
            }
        }
        counts.into_iter().filter(|(_, n)| *n >= 2).map(|(t, _)| t).collect()
    }

    /// Rejects non-qualifying types and missed labels that duplicate an
    /// extracted entity judged correct.
    pub fn validate(&self, graph: &KnowledgeGraph, correct_labels: &BTreeSet<String>) -> Result<(), EvalError> {
        let qualifying = Self::qualifying_types(graph);
        for (doc, types) in &self.documents {
            for (t, labels) in types {
                if !qualifying.contains(&label_key(t)) {
                    return Err(EvalError::GroundTruth(format!(
                        "type `{t}` in `{doc}` has fewer than two entities"
                    )));
                }
                if let Some(dup) = labels.iter().find(|l| correct_labels.contains(&label_key(l))) {
                    return Err(EvalError::GroundTruth(format!(
                        "missed entity `{dup}` in `{doc}` was extracted and judged correct"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// A percentage with a flag for an empty denominator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ratio {
    pub value: f64,
    pub degenerate: bool,
}

impl Ratio {
    fn of(numerator: f64, denominator: f64) -> Self {
        if denominator == 0.0 {
            Self {
                value: 0.0,
                degenerate: true,
            }
        } else {
            Self {
                value: numerator / denominator,
                degenerate: false,
            }
        }
    }

    pub fn percent(&self) -> f64 {
        self.value * 100.0
    }
}

pub fn precision(tp: usize, fp: usize) -> Ratio {
    Ratio::of(tp as f64, (tp + fp) as f64)
}

pub fn recall(tp: usize, fn_: usize) -> Ratio {
    Ratio::of(tp as f64, (tp + fn_) as f64)
}

pub fn f1(p: Ratio, r: Ratio) -> Ratio {
    let mut out = Ratio::of(2.0 * p.value * r.value, p.value + r.value);
    out.degenerate |= p.degenerate || r.degenerate;
    out
}

pub fn sigma(i: usize, d: usize) -> Ratio {
    Ratio::of(i as f64, d as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    /// Components in scope without a verdict.
    pub pending: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SigmaCounts {
    pub inferred: usize,
    pub correct: usize,
}

/// All seven metrics and the counts they are computed from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub entities: Counts,
    pub entity_types: Counts,
    pub triplets: Counts,
    pub sigma_entities: SigmaCounts,
    pub sigma_triplets: SigmaCounts,
    pub precision_entities: Ratio,
    pub recall_entities: Ratio,
    pub f1_entities: Ratio,
    pub precision_types: Ratio,
    pub precision_triplets: Ratio,
    pub sigma_entity: Ratio,
    pub sigma_triplet: Ratio,
    /// Share of in-scope components that have a verdict.
    pub completeness: Ratio,
}

impl MetricsReport {
    /// Derives every metric from counts alone.
    pub fn from_counts(
        entities: Counts,
        entity_types: Counts,
        triplets: Counts,
        sigma_entities: SigmaCounts,
        sigma_triplets: SigmaCounts,
    ) -> Self {
        let pe = precision(entities.tp, entities.fp);
        let re = recall(entities.tp, entities.fn_);
        let judged = [entities, entity_types, triplets]
            .iter()
            .map(|c| c.tp + c.fp)
            .sum::<usize>();
        let pending = [entities, entity_types, triplets]
            .iter()
            .map(|c| c.pending)
            .sum::<usize>();
        Self {
            entities,
            entity_types,
            triplets,
            sigma_entities,
            sigma_triplets,
            precision_entities: pe,
            recall_entities: re,
            f1_entities: f1(pe, re),
            precision_types: precision(entity_types.tp, entity_types.fp),
            precision_triplets: precision(triplets.tp, triplets.fp),
            sigma_entity: sigma(sigma_entities.inferred, sigma_entities.correct),
            sigma_triplet: sigma(sigma_triplets.inferred, sigma_triplets.correct),
            completeness: Ratio::of(judged as f64, (judged + pending) as f64),
        }
    }

    /// True when the stored metrics equal a fresh computation from counts.
    pub fn is_consistent(&self) -> bool {
        let fresh = Self::from_counts(
            self.entities,
            self.entity_types,
            self.triplets,
            self.sigma_entities,
            self.sigma_triplets,
        );
        &fresh == self
    }

    /// The seven metrics in table order.
    pub fn row(&self) -> [(&'static str, Ratio); 7] {
        [
            ("P^E", self.precision_entities),
            ("R^E", self.recall_entities),
            ("F1^E", self.f1_entities),
            ("P^T", self.precision_types),
            ("P^R", self.precision_triplets),
            ("σ^E", self.sigma_entity),
            ("σ^R", self.sigma_triplet),
        ]
    }

    /// Two-line text table; degenerate metrics print as `n/a`.
    pub fn to_table(&self) -> String {
        let mut head = format!("{:<10}", "Metric");
        let mut body = format!("{:<10}", "Score (%)");
        for (name, r) in self.row() {
            let _ = write!(head, "{name:>8}");
            let cell = if r.degenerate {
                "n/a".to_string()
            } else {
                format!("{:.2}", r.percent())
            };
            let _ = write!(body, "{cell:>8}");
        }
        format!("{}\n{}\n", head.trim_end(), body.trim_end())
    }
}

/// The adjudicated verdict on one component.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Adjudicated {
    pub verdict: Verdict,
    pub inferred: bool,
}

/// Collapses the annotations of every target into one verdict.
///
/// One assessor disagreeing with themselves is an error. Across assessors the
/// majority wins and ties go to incorrect. Among the assessors who judged a
/// correct component, the majority decides `inferred`; ties mean not
/// inferred.
pub fn adjudicate(annotations: &AnnotationSet) -> Result<BTreeMap<(TargetKind, String), Adjudicated>, EvalError> {
    let mut conflicts = Vec::new();
    let mut out = BTreeMap::new();
    for (key, list) in &annotations.by_target {
        let mut per_assessor: BTreeMap<&str, (Verdict, Option<bool>)> = BTreeMap::new();
        let mut kind = None;
        for a in list {
            a.validate()?;
            kind = Some(a.kind);
            match per_assessor.get(a.assessor.as_str()) {
                Some((v, _)) if *v != a.verdict => {
                    conflicts.push(format!("{} `{key}` judged both ways by `{}`", a.kind, a.assessor));
                }
                _ => {
                    per_assessor.insert(&a.assessor, (a.verdict, a.inferred));
                }
            }
        }
        let Some(kind) = kind else { continue };
        let correct = per_assessor.values().filter(|(v, _)| *v == Verdict::Correct).count();
        let incorrect = per_assessor.len() - correct;
        let verdict = if correct > incorrect {
            Verdict::Correct
        } else {
            Verdict::Incorrect
        };
        let inferred_votes = per_assessor
            .values()
            .filter(|(v, i)| *v == Verdict::Correct && *i == Some(true))
            .count();
        let inferred = verdict == Verdict::Correct && 2 * inferred_votes > correct;
        out.insert((kind, key.clone()), Adjudicated { verdict, inferred });
    }
    if conflicts.is_empty() {
        Ok(out)
    } else {
        conflicts.sort();
        Err(EvalError::Conflicts(conflicts))
    }
}

/// Every component the metrics are computed over, keyed like annotations.
fn scope(graph: &KnowledgeGraph) -> Vec<(TargetKind, String)> {
    let mut out = Vec::new();
    for e in graph.entities() {
        out.push((TargetKind::Entity, e.id.to_string()));
        let distinct: BTreeSet<String> = e.types.iter().map(|t| label_key(t)).collect();
        for t in distinct {
            out.push((TargetKind::EntityType, format!("{}#{t}", e.id)));
        }
    }
    for t in graph.triplets() {
        out.push((TargetKind::Triplet, t.id.to_string()));
    }
    out
}

/// Computes the report over `graph`. Unannotated components are counted as
/// pending; annotations on components outside the graph are rejected.
pub fn compute_report(
    graph: &KnowledgeGraph,
    annotations: &AnnotationSet,
    ground_truth: &GroundTruth,
) -> Result<MetricsReport, EvalError> {
    let verdicts = adjudicate(annotations)?;
    let in_scope: BTreeSet<(TargetKind, String)> = scope(graph).into_iter().collect();
    if let Some((kind, target)) = verdicts.keys().find(|k| !in_scope.contains(*k)) {
        return Err(EvalError::UnknownTarget {
            kind: *kind,
            target: target.clone(),
        });
    }

    let mut counts: BTreeMap<TargetKind, Counts> = BTreeMap::new();
    let mut sigmas: BTreeMap<TargetKind, SigmaCounts> = BTreeMap::new();
    let mut correct_labels = BTreeSet::new();
    for key in &in_scope {
        let c = counts.entry(key.0).or_default();
        match verdicts.get(key) {
            None => c.pending += 1,
            Some(a) if a.verdict == Verdict::Correct => {
                c.tp += 1;
                let s = sigmas.entry(key.0).or_default();
                s.correct += 1;
                s.inferred += usize::from(a.inferred);
                if key.0 == TargetKind::Entity {
                    if let Some(e) = graph.entity(&EntityId::new(key.1.clone())) {
                        correct_labels.insert(label_key(&e.label));
                    }
                }
            }
            Some(_) => c.fp += 1,
        }
    }
    ground_truth.validate(graph, &correct_labels)?;
    let mut entities = counts.get(&TargetKind::Entity).copied().unwrap_or_default();
    entities.fn_ = ground_truth.missed_count();
    let get = |k| counts.get(&k).copied().unwrap_or_default();
    let sig = |k| sigmas.get(&k).copied().unwrap_or_default();
    Ok(MetricsReport::from_counts(
        entities,
        get(TargetKind::EntityType),
        get(TargetKind::Triplet),
        sig(TargetKind::Entity),
        sig(TargetKind::Triplet),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{EntityRecord, PredicateRecord, TripletRecord};

    #[test]
    fn boundary_ratios() {
        assert_eq!(precision(1, 0).value, 1.0);
        assert!(precision(0, 0).degenerate);
        assert_eq!(f1(precision(1, 0), Ratio::of(0.0, 1.0)).value, 0.0);
        assert_eq!(sigma(0, 10).value, 0.0);
        assert_eq!(sigma(10, 10).value, 1.0);
        assert!((sigma(23, 250).value - 0.092).abs() < 1e-12);
    }

    #[test]
    fn inferred_requires_correct() {
        let id = EntityId::new("e-1");
        assert!(Annotation::entity(&id, Verdict::Incorrect, "a")
            .inferred(true)
            .validate()
            .is_err());
        assert!(Annotation::entity(&id, Verdict::Correct, "a")
            .inferred(true)
            .validate()
            .is_ok());
    }

    #[test]
    fn majority_with_ties_to_incorrect() {
        let id = EntityId::new("e-1");
        let tie: AnnotationSet = [
            Annotation::entity(&id, Verdict::Correct, "a"),
            Annotation::entity(&id, Verdict::Incorrect, "b"),
        ]
        .into_iter()
        .collect();
        let v = adjudicate(&tie).unwrap();
        assert_eq!(v[&(TargetKind::Entity, "e-1".into())].verdict, Verdict::Incorrect);
        let self_conflict: AnnotationSet = [
            Annotation::entity(&id, Verdict::Correct, "a"),
            Annotation::entity(&id, Verdict::Incorrect, "a"),
        ]
        .into_iter()
        .collect();
        assert!(matches!(adjudicate(&self_conflict), Err(EvalError::Conflicts(_))));
    }

    fn small_graph() -> KnowledgeGraph {
        let mut g = KnowledgeGraph::default();
        let a = g.add_entity(EntityRecord::new("Cagliari", "city", ["City"])).unwrap();
        let b = g
            .add_entity(EntityRecord::new("Bastione", "terrace", ["Landmark", "City"]))
            .unwrap();
        let p = g.add_predicate(PredicateRecord::new("has landmark", None)).unwrap();
        g.add_triplet(TripletRecord::new(a, p, b)).unwrap();
        g
    }

    #[test]
    fn empty_annotations_are_all_pending() {
        let g = small_graph();
        let r = compute_report(&g, &AnnotationSet::default(), &GroundTruth::default()).unwrap();
        assert!(r.row().iter().all(|(_, m)| m.degenerate));
        assert_eq!(r.entities.pending, 2);
        assert_eq!(r.entity_types.pending, 3);
        assert_eq!(r.completeness.value, 0.0);
        assert!(r.to_table().contains("n/a"));
    }

    #[test]
    fn all_correct_without_misses_is_perfect() {
        let g = small_graph();
        let mut set = AnnotationSet::default();
        for e in g.entities() {
            set.push(Annotation::entity(&e.id, Verdict::Correct, "a")).unwrap();
            for t in &e.types {
                set.push(Annotation::entity_type(&e.id, t, Verdict::Correct, "a"))
                    .unwrap();
            }
        }
        for t in g.triplets() {
            set.push(Annotation::triplet(&t.id, Verdict::Correct, "a")).unwrap();
        }
        let r = compute_report(&g, &set, &GroundTruth::default()).unwrap();
        assert_eq!(r.precision_entities.percent(), 100.0);
        assert_eq!(r.recall_entities.percent(), 100.0);
        assert_eq!(r.f1_entities.percent(), 100.0);
        assert_eq!(r.completeness.value, 1.0);
        assert!(r.is_consistent());
    }

    #[test]
    fn ground_truth_rules() {
        let g = small_graph();
        let mut gt = GroundTruth::default();
        gt.add("doc", "Landmark", "Torre");
        assert!(compute_report(&g, &AnnotationSet::default(), &gt).is_err());
        let mut gt = GroundTruth::default();
        gt.add("doc", "city", "Quartu");
        gt.add("doc", "City", "quartu ");
        let r = compute_report(&g, &AnnotationSet::default(), &gt).unwrap();
        assert_eq!(r.entities.fn_, 1);
    }

    #[test]
    fn unknown_targets_are_rejected() {
        let g = small_graph();
        let set: AnnotationSet = [Annotation::entity(&EntityId::new("e-nope"), Verdict::Correct, "a")]
            .into_iter()
            .collect();
        assert!(matches!(
            compute_report(&g, &set, &GroundTruth::default()),
            Err(EvalError::UnknownTarget { .. })
        ));
    }

    #[test]
    fn table_has_the_fixed_column_order() {
        let r = MetricsReport::from_counts(
            Counts {
                tp: 752,
                fp: 9,
                fn_: 55,
                pending: 0,
            },
            Counts {
                tp: 6,
                fp: 1,
                fn_: 0,
                pending: 0,
            },
            Counts::default(),
            SigmaCounts {
                inferred: 0,
                correct: 1,
            },
            SigmaCounts::default(),
        );
        let table = r.to_table();
        let head = table.lines().next().unwrap();
        let cols: Vec<&str> = head.split_whitespace().collect();
        assert_eq!(cols, ["Metric", "P^E", "R^E", "F1^E", "P^T", "P^R", "σ^E", "σ^R"]);
        assert!(table.contains("98.82"));
        assert!(table.contains("85.71"));
    }
}
