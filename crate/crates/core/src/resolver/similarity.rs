//! Pairwise similarity of entities and predicates.
//!
//! Entity score: `S_e = alpha * label + beta * description`.
//! Predicate score: `S_r = gamma * label + delta * description`.
//! Label similarity is normalized Levenshtein over case-folded labels,
//! description similarity the cosine of the description embeddings clamped
//! to `[0, 1]`. Type similarity only gates entity pairs in the mid band.

use serde::{Deserialize, Serialize};

use super::embedding::{cosine, EmbedError, EmbeddingProvider};
use crate::model::EntityRecord;

const WEIGHT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimilarityWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
}

impl Default for SimilarityWeights {
    fn default() -> Self {
        Self {
            alpha: 0.35,
            beta: 0.65,
            gamma: 0.25,
            delta: 0.75,
        }
    }
}

impl SimilarityWeights {
    pub fn validate(&self) -> Result<(), String> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if ![self.alpha, self.beta, self.gamma, self.delta].into_iter().all(unit) {
            return Err("similarity weights must lie in [0, 1]".into());
        }
        if (self.alpha + self.beta - 1.0).abs() > WEIGHT_TOLERANCE {
            return Err("alpha + beta must equal 1".into());
        }
        if (self.gamma + self.delta - 1.0).abs() > WEIGHT_TOLERANCE {
            return Err("gamma + delta must equal 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    pub entity_high: f64,
    pub entity_low: f64,
    pub type_gate: f64,
    pub predicate: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            entity_high: 0.9,
            entity_low: 0.7,
            type_gate: 0.25,
            predicate: 0.8,
        }
    }
}

impl Thresholds {
    pub fn validate(&self) -> Result<(), String> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if !(0.0 <= self.entity_low && self.entity_low < self.entity_high && self.entity_high <= 1.0) {
            return Err("thresholds need 0 <= entity_low < entity_high <= 1".into());
        }
        if !unit(self.type_gate) || !unit(self.predicate) {
            return Err("type_gate and predicate thresholds must lie in [0, 1]".into());
        }
        Ok(())
    }
}

/// Edit distance over Unicode scalar values.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let substitution = prev[j] + usize::from(ca != cb);
            cur[j + 1] = substitution.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// `1 - lev(a, b) / max(|a|, |b|)` on trimmed, lower-cased labels; two
/// empty labels are identical.
pub fn label_similarity(a: &str, b: &str) -> f64 {
    let a = a.trim().to_lowercase();
    let b = b.trim().to_lowercase();
    let longest = a.chars().count().max(b.chars().count());
    if longest == 0 {
        return 1.0;
    }
    1.0 - levenshtein(&a, &b) as f64 / longest as f64
}

/// Description similarity with a flag for missing descriptions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DescriptionScore {
    pub score: f64,
    /// One side had no description; the score is 0.
    pub degraded: bool,
}

pub fn description_similarity(
    a: &str,
    b: &str,
    provider: &dyn EmbeddingProvider,
) -> Result<DescriptionScore, EmbedError> {
    let (a, b) = (a.trim(), b.trim());
    if a.is_empty() || b.is_empty() {
        return Ok(DescriptionScore {
            score: 0.0,
            degraded: true,
        });
    }
    let score = embedding_similarity(&provider.embed(a)?, &provider.embed(b)?);
    Ok(DescriptionScore { score, degraded: false })
}

/// Cosine clamped into `[0, 1]`.
pub fn embedding_similarity(a: &[f64], b: &[f64]) -> f64 {
    cosine(a, b).clamp(0.0, 1.0)
}

/// Best label similarity over all cross pairs of types; 0 if either side
/// is untyped.
pub fn type_similarity(i: &EntityRecord, j: &EntityRecord) -> f64 {
    types_similarity(&i.types, &j.types)
}

pub fn types_similarity(a: &[String], b: &[String]) -> f64 {
    a.iter()
        .flat_map(|x| b.iter().map(move |y| label_similarity(x, y)))
        .fold(0.0, f64::max)
}

pub fn entity_score(label: f64, description: f64, weights: &SimilarityWeights) -> f64 {
    weights.alpha * label + weights.beta * description
}

pub fn predicate_score(label: f64, description: f64, weights: &SimilarityWeights) -> f64 {
    weights.gamma * label + weights.delta * description
}

/// `S_e >= high`, or `low < S_e < high` with `t > gate`.
pub fn similar_entities(score: f64, type_similarity: f64, thresholds: &Thresholds) -> bool {
    score >= thresholds.entity_high
        || (thresholds.entity_low < score && score < thresholds.entity_high && type_similarity > thresholds.type_gate)
}

pub fn similar_predicates(score: f64, thresholds: &Thresholds) -> bool {
    score >= thresholds.predicate
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::resolver::embedding::StubEmbedder;

    #[test]
    fn label_similarity_examples() {
        assert_eq!(label_similarity("car", "car"), 1.0);
        assert!((label_similarity("car", "cat") - 2.0 / 3.0).abs() < 1e-9);
        assert_eq!(label_similarity("", "abc"), 0.0);
        assert_eq!(label_similarity("", ""), 1.0);
        assert_eq!(label_similarity(" Cagliari", "cagliari "), 1.0);
    }

    #[test]
    fn vegetables_pair_reaches_the_high_threshold() {
        // lev("vegetables", "vegetable") = 1 over length 10.
        assert!((label_similarity("vegetables", "vegetable") - 0.9).abs() < 1e-12);
    }

    #[test]
    fn description_similarity_examples() {
        let stub = StubEmbedder::default();
        let d = "A panoramic terrace in Cagliari";
        assert!((description_similarity(d, d, &stub).unwrap().score - 1.0).abs() < 1e-6);
        let empty = description_similarity("", d, &stub).unwrap();
        assert_eq!(empty.score, 0.0);
        assert!(empty.degraded);
    }

    #[test]
    fn orthogonal_vectors_score_zero() {
        assert_eq!(embedding_similarity(&[1.0, 0.0], &[0.0, 1.0]), 0.0);
        assert_eq!(embedding_similarity(&[1.0, 0.0], &[-1.0, 0.0]), 0.0);
    }

    #[test]
    fn type_similarity_examples() {
        let city = EntityRecord::new("a", "d", ["City"]);
        let both = EntityRecord::new("b", "d", ["City", "Landmark"]);
        let none = EntityRecord::new("c", "d", Vec::<String>::new());
        assert_eq!(type_similarity(&city, &both), 1.0);
        assert_eq!(type_similarity(&none, &city), 0.0);
    }

    #[test]
    fn score_formulas() {
        let w = SimilarityWeights::default();
        assert_eq!(entity_score(1.0, 1.0, &w), 1.0);
        assert!((entity_score(0.5, 0.8, &w) - 0.695).abs() < 1e-12);
        assert_eq!(predicate_score(1.0, 1.0, &w), 1.0);
        let s = predicate_score(0.4, 0.9, &w);
        assert!((s - 0.775).abs() < 1e-12);
        assert!(!similar_predicates(s, &Thresholds::default()));
    }

    #[test]
    fn threshold_boundaries() {
        let t = Thresholds::default();
        assert!(similar_entities(0.9, 0.0, &t));
        assert!(similar_entities(0.8, 0.3, &t));
        assert!(!similar_entities(0.8, 0.25, &t));
        assert!(!similar_entities(0.7, 0.9, &t));
    }

    #[test]
    fn weights_must_sum_to_one() {
        assert!(SimilarityWeights::default().validate().is_ok());
        let bad = SimilarityWeights {
            alpha: 0.5,
            ..SimilarityWeights::default()
        };
        assert!(bad.validate().is_err());
        assert!(Thresholds {
            entity_low: 0.95,
            ..Thresholds::default()
        }
        .validate()
        .is_err());
    }
}
