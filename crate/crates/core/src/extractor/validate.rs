//! Line-level validation of model responses.
//!
//! Two checks run on every non-blank line: an anchored pattern match against
//! the task grammar, then, when a reference list is supplied, a consistency
//! check that each echoed `(number, label)` pair still names the same entry.
//! Rejection is data: every line lands in exactly one of `accepted` or
//! `rejected`.

use std::collections::BTreeSet;

use regex::Captures;
use serde::Serialize;

use crate::prompts::{OutputGrammar, TaskId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RejectReason {
    PatternMismatch,
    ConsistencyViolation,
}

/// A list entry echoed by the model as `(number) label` or `number. label`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct NumberedRef {
    pub number: usize,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum ParsedLine {
    Entity {
        number: usize,
        label: String,
        description: String,
        types: Vec<String>,
    },
    Mention {
        entry: NumberedRef,
        mentioned: bool,
    },
    Relation {
        subject: NumberedRef,
        predicate: String,
        object: NumberedRef,
    },
    PredicateDescription {
        predicate: String,
        description: String,
    },
    Text(String),
    Group(Vec<NumberedRef>),
    Label(String),
    Hypernym {
        hypernym: String,
        relation: String,
        covered: Vec<NumberedRef>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AcceptedLine {
    pub line: usize,
    pub raw: String,
    pub parsed: ParsedLine,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RejectedLine {
    pub line: usize,
    pub raw: String,
    pub reason: RejectReason,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub accepted: Vec<AcceptedLine>,
    pub rejected: Vec<RejectedLine>,
    /// Output was present but not a single line survived.
    pub whole_rejected: bool,
}

impl ValidationReport {
    pub fn line_count(&self) -> usize {
        self.accepted.len() + self.rejected.len()
    }

    pub fn parsed(&self) -> impl Iterator<Item = &ParsedLine> {
        self.accepted.iter().map(|a| &a.parsed)
    }
}

/// Case- and whitespace-insensitive label comparison key.
pub fn label_key(label: &str) -> String {
    label.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

/// Validates `raw` line by line. `reference` is the numbered list the
/// prompt referred to (entry `n` at index `n - 1`), or for predicate
/// descriptions the set of predicate labels that may be described.
pub fn validate_response(raw: &str, grammar: &OutputGrammar, reference: Option<&[String]>) -> ValidationReport {
    let mut report = ValidationReport::default();
    let mut state = Consistency::new(reference);

    for (idx, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let reject = |reason, detail: String| RejectedLine {
            line: idx + 1,
            raw: line.to_string(),
            reason,
            detail,
        };
        let Some(caps) = grammar.line.captures(line) else {
            report.rejected.push(reject(
                RejectReason::PatternMismatch,
                "line does not match the output format".into(),
            ));
            continue;
        };
        let parsed = match parse(grammar, &caps) {
            Ok(p) => p,
            Err(detail) => {
                report.rejected.push(reject(RejectReason::PatternMismatch, detail));
                continue;
            }
        };
        match state.check(grammar.task, &parsed) {
            Ok(()) => report.accepted.push(AcceptedLine {
                line: idx + 1,
                raw: line.to_string(),
                parsed,
            }),
            Err(detail) => report.rejected.push(reject(RejectReason::ConsistencyViolation, detail)),
        }
    }
    report.whole_rejected = report.accepted.is_empty() && !report.rejected.is_empty();
    report
}

fn group<'a>(caps: &'a Captures<'_>, name: &str) -> &'a str {
    caps.name(name).map(|m| m.as_str().trim()).unwrap_or("")
}

fn number(caps: &Captures<'_>, name: &str) -> Result<usize, String> {
    group(caps, name)
        .parse()
        .map_err(|_| format!("`{}` is not a list number", group(caps, name)))
}

fn parse(grammar: &OutputGrammar, caps: &Captures<'_>) -> Result<ParsedLine, String> {
    Ok(match grammar.task {
        TaskId::EntityExtraction => ParsedLine::Entity {
            number: number(caps, "number")?,
            label: group(caps, "label").to_string(),
            description: group(caps, "description").to_string(),
            types: group(caps, "types")
                .split(';')
                .map(str::trim)
                .filter(|t| !t.is_empty())
                .map(str::to_string)
                .collect(),
        },
        TaskId::MentionRecognition => ParsedLine::Mention {
            entry: NumberedRef {
                number: number(caps, "number")?,
                label: group(caps, "label").to_string(),
            },
            mentioned: group(caps, "answer").eq_ignore_ascii_case("yes"),
        },
        TaskId::RelationExtraction => ParsedLine::Relation {
            subject: NumberedRef {
                number: number(caps, "subject_number")?,
                label: group(caps, "subject_label").to_string(),
            },
            predicate: group(caps, "predicate").to_string(),
            object: NumberedRef {
                number: number(caps, "object_number")?,
                label: group(caps, "object_label").to_string(),
            },
        },
        TaskId::PredicateDescription => ParsedLine::PredicateDescription {
            predicate: group(caps, "predicate").to_string(),
            description: group(caps, "description").to_string(),
        },
        TaskId::Summarization => ParsedLine::Text(group(caps, "text").to_string()),
        TaskId::ConceptShrinkage => ParsedLine::Label(group(caps, "label").to_string()),
        TaskId::ClusterDisambiguation => ParsedLine::Group(items(grammar, group(caps, "items"))?),
        TaskId::HypernymGeneration => ParsedLine::Hypernym {
            hypernym: group(caps, "hypernym").to_string(),
            relation: group(caps, "relation").to_string(),
            covered: items(grammar, group(caps, "items"))?,
        },
    })
}

fn items(grammar: &OutputGrammar, list: &str) -> Result<Vec<NumberedRef>, String> {
    let (item, separator) = grammar.item.as_ref().ok_or("grammar has no item pattern")?;
    list.split(separator.as_str())
        .map(|piece| {
            let caps = item
                .captures(piece)
                .ok_or_else(|| format!("`{}` is not a numbered item", piece.trim()))?;
            Ok(NumberedRef {
                number: number(&caps, "number")?,
                label: group(&caps, "label").to_string(),
            })
        })
        .collect()
}

/// Cross-line state: which entries were already claimed.
struct Consistency<'a> {
    reference: Option<&'a [String]>,
    claimed: BTreeSet<usize>,
    claimed_labels: BTreeSet<String>,
    labels_seen: usize,
}

impl<'a> Consistency<'a> {
    fn new(reference: Option<&'a [String]>) -> Self {
        Self {
            reference,
            claimed: BTreeSet::new(),
            claimed_labels: BTreeSet::new(),
            labels_seen: 0,
        }
    }

    fn matches(&self, entry: &NumberedRef) -> Result<(), String> {
        let Some(reference) = self.reference else {
            return Ok(());
        };
        match entry.number.checked_sub(1).and_then(|i| reference.get(i)) {
            None => Err(format!("entry {} is not in the list", entry.number)),
            Some(expected) if label_key(expected) != label_key(&entry.label) => Err(format!(
                "entry {} is `{}`, not `{}`",
                entry.number, expected, entry.label
            )),
            Some(_) => Ok(()),
        }
    }

    fn claim_all(&mut self, entries: &[NumberedRef]) -> Result<(), String> {
        let mut seen = BTreeSet::new();
        for entry in entries {
            self.matches(entry)?;
            if self.claimed.contains(&entry.number) || !seen.insert(entry.number) {
                return Err(format!("entry {} is listed more than once", entry.number));
            }
        }
        self.claimed.extend(seen);
        Ok(())
    }

    fn check(&mut self, task: TaskId, parsed: &ParsedLine) -> Result<(), String> {
        match parsed {
            ParsedLine::Mention { entry, .. } => self.claim_all(std::slice::from_ref(entry)),
            ParsedLine::Relation { subject, object, .. } => {
                self.matches(subject)?;
                self.matches(object)?;
                if subject.number == object.number {
                    return Err("subject and object are the same entry".into());
                }
                Ok(())
            }
            ParsedLine::PredicateDescription { predicate, .. } => {
                let key = label_key(predicate);
                if let Some(reference) = self.reference {
                    if !reference.iter().any(|p| label_key(p) == key) {
                        return Err(format!("`{predicate}` is not one of the listed predicates"));
                    }
                }
                if !self.claimed_labels.insert(key) {
                    return Err(format!("`{predicate}` is described more than once"));
                }
                Ok(())
            }
            ParsedLine::Group(members) => self.claim_all(members),
            ParsedLine::Hypernym { covered, .. } => self.claim_all(covered),
            ParsedLine::Label(_) if task == TaskId::ConceptShrinkage => {
                self.labels_seen += 1;
                if self.labels_seen > 1 {
                    return Err("only one label is expected".into());
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}
