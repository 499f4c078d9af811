mod common;

use std::sync::OnceLock;

use kgen::extractor::{validate_response, ParsedLine, RejectReason};
use kgen::prompts::{PromptSet, TaskId};
use proptest::prelude::*;

fn refs(labels: &[&str]) -> Vec<String> {
    labels.iter().map(|s| s.to_string()).collect()
}

#[test]
fn documented_lines_get_the_stated_verdict() {
    let prompts = PromptSet::builtin();
    for case in common::validator_cases() {
        let report = validate_response(case.line, &prompts.get(case.task).grammar, case.reference.as_deref());
        assert_eq!(report.line_count(), 1, "{}", case.line);
        match case.expect {
            None => assert_eq!(
                report.accepted.len(),
                1,
                "expected `{}` to be accepted: {report:?}",
                case.line
            ),
            Some(reason) => {
                assert_eq!(report.rejected.len(), 1, "expected `{}` to be rejected", case.line);
                assert_eq!(report.rejected[0].reason, reason, "{}", case.line);
            }
        }
    }
}

#[test]
fn one_malformed_entity_line_among_five() {
    let raw = "1. Cagliari | The capital city of Sardinia | City\n\
               2. Sardinia | An island | Island\n\
               Bastione di Santa Croce is a terrace\n\
               3. Poetto | A beach | Beach\n\
               4. Sella del Diavolo | A promontory | Promontory";
    let prompts = PromptSet::builtin();
    let report = validate_response(raw, &prompts.get(TaskId::EntityExtraction).grammar, None);
    assert_eq!(report.accepted.len(), 4);
    assert_eq!(report.rejected.len(), 1);
    assert_eq!(report.rejected[0].reason, RejectReason::PatternMismatch);
    assert_eq!(report.rejected[0].line, 3);
    assert!(matches!(&report.accepted[3].parsed, ParsedLine::Entity { label, .. } if label == "Sella del Diavolo"));
}

#[test]
fn a_type_covered_twice_is_rejected_the_second_time() {
    let prompts = PromptSet::builtin();
    let reference = refs(&["motor car", "automobile"]);
    let report = validate_response(
        common::DOUBLE_COVERAGE,
        &prompts.get(TaskId::HypernymGeneration).grammar,
        Some(&reference),
    );
    assert_eq!(report.accepted.len(), 1);
    assert_eq!(report.rejected.len(), 1);
    assert_eq!(report.rejected[0].line, 2);
    assert_eq!(report.rejected[0].reason, RejectReason::ConsistencyViolation);
}

fn prompts() -> &'static PromptSet {
    static PROMPTS: OnceLock<PromptSet> = OnceLock::new();
    PROMPTS.get_or_init(PromptSet::builtin)
}

const TASKS: [TaskId; 7] = [
    TaskId::EntityExtraction,
    TaskId::MentionRecognition,
    TaskId::RelationExtraction,
    TaskId::PredicateDescription,
    TaskId::ClusterDisambiguation,
    TaskId::ConceptShrinkage,
    TaskId::HypernymGeneration,
];

/// Lines near the grammars: well-formed templates with random numbers and
/// labels, and random damage applied to some of them.
fn line() -> impl Strategy<Value = String> {
    let label = "[A-Za-z][A-Za-z ]{0,10}";
    let n = 1usize..6;
    let shapes = prop_oneof![
        (n.clone(), label, label).prop_map(|(n, l, t)| format!("{n}. {l} | a description | {t}")),
        (n.clone(), label, prop::bool::ANY)
            .prop_map(|(n, l, y)| format!("{n}. {l} - {}", if y { "yes" } else { "no" })),
        (n.clone(), label, n.clone(), label).prop_map(|(a, s, b, o)| format!("({a}) {s}; relates to; ({b}) {o}")),
        (label, label).prop_map(|(p, d)| format!("{p} :: {d}")),
        (n.clone(), label, n.clone(), label).prop_map(|(a, x, b, y)| format!("({a}) {x} | ({b}) {y}")),
        label.prop_map(|l| format!("Label: {l}")),
        (label, n.clone(), label).prop_map(|(h, a, t)| format!("{h} :: is type of :: ({a}) {t}")),
        "[ -~]{0,40}",
    ];
    (shapes, 0usize..4, any::<u8>()).prop_map(|(s, damage, byte)| {
        let mut s = s;
        match damage {
            1 if !s.is_empty() => {
                s.remove(byte as usize % s.len());
            }
            2 => s.insert(0, (b' ' + byte % 95) as char),
            _ => {}
        }
        s
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn every_line_is_classified_once(
        lines in proptest::collection::vec(line(), 0..12),
        task in prop::sample::select(TASKS.to_vec()),
        with_reference in any::<bool>(),
    ) {
        let reference = refs(&["Cagliari", "Sardinia", "car", "automobile", "legumes"]);
        let raw = lines.join("\n");
        let grammar = &prompts().get(task).grammar;
        let report = validate_response(&raw, grammar, with_reference.then_some(reference.as_slice()));
        let non_blank: Vec<(usize, &str)> = raw
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| (i + 1, l))
            .collect();
        prop_assert_eq!(report.accepted.len() + report.rejected.len(), non_blank.len());
        let mut seen: Vec<(usize, &str)> = report
            .accepted
            .iter()
            .map(|a| (a.line, a.raw.as_str()))
            .chain(report.rejected.iter().map(|r| (r.line, r.raw.as_str())))
            .collect();
        seen.sort();
        prop_assert_eq!(seen, non_blank);
        prop_assert_eq!(report.whole_rejected, report.accepted.is_empty() && !report.rejected.is_empty());
    }
}
