mod common;

use std::process::Command;
use std::time::Instant;

use kgen::model::import_graph;
use kgen::pipeline::{self, Stage, StageStore};

use common::*;

#[test]
fn golden_runs_are_byte_identical_and_match_the_frozen_artifacts() {
    let started = Instant::now();
    let expected = expected_artifacts();
    for _ in 0..5 {
        let dir = tempfile::tempdir().unwrap();
        run_golden(dir.path(), &Stage::ALL).expect("golden run");
        for ((name, got), (_, want)) in read_artifacts(dir.path()).iter().zip(&expected) {
            assert!(got == want, "{name} differs from the frozen copy");
        }
    }
    assert!(
        started.elapsed().as_secs() < 30,
        "five runs took {:?}",
        started.elapsed()
    );
}

#[test]
fn golden_graph_holds_the_landmark_and_splits_the_vehicles() {
    let dir = tempfile::tempdir().unwrap();
    run_golden(dir.path(), &Stage::ALL).unwrap();
    let resolved = import_graph(
        &StageStore::new(dir.path())
            .read(Stage::Resolve, pipeline::RESOLVED_GRAPH)
            .unwrap(),
    )
    .unwrap();
    let triples = labelled_triplets(&resolved);
    assert!(triples.contains(&(
        "Cagliari".into(),
        "has landmark".into(),
        "Bastione di Santa Croce".into()
    )));

    let mut groups = vehicle_groups(dir.path());
    groups.sort();
    assert_eq!(
        groups,
        vec![
            vec!["automobile".to_string(), "motor car".into()],
            vec!["bicycle".into(), "bike".into(), "bike".into()],
            vec!["motorbike".into(), "motorcycle".into()],
        ]
    );
    let labels: Vec<&str> = resolved.entities().map(|e| e.label.as_str()).collect();
    for canonical in ["car", "bicycle", "motorcycle"] {
        assert!(labels.contains(&canonical), "missing {canonical}");
    }
    assert_eq!(resolved.entities().len(), 9);
}

#[test]
fn golden_run_logs_no_rejections() {
    let dir = tempfile::tempdir().unwrap();
    run_golden(dir.path(), &Stage::ALL).unwrap();
    let store = StageStore::new(dir.path());
    for stage in [Stage::Extract, Stage::Resolve, Stage::Schema] {
        assert!(store.read(stage, pipeline::REJECTIONS).unwrap().is_empty(), "{stage:?}");
    }
}

#[test]
fn immediate_rerun_is_fully_cached() {
    let dir = tempfile::tempdir().unwrap();
    let first = run_golden(dir.path(), &Stage::ALL).unwrap();
    assert!(first.gateway_calls() > 0);
    assert!(first.outcomes.iter().all(|o| !o.cached));
    let second = run_golden(dir.path(), &Stage::ALL).unwrap();
    assert_eq!(second.gateway_calls(), 0);
    assert!(second.outcomes.iter().all(|o| o.cached));
    for (a, b) in first.outcomes.iter().zip(&second.outcomes) {
        assert_eq!(a.output_digest, b.output_digest);
    }
}

#[test]
fn stage_selection_runs_only_the_closure() {
    let dir = tempfile::tempdir().unwrap();
    let report = run_golden(dir.path(), &[Stage::Extract]).unwrap();
    let stages: Vec<Stage> = report.outcomes.iter().map(|o| o.stage).collect();
    assert_eq!(stages, vec![Stage::Ingest, Stage::Extract]);
    let store = StageStore::new(dir.path());
    assert!(store.record(Stage::Resolve).is_none());
    assert!(store.record(Stage::Extract).is_some());
}

#[test]
fn tampered_payload_rebuilds_its_stage_and_nothing_upstream() {
    let dir = tempfile::tempdir().unwrap();
    run_golden(dir.path(), &Stage::ALL).unwrap();
    let store = StageStore::new(dir.path());
    let path = store.path(Stage::Resolve, pipeline::RESOLVED_GRAPH);
    std::fs::write(&path, b"{}").unwrap();
    let report = run_golden(dir.path(), &Stage::ALL).unwrap();
    assert!(report.outcome(Stage::Extract).unwrap().cached);
    let resolve = report.outcome(Stage::Resolve).unwrap();
    assert!(!resolve.cached);
    assert!(resolve.gateway_calls > 0);
    // The rebuilt output is identical, so downstream stays cached.
    assert!(report.outcome(Stage::Schema).unwrap().cached);
    assert_eq!(read_artifacts(dir.path()), expected_artifacts());
}

#[test]
fn corpus_edit_forces_extraction_to_rebuild() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    std::fs::create_dir(&corpus).unwrap();
    for entry in std::fs::read_dir(golden_dir().join("corpus")).unwrap() {
        let entry = entry.unwrap();
        std::fs::copy(entry.path(), corpus.join(entry.file_name())).unwrap();
    }
    let out = dir.path().join("out");
    let mut config = golden_config(&out);
    config.input_dir = corpus.clone();
    let gateway = kgen::llm::Gateway::from_config(&config.backend).unwrap();
    let embedder = config.embedding.build().unwrap();
    let prompts = kgen::prompts::PromptSet::builtin();
    let pipeline = kgen::pipeline::Pipeline::new(&config, &gateway, embedder.as_ref(), &prompts);
    pipeline.run(&Stage::ALL).unwrap();

    std::fs::write(corpus.join("poetto.txt"), "Something the transcript never saw.").unwrap();
    let err = pipeline.run(&Stage::ALL).unwrap_err();
    assert_eq!(err.exit_code(), 2, "{err}");
}

#[test]
fn metrics_without_annotations_are_degenerate() {
    let dir = tempfile::tempdir().unwrap();
    run_golden(dir.path(), &Stage::ALL).unwrap();
    let report = pipeline::evaluate(dir.path()).unwrap();
    assert_eq!(report.entities.pending, 9);
    assert!(report.precision_entities.degenerate);
    assert!(report.f1_entities.degenerate);
}

fn kgen() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_kgen"));
    cmd.env("RUST_LOG", "warn");
    cmd
}

fn golden_run_cmd(out: &std::path::Path) -> Command {
    let mut cmd = kgen();
    cmd.arg("--config")
        .arg(golden_dir().join("config.toml"))
        .arg("--input-dir")
        .arg(golden_dir().join("corpus"))
        .arg("--fixture-file")
        .arg(golden_dir().join("llm.json"))
        .arg("--out-dir")
        .arg(out)
        .arg("run");
    cmd
}

#[test]
fn cli_usage_errors_exit_one() {
    assert_eq!(kgen().arg("frobnicate").status().unwrap().code(), Some(1));
    assert_eq!(
        kgen().args(["run", "--stages", "bogus"]).status().unwrap().code(),
        Some(1)
    );
    assert_eq!(kgen().arg("--help").output().unwrap().status.code(), Some(0));
}

#[test]
fn cli_run_then_rerun_reports_cached() {
    let dir = tempfile::tempdir().unwrap();
    let first = golden_run_cmd(dir.path()).output().unwrap();
    assert_eq!(
        first.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&first.stderr)
    );
    let stdout = String::from_utf8(first.stdout).unwrap();
    assert!(stdout.contains("extract  built"), "{stdout}");
    let second = golden_run_cmd(dir.path()).output().unwrap();
    let stdout = String::from_utf8(second.stdout).unwrap();
    assert_eq!(stdout.lines().filter(|l| l.contains("cached")).count(), 5, "{stdout}");
    assert_eq!(read_artifacts(dir.path()), expected_artifacts());
}

#[test]
fn cli_stage_failure_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty");
    std::fs::create_dir(&empty).unwrap();
    let status = golden_run_cmd(&dir.path().join("out"))
        .arg("--input-dir")
        .arg(&empty)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn cli_missing_fixture_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let status = golden_run_cmd(dir.path())
        .arg("--fixture-file")
        .arg(dir.path().join("absent.json"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));
}

#[test]
fn cli_evaluate_and_export() {
    let dir = tempfile::tempdir().unwrap();
    assert!(golden_run_cmd(dir.path()).status().unwrap().success());
    let out = kgen()
        .arg("--out-dir")
        .arg(dir.path())
        .arg("evaluate")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(!out.stdout.is_empty());

    let nt = kgen()
        .arg("--out-dir")
        .arg(dir.path())
        .args(["export", "--format", "ntriples"])
        .output()
        .unwrap();
    assert!(nt.status.success());
    let nt = String::from_utf8(nt.stdout).unwrap();
    assert!(nt.lines().all(|l| l.trim_end().ends_with(" .")), "{nt}");
    assert!(nt.contains("/entity/Bastione%20di%20Santa%20Croce>"));

    let schema = kgen()
        .arg("--out-dir")
        .arg(dir.path())
        .args(["export", "--format", "ntriples", "--target", "schema"])
        .output()
        .unwrap();
    assert_eq!(
        schema.stdout,
        std::fs::read(golden_dir().join("expected/schema.nt")).unwrap()
    );

    let doc = dir.path().join("graph.json");
    let status = kgen()
        .arg("--out-dir")
        .arg(dir.path())
        .args(["export", "--format", "doc", "--output"])
        .arg(&doc)
        .status()
        .unwrap();
    assert!(status.success());
    let graph = import_graph(&std::fs::read(&doc).unwrap()).unwrap();
    assert_eq!(graph.entities().len(), 9);
}
