//! Whole-pipeline behaviour: reruns, partial invalidation and failures.

use std::path::{Path, PathBuf};

use varietybench::config::RunConfig;
use varietybench::pipeline::run_pipeline;
use varietybench::prompting::PromptVariant;
use varietybench::synth::{generate_text, SynthConfig};

fn small_corpus(dir: &Path) -> PathBuf {
    let config = SynthConfig {
        records: 400,
        twins: 120,
        other: 10,
        noise: 10,
        over_cap: 2,
        hotels: 8,
        ..SynthConfig::default()
    };
    let path = dir.join("reviews.jsonl");
    std::fs::write(&path, generate_text(&config)).unwrap();
    path
}

fn config(input: &Path, out: &Path) -> RunConfig {
    RunConfig {
        inputs: vec![input.to_path_buf()],
        output_dir: out.to_path_buf(),
        endpoints: vec!["mock:echo-score".into(), "mock:noisy".into()],
        ..RunConfig::default()
    }
}

#[test]
fn rerun_reuses_everything_and_keeps_the_bundle() {
    let dir = tempfile::tempdir().unwrap();
    let input = small_corpus(dir.path());
    let out = dir.path().join("out");
    let first = run_pipeline(&config(&input, &out)).unwrap();
    assert!(first.stages.iter().all(|s| !s.reused));
    let gap = std::fs::read(out.join("report/gap.csv")).unwrap();

    let second = run_pipeline(&config(&input, &out)).unwrap();
    assert!(second.stages.iter().all(|s| s.reused), "{:?}", second.stages);
    assert_eq!(first.bundle_sha256, second.bundle_sha256);
    assert_eq!(gap, std::fs::read(out.join("report/gap.csv")).unwrap());

    // a fresh directory gives the same bytes
    let other = dir.path().join("again");
    let third = run_pipeline(&config(&input, &other)).unwrap();
    assert_eq!(first.bundle_sha256, third.bundle_sha256);
}

#[test]
fn damaged_artifacts_are_rebuilt() {
    let dir = tempfile::tempdir().unwrap();
    let input = small_corpus(dir.path());
    let out = dir.path().join("out");
    let first = run_pipeline(&config(&input, &out)).unwrap();
    let target = out.join("completions/mock-noisy.plain.jsonl");
    let original = std::fs::read(&target).unwrap();
    std::fs::write(&target, b"truncated").unwrap();

    let second = run_pipeline(&config(&input, &out)).unwrap();
    let rebuilt: Vec<&str> = second
        .stages
        .iter()
        .filter(|s| !s.reused)
        .map(|s| s.artifact.as_str())
        .collect();
    assert_eq!(rebuilt, ["completions/mock-noisy.plain.jsonl"]);
    assert_eq!(std::fs::read(&target).unwrap(), original);
    assert_eq!(first.bundle_sha256, second.bundle_sha256);
}

#[test]
fn adding_an_endpoint_keeps_upstream_stages() {
    let dir = tempfile::tempdir().unwrap();
    let input = small_corpus(dir.path());
    let out = dir.path().join("out");
    run_pipeline(&config(&input, &out)).unwrap();
    let mut more = config(&input, &out);
    more.endpoints.push("mock:biased-cn-1".into());
    let run = run_pipeline(&more).unwrap();
    let reused = |artifact: &str| run.stages.iter().find(|s| s.artifact == artifact).unwrap().reused;
    assert!(reused("records.jsonl"));
    assert!(reused("pairs.jsonl"));
    assert!(reused("completions/mock-echo-score.structured.jsonl"));
    assert!(!reused("completions/mock-biased-cn-1.plain.jsonl"));
    assert!(!reused("report/gap.csv"));
}

#[test]
fn seed_change_invalidates_pairs_and_everything_after() {
    let dir = tempfile::tempdir().unwrap();
    let input = small_corpus(dir.path());
    let out = dir.path().join("out");
    run_pipeline(&config(&input, &out)).unwrap();
    let mut reseeded = config(&input, &out);
    reseeded.seed = 99;
    let run = run_pipeline(&reseeded).unwrap();
    for s in &run.stages {
        let upstream = ["records.jsonl", "rejects.log", "report/length_histogram.md", "profiles.jsonl", "report/script_distribution.md"];
        assert_eq!(s.reused, upstream.contains(&s.artifact.as_str()), "{s:?}");
    }
}

#[test]
fn plain_only_run_reports_only_plain() {
    let dir = tempfile::tempdir().unwrap();
    let input = small_corpus(dir.path());
    let out = dir.path().join("out");
    let mut c = config(&input, &out);
    c.endpoints = vec!["mock:echo-score".into()];
    c.variants = vec![PromptVariant::Plain];
    let run = run_pipeline(&c).unwrap();
    assert_eq!(run.gap_rows.len(), 9);
    let csv = std::fs::read_to_string(out.join("report/gap.csv")).unwrap();
    assert_eq!(csv.lines().count(), 10);
    assert!(csv.lines().skip(1).all(|l| l.starts_with("mock:echo-score,plain,")));
    let md = std::fs::read_to_string(out.join("report/gap.md")).unwrap();
    assert!(!md.contains("structured") && !md.contains("shuffled"));
    assert!(!out.join("completions/mock-echo-score.structured.jsonl").exists());
}

#[test]
fn failures_name_their_stage() {
    let dir = tempfile::tempdir().unwrap();
    let input = small_corpus(dir.path());
    let out = dir.path().join("out");

    let missing = config(&dir.path().join("nope.jsonl"), &out);
    assert_eq!(run_pipeline(&missing).unwrap_err().stage, "ingest");

    let mut unknown = config(&input, &out);
    unknown.endpoints = vec!["no-such-endpoint".into()];
    let err = run_pipeline(&unknown).unwrap_err();
    assert_eq!(err.stage, "eval");
    assert!(err.to_string().starts_with("stage `eval` failed"));

    let mut translator = config(&input, &out);
    translator.mt_endpoint = Some("mock:echo".into());
    translator.mt_translator = "carrier-pigeon".into();
    assert_eq!(run_pipeline(&translator).unwrap_err().stage, "mt");

    let nothing_pairs = dir.path().join("tw_only.jsonl");
    let tw_only: String = std::fs::read_to_string(&input)
        .unwrap()
        .lines()
        .filter(|l| l.contains("\"user_nationality\":\"tw\""))
        .map(|l| format!("{l}\n"))
        .collect();
    assert!(tw_only.lines().count() > 100);
    std::fs::write(&nothing_pairs, tw_only).unwrap();
    assert_eq!(run_pipeline(&config(&nothing_pairs, &out)).unwrap_err().stage, "pair");
}

#[test]
fn translation_and_sweep_reports_are_written() {
    let dir = tempfile::tempdir().unwrap();
    let input = small_corpus(dir.path());
    let out = dir.path().join("out");
    let mut c = config(&input, &out);
    c.endpoints = vec!["mock:echo-score".into()];
    c.mt_endpoint = Some("mock:script-biased-1".into());
    c.mt_translator = "mock:charmap".into();
    c.sweep_endpoint = Some("mock:echo-sentiment".into());
    c.sweep_quota = 20;
    let run = run_pipeline(&c).unwrap();
    assert_eq!(run.mt_rows.len(), 6);
    let mt = std::fs::read_to_string(out.join("report/mt.md")).unwrap();
    assert!(mt.contains("| plain | tw |") && mt.contains("| plain | cn |"), "{mt}");
    let sweep = std::fs::read_to_string(out.join("report/sweep.md")).unwrap();
    assert!(!sweep.is_empty());
    let listing = std::fs::read_to_string(out.join("bundle.sha256")).unwrap();
    assert!(listing.contains("report/mt.md") && listing.contains("report/sweep.md"));
    assert!(listing.trim_end().ends_with("bundle"));
}
