//! End-to-end tests of the `tacmap` binary: exit codes, file outputs, and
//! the subcommand contracts.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tacmap_core::extraction::Prediction;
use tacmap_core::jsonl::read_jsonl;

fn tacmap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tacmap"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn assert_success(output: &Output) {
    assert!(
        output.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
}

fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

struct FixtureRun {
    #[allow(dead_code)]
    dir: tempfile::TempDir,
    fixture: PathBuf,
    run: PathBuf,
}

/// fixture + ingest + index, shared by the predict/evaluate tests.
fn prepared() -> FixtureRun {
    let dir = tempfile::tempdir().unwrap();
    let fixture = dir.path().join("fx");
    let run = dir.path().join("run");
    assert_success(&tacmap(&["fixture", "--out", fixture.to_str().unwrap()]));
    assert_success(&tacmap(&[
        "ingest",
        "--snapshot",
        fixture.join("bundle.json").to_str().unwrap(),
        "--version-tag",
        "fixture",
        "--out",
        run.to_str().unwrap(),
    ]));
    assert_success(&tacmap(&[
        "index",
        "--procedures",
        run.join("procedures.jsonl").to_str().unwrap(),
        "--out",
        run.join("index.bin").to_str().unwrap(),
    ]));
    FixtureRun { dir, fixture, run }
}

fn predict(setup: &FixtureRun, mode: &str, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "predict".to_string(),
        "--procedures".into(),
        setup.run.join("procedures.jsonl").display().to_string(),
        "--index".into(),
        setup.run.join("index.bin").display().to_string(),
        "--cache".into(),
        setup.fixture.join("pages").display().to_string(),
        "--mode".into(),
        mode.to_string(),
        "--backend".into(),
        "mock".into(),
        "--out".into(),
        out.display().to_string(),
    ];
    args.extend(extra.iter().map(|s| s.to_string()));
    Command::new(env!("CARGO_BIN_EXE_tacmap")).args(&args).output().expect("binary runs")
}

#[test]
fn missing_snapshot_is_a_usage_error_with_exit_code_2() {
    let output = tacmap(&["ingest", "--out", "/tmp/nowhere-tacmap-test"]);
    assert_eq!(output.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&output.stderr).contains("--snapshot"));
}

#[test]
fn unknown_mode_is_a_usage_error() {
    let setup = prepared();
    let out = setup.dir.path().join("p");
    let output = predict(&setup, "sideways", &out, &[]);
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn replay_forbids_live_fetch() {
    let setup = prepared();
    let out = setup.dir.path().join("p");
    let output = predict(&setup, "exact-url", &out, &["--live-fetch"]);
    // --backend mock from the helper; override with replay via config file
    assert_success(&output);
    let config_path = setup.dir.path().join("run.toml");
    std::fs::write(&config_path, "backend = \"replay\"\nlive_fetch = true\n").unwrap();
    let output = tacmap(&[
        "predict",
        "--config",
        config_path.to_str().unwrap(),
        "--procedures",
        setup.run.join("procedures.jsonl").to_str().unwrap(),
        "--cache",
        setup.fixture.join("pages").to_str().unwrap(),
        "--mode",
        "exact-url",
        "--out",
        setup.dir.path().join("p2").to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&output.stderr).contains("replay"));
}

#[test]
fn ingest_is_deterministic_and_reports_stats() {
    let setup = prepared();
    let output = tacmap(&[
        "ingest",
        "--snapshot",
        setup.fixture.join("bundle.json").to_str().unwrap(),
        "--version-tag",
        "fixture",
        "--out",
        setup.dir.path().join("run-b").to_str().unwrap(),
    ]);
    assert_success(&output);
    assert!(stdout(&output).contains("descriptions: 26"));
    assert!(stdout(&output).contains("procedures: 50"));
    for file in ["descriptions.jsonl", "procedures.jsonl", "overlap.csv"] {
        let a = std::fs::read(setup.run.join(file)).unwrap();
        let b = std::fs::read(setup.dir.path().join("run-b").join(file)).unwrap();
        assert_eq!(a, b, "{file} differs between runs");
    }
}

#[test]
fn prompt_only_mock_predicts_nothing_and_journals() {
    let setup = prepared();
    let out = setup.dir.path().join("ponly");
    assert_success(&predict(&setup, "prompt-only", &out, &[]));
    let predictions: Vec<Prediction> = read_jsonl(&out.join("predictions.jsonl")).unwrap();
    assert_eq!(predictions.len(), 50);
    assert!(predictions.iter().all(|p| p.predicted.is_empty()));
    let journal = std::fs::read_to_string(out.join("journal.jsonl")).unwrap();
    assert_eq!(journal.lines().count(), 50);
    assert!(journal.contains("Unknown."));
    assert!(out.join("run_config.json").exists());
}

#[test]
fn exact_url_mock_recovers_page_tactics() {
    let setup = prepared();
    let out = setup.dir.path().join("exact");
    assert_success(&predict(&setup, "exact-url", &out, &[]));
    let predictions: Vec<Prediction> = read_jsonl(&out.join("predictions.jsonl")).unwrap();
    assert_eq!(predictions.len(), 50);
    assert!(predictions.iter().all(|p| !p.predicted.is_empty()));
    assert!(predictions.iter().all(|p| p.url_matched));

    let output = tacmap(&[
        "evaluate",
        "--predictions",
        out.join("predictions.jsonl").to_str().unwrap(),
        "--procedures",
        setup.run.join("procedures.jsonl").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_success(&output);
    assert!(stdout(&output).contains("samples-average"));
    assert!(out.join("report.csv").exists());
    assert!(out.join("report.md").exists());
}

#[test]
fn split_by_url_writes_subgroup_reports_that_sum() {
    let setup = prepared();
    let out = setup.dir.path().join("sim");
    assert_success(&predict(&setup, "similar-procedures", &out, &[]));
    let output = tacmap(&[
        "evaluate",
        "--predictions",
        out.join("predictions.jsonl").to_str().unwrap(),
        "--procedures",
        setup.run.join("procedures.jsonl").to_str().unwrap(),
        "--split-by-url",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_success(&output);
    let text = stdout(&output);
    let sizes: Vec<u64> = text
        .lines()
        .find(|l| l.starts_with("subgroups:"))
        .unwrap()
        .split(['=', ' '])
        .filter_map(|w| w.parse().ok())
        .collect();
    assert_eq!(sizes.len(), 3);
    assert_eq!(sizes[0] + sizes[1], sizes[2]);
    assert!(out.join("report_matched-url.csv").exists());
    assert!(out.join("report_unmatched-url.csv").exists());
}

#[test]
fn interrupted_predict_resumes_from_journal() {
    let setup = prepared();
    let out = setup.dir.path().join("resume");
    assert_success(&predict(&setup, "exact-url", &out, &[]));
    let full = std::fs::read(out.join("predictions.jsonl")).unwrap();

    // keep the first 20 journal lines, as if the run had been interrupted
    let journal = std::fs::read_to_string(out.join("journal.jsonl")).unwrap();
    let head: String =
        journal.lines().take(20).map(|l| format!("{l}\n")).collect();
    std::fs::write(out.join("journal.jsonl"), head).unwrap();
    std::fs::remove_file(out.join("predictions.jsonl")).unwrap();

    let output = predict(&setup, "exact-url", &out, &[]);
    assert_success(&output);
    assert!(stdout(&output).contains("resumed 20 procedures"));
    assert_eq!(std::fs::read(out.join("predictions.jsonl")).unwrap(), full);
}

#[test]
fn corrupted_index_fails_with_checksum_error() {
    let setup = prepared();
    let index_path = setup.run.join("index.bin");
    let mut bytes = std::fs::read(&index_path).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0xff;
    std::fs::write(&index_path, bytes).unwrap();
    let out = setup.dir.path().join("p");
    let output = predict(&setup, "similar-procedures", &out, &[]);
    assert_eq!(output.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&output.stderr).contains("checksum"));
}

#[test]
fn evaluate_exits_nonzero_when_predictions_are_missing() {
    let setup = prepared();
    let out = setup.dir.path().join("exact");
    assert_success(&predict(&setup, "exact-url", &out, &[]));
    // drop the last prediction
    let lines = std::fs::read_to_string(out.join("predictions.jsonl")).unwrap();
    let truncated: String =
        lines.lines().take(49).map(|l| format!("{l}\n")).collect();
    std::fs::write(out.join("predictions.jsonl"), truncated).unwrap();

    let output = tacmap(&[
        "evaluate",
        "--predictions",
        out.join("predictions.jsonl").to_str().unwrap(),
        "--procedures",
        setup.run.join("procedures.jsonl").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&output.stderr).contains("lacked a prediction"));
    // the partial report is still produced
    assert!(out.join("report.csv").exists());
}

#[test]
fn baseline_trains_and_reports() {
    let setup = prepared();
    let out = setup.dir.path().join("base");
    let output = tacmap(&[
        "baseline",
        "--descriptions",
        setup.run.join("descriptions.jsonl").to_str().unwrap(),
        "--procedures",
        setup.run.join("procedures.jsonl").to_str().unwrap(),
        "--learning-rate",
        "5",
        "--epochs",
        "150",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_success(&output);
    assert!(out.join("model.bin").exists());
    assert!(out.join("report.md").exists());
    let predictions: Vec<Prediction> = read_jsonl(&out.join("predictions.jsonl")).unwrap();
    assert_eq!(predictions.len(), 50);
    assert!(predictions.iter().all(|p| p.prompt_variant.is_none()));
    let report = std::fs::read_to_string(out.join("report.csv")).unwrap();
    assert!(report.contains("per_tactic,collection,"));
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let setup = prepared();
    let config_path = setup.dir.path().join("run.toml");
    std::fs::write(
        &config_path,
        format!(
            "mode = \"prompt-only\"\nbackend = \"mock\"\ncache_dir = \"{}\"\n",
            setup.fixture.join("pages").display()
        ),
    )
    .unwrap();
    let out = setup.dir.path().join("from-config");
    let output = tacmap(&[
        "predict",
        "--config",
        config_path.to_str().unwrap(),
        "--procedures",
        setup.run.join("procedures.jsonl").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_success(&output);
    assert!(stdout(&output).contains("mode=prompt-only"));
    // flag overrides the file's mode
    let out2 = setup.dir.path().join("override");
    let output = tacmap(&[
        "predict",
        "--config",
        config_path.to_str().unwrap(),
        "--procedures",
        setup.run.join("procedures.jsonl").to_str().unwrap(),
        "--mode",
        "exact-url",
        "--out",
        out2.to_str().unwrap(),
    ]);
    assert_success(&output);
    assert!(stdout(&output).contains("mode=exact-url"));
    let echo = std::fs::read_to_string(out2.join("run_config.json")).unwrap();
    assert!(echo.contains("exact-url"));
}
