use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = "\
n_npo_records = 6
n_apo_records = 6
record_minutes = 20
latent_dim = 6
d_model = 8
token_patch = 100
max_epochs = 2
min_epochs = 0
bootstrap = 50
";

fn ctgvae(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ctgvae")).args(args).output().expect("spawn ctgvae")
}

fn ok(args: &[&str]) {
    let out = ctgvae(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn failure(args: &[&str]) -> String {
    let out = ctgvae(args);
    assert!(!out.status.success(), "{args:?} unexpectedly succeeded");
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn s(p: &Path) -> String {
    p.display().to_string()
}

/// synth, preprocess and train into `root`, returning the config path.
fn small_pipeline(root: &Path) -> String {
    let conf = root.join("small.conf");
    std::fs::write(&conf, SMALL).unwrap();
    let c = s(&conf);
    ok(&["synth", "--config", &c, "--out", &s(&root.join("synth"))]);
    ok(&[
        "preprocess",
        "--config",
        &c,
        "--corpus",
        &s(&root.join("synth/corpus.ndjson")),
        "--out",
        &s(&root.join("prep")),
    ]);
    ok(&[
        "train",
        "--config",
        &c,
        "--segments",
        &s(&root.join("prep/segments.bin")),
        "--out",
        &s(&root.join("train")),
    ]);
    c
}

#[test]
fn eval_rejects_checkpoint_with_other_latent_dim() {
    let dir = tempfile::tempdir().unwrap();
    let c = small_pipeline(dir.path());
    let err = failure(&[
        "eval",
        "--config",
        &c,
        "--set",
        "latent_dim=4",
        "--checkpoint",
        &s(&dir.path().join("train/model.ckpt")),
        "--segments",
        &s(&dir.path().join("prep/segments.bin")),
        "--out",
        &s(&dir.path().join("eval")),
    ]);
    assert!(
        err.contains("configuration mismatch: checkpoint has latent_dim = 6 but the run configuration sets latent_dim = 4"),
        "{err}"
    );
    assert!(!dir.path().join("eval/metrics.json").exists());

    // without the conflicting key the same checkpoint evaluates
    ok(&[
        "eval",
        "--config",
        &c,
        "--checkpoint",
        &s(&dir.path().join("train/model.ckpt")),
        "--segments",
        &s(&dir.path().join("prep/segments.bin")),
        "--out",
        &s(&dir.path().join("eval")),
    ]);
    let metrics = std::fs::read_to_string(dir.path().join("eval/metrics.json")).unwrap();
    assert!(metrics.contains("segment_auroc"));
}

#[test]
fn resolved_config_reproduces_a_run() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("c.conf");
    std::fs::write(&conf, "n_npo_records = 3\nn_apo_records = 2\nrecord_minutes = 10\n").unwrap();
    let first = dir.path().join("first");
    ok(&["synth", "--config", &s(&conf), "--seed", "42", "--out", &s(&first)]);
    let resolved = std::fs::read_to_string(first.join("config.resolved")).unwrap();
    assert!(resolved.contains("seed = 42\n"), "{resolved}");

    let second = dir.path().join("second");
    ok(&["synth", "--config", &s(&first.join("config.resolved")), "--out", &s(&second)]);
    assert_eq!(
        std::fs::read(first.join("corpus.ndjson")).unwrap(),
        std::fs::read(second.join("corpus.ndjson")).unwrap()
    );
    assert_eq!(resolved, std::fs::read_to_string(second.join("config.resolved")).unwrap());
}

#[test]
fn malformed_corpus_reports_its_line() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("bad.ndjson");
    std::fs::write(
        &corpus,
        "{\"format_version\":1,\"kind\":\"ctg_corpus\"}\n{\"ctg_id\":\"a\",\"group\":\"NPO\"\n",
    )
    .unwrap();
    let err = failure(&["preprocess", "--corpus", &s(&corpus), "--out", &s(&dir.path().join("prep"))]);
    assert!(err.contains("line 2"), "{err}");
    assert!(!dir.path().join("prep/segments.bin").exists());
}

#[test]
fn config_errors_name_the_offending_line() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("c.conf");
    std::fs::write(&conf, "# comment\nlatent_dim = 8\nlatnet_dim = 4\n").unwrap();
    let err = failure(&["synth", "--config", &s(&conf), "--out", &s(&dir.path().join("o"))]);
    assert!(err.contains(":3") && err.contains("latnet_dim"), "{err}");

    let err = failure(&["synth", "--set", "latent_dim=many", "--out", &s(&dir.path().join("o"))]);
    assert!(err.contains("latent_dim"), "{err}");
}

#[test]
fn threads_must_be_positive() {
    let dir = tempfile::tempdir().unwrap();
    failure(&["synth", "--threads", "0", "--out", &s(&dir.path().join("o"))]);
    ok(&["synth", "--threads", "4", "--set", "n_npo_records=1", "--set", "n_apo_records=1", "--out", &s(&dir.path().join("o"))]);
}

#[test]
fn features_command_writes_versioned_csv() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("c.conf");
    std::fs::write(&conf, "n_npo_records = 2\nn_apo_records = 2\nrecord_minutes = 10\n").unwrap();
    let c = s(&conf);
    ok(&["synth", "--config", &c, "--out", &s(&dir.path().join("synth"))]);
    ok(&[
        "preprocess",
        "--config",
        &c,
        "--corpus",
        &s(&dir.path().join("synth/corpus.ndjson")),
        "--out",
        &s(&dir.path().join("prep")),
    ]);
    ok(&[
        "features",
        "--segments",
        &s(&dir.path().join("prep/segments.bin")),
        "--out",
        &s(&dir.path().join("feat")),
    ]);
    let csv = std::fs::read_to_string(dir.path().join("feat/features.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("# format_version=1"));
    assert!(lines.next().unwrap().contains("baseline"));
    assert!(lines.count() > 0);
}
