//! End-to-end CLI checks: subcommand wiring, manifests, and run-to-run
//! reproducibility of the produced files.

use std::path::Path;
use std::process::Command;

fn puli() -> Command {
    Command::new(env!("CARGO_BIN_EXE_puli"))
}

fn write_config(path: &Path) {
    std::fs::write(
        path,
        "[synth]\n\
         n_dialogues = 24\n\
         rounds_per_dialogue = 10\n\
         drift_position_lo = 2\n\
         drift_position_hi = 7\n\
         tokens_per_round = 30\n\
         validation_fraction = 0.25\n\
         test_fraction = 0.125\n\
         seed = 5\n\
         \n\
         [train]\n\
         epochs = 2\n\
         observer_dim = 16\n\
         presenter_dim = 8\n\
         hidden_width = 16\n\
         observer_buckets = 2048\n\
         observer_lr = 1.0\n\
         observer_fit_epochs = 200\n\
         seed = 11\n",
    )
    .unwrap();
}

#[test]
fn no_arguments_prints_usage_and_exits_2() {
    let output = puli().output().unwrap();
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("Usage"), "stderr was: {stderr}");
}

#[test]
fn unknown_subcommand_exits_2() {
    let output = puli().arg("frobnicate").output().unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn forge_train_eval_stream_flow() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.conf");
    write_config(&config);
    let corpus = dir.path().join("corpus.jsonl");

    let output = puli()
        .args(["forge", "synth", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&corpus)
        .output()
        .unwrap();
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));

    let output = puli().args(["stats", "--corpus"]).arg(&corpus).output().unwrap();
    assert!(output.status.success());
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("# Dialogues"), "stdout: {stdout}");
    assert!(stdout.contains("24"));

    let run_dir = dir.path().join("run1");
    let output = puli()
        .args(["train", "--corpus"])
        .arg(&corpus)
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(&run_dir)
        .output()
        .unwrap();
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    for artifact in ["manifest.txt", "metrics.tsv", "policy.ckpt", "observer.json", "presenter.json", "selection.tsv"] {
        assert!(run_dir.join(artifact).exists(), "missing {artifact}");
    }
    let manifest = std::fs::read_to_string(run_dir.join("manifest.txt")).unwrap();
    assert!(manifest.contains("command = train"));
    assert!(manifest.contains("seed = 11"));
    assert!(manifest.contains("input.corpus = "));

    let output = puli()
        .args(["eval", "--corpus"])
        .arg(&corpus)
        .arg("--artifacts")
        .arg(&run_dir)
        .arg("--config")
        .arg(&config)
        .args(["--split", "test"])
        .output()
        .unwrap();
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("Intervention Timing Classification"));
    assert!(stdout.contains("ROUGE-1"));

    let transcript1 = dir.path().join("t1.jsonl");
    let transcript2 = dir.path().join("t2.jsonl");
    for out in [&transcript1, &transcript2] {
        let output = puli()
            .args(["stream", "--dialogue"])
            .arg(&corpus)
            .arg("--artifacts")
            .arg(&run_dir)
            .arg("--config")
            .arg(&config)
            .args(["--dialogue-id", "d0000"])
            .arg("--out")
            .arg(out)
            .output()
            .unwrap();
        assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    }
    let bytes1 = std::fs::read(&transcript1).unwrap();
    let bytes2 = std::fs::read(&transcript2).unwrap();
    assert!(!bytes1.is_empty());
    assert_eq!(bytes1, bytes2, "stream transcripts must be byte-identical");
    let text = String::from_utf8(bytes1).unwrap();
    assert!(text.lines().all(|l| l.starts_with('{')));
    assert!(text.contains("\"kind\":\"decision\""));
}

#[test]
fn train_is_reproducible_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.conf");
    write_config(&config);
    let corpus = dir.path().join("corpus.jsonl");
    let output = puli()
        .args(["forge", "synth", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&corpus)
        .output()
        .unwrap();
    assert!(output.status.success());

    let mut logs = Vec::new();
    for name in ["a", "b"] {
        let run_dir = dir.path().join(name);
        let output = puli()
            .args(["train", "--corpus"])
            .arg(&corpus)
            .arg("--config")
            .arg(&config)
            .arg("--out")
            .arg(&run_dir)
            .output()
            .unwrap();
        assert!(output.status.success());
        logs.push(std::fs::read(run_dir.join("metrics.tsv")).unwrap());
    }
    assert_eq!(logs[0], logs[1], "metrics logs must be byte-identical");
}

#[test]
fn missing_corpus_fails_with_diagnostic() {
    let output = puli()
        .args(["stats", "--corpus", "/nope/missing.jsonl"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("puli:"), "stderr: {stderr}");
}
