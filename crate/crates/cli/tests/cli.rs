use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use sentcap::{Checkpoint, Variant};

fn sentcap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sentcap")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL_SPEC: &str = r#"{
  "scenes": [
    {"noun": "dog", "verb": "runs", "place": "park"},
    {"noun": "cat", "verb": "sleeps", "place": "room"},
    {"noun": "bird", "verb": "sings", "place": "tree"}
  ],
  "positive": ["happy", "nice"],
  "negative": ["sad", "ugly"],
  "train_per_scene": 2
}"#;

fn small_corpus(dir: &Path) -> String {
    let spec = dir.join("spec.json");
    fs::write(&spec, SMALL_SPEC).unwrap();
    let data = dir.join("data");
    let o = sentcap(&["gen-corpus", "--spec", spec.to_str().unwrap(), "--out", data.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    data.to_str().unwrap().to_string()
}

fn train_small(dir: &Path, data: &str, name: &str, extra: &[&str]) -> (String, Output) {
    let out = dir.join(name).to_str().unwrap().to_string();
    let mut args = vec!["train", "--data", data, "--out", &out];
    args.extend_from_slice(extra);
    for (flag, value) in [("--epochs", "2"), ("--embed-dim", "6"), ("--hidden-dim", "8"), ("--min-count", "1"), ("--batch-size", "4")] {
        if !extra.contains(&flag) {
            args.extend([flag, value]);
        }
    }
    let o = sentcap(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    (out, o)
}

fn epoch_totals(log: &str) -> Vec<f64> {
    log.lines()
        .filter(|l| l.starts_with('{'))
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["total"].as_f64().unwrap())
        .collect()
}

#[test]
fn gen_corpus_default_counts_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let o = sentcap(&["gen-corpus", "--out", a.to_str().unwrap()]);
    assert!(o.status.success());
    assert_eq!(stdout(&o), "train 600\nval 60\ntest 60\n");
    sentcap(&["gen-corpus", "--out", b.to_str().unwrap()]);
    for f in ["train.jsonl", "val.jsonl", "test.jsonl", "pos.txt", "neg.txt"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn gen_corpus_spec_errors_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("s.json");
    fs::write(&spec, r#"{"positive": ["good"], "negative": ["bad"]}"#).unwrap();
    let o = sentcap(&["gen-corpus", "--spec", spec.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("scenes"), "{}", stderr(&o));
}

#[test]
fn train_declares_variant_and_echoes_config() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_corpus(dir.path());
    for variant in ["flow", "direct"] {
        let (ckpt, o) = train_small(dir.path(), &data, variant, &["--variant", variant]);
        assert!(stderr(&o).contains(&format!("variant = {variant}")));
        let ck = Checkpoint::load(Path::new(&ckpt)).unwrap();
        assert_eq!(ck.model.config.variant, variant.parse::<Variant>().unwrap());
        let log = fs::read_to_string(format!("{ckpt}.log")).unwrap();
        assert!(log.starts_with(&format!("variant = {variant}\n")));
        assert_eq!(epoch_totals(&log).len(), 2);
    }
}

#[test]
fn zero_learning_rate_keeps_loss_constant() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_corpus(dir.path());
    let (ckpt, _) = train_small(dir.path(), &data, "m", &["--lr", "0", "--epochs", "3", "--batch-size", "100"]);
    let totals = epoch_totals(&fs::read_to_string(format!("{ckpt}.log")).unwrap());
    assert_eq!(totals.len(), 3);
    assert!(totals.iter().all(|&t| t == totals[0]), "{totals:?}");
}

#[test]
fn flags_override_file_and_log_reproduces_run() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_corpus(dir.path());
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# desk run\nvariant = direct\nepochs = 3\nseed = 4\n").unwrap();
    let (first, _) = train_small(dir.path(), &data, "first", &["--config", cfg.to_str().unwrap(), "--epochs", "1"]);
    let log = fs::read_to_string(format!("{first}.log")).unwrap();
    assert!(log.contains("epochs = 1\n") && log.contains("seed = 4\n") && log.contains("variant = direct\n"));

    // The log header alone is a complete config.
    let log_path = format!("{first}.log");
    let second = dir.path().join("second").to_str().unwrap().to_string();
    let o = sentcap(&["train", "--data", &data, "--out", &second, "--config", &log_path]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read(&first).unwrap(), fs::read(&second).unwrap());

    fs::write(&cfg, "colour = red\n").unwrap();
    let o = sentcap(&["train", "--data", &data, "--out", &second, "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("colour"));
}

#[test]
fn generate_modes() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_corpus(dir.path());
    let (ckpt, _) = train_small(dir.path(), &data, "m", &["--variant", "flow"]);
    let test = format!("{data}/test.jsonl");
    let base = ["generate", "--checkpoint", &ckpt, "--data", &test, "--record", "test-01-0", "--max-len", "8"];

    let beam1 = sentcap(&[&base[..], &["--label", "pos", "--beam", "1"]].concat());
    let greedy = sentcap(&[&base[..], &["--label", "pos", "--greedy"]].concat());
    assert!(beam1.status.success(), "{}", stderr(&beam1));
    assert_eq!(stdout(&beam1), stdout(&greedy));

    let flip = sentcap(&[&base[..], &["--label", "neg", "--flip", "--top", "2"]].concat());
    let out = stdout(&flip);
    assert_eq!(out.lines().filter(|l| l.starts_with("neg\t")).count(), 2);
    assert_eq!(out.lines().filter(|l| l.starts_with("pos\t")).count(), 2);

    assert_eq!(sentcap(&[&base[..], &["--label", "neu", "--flip"]].concat()).status.code(), Some(1));
    let bad = sentcap(&[&base[..], &["--label", "joyful"]].concat());
    assert_eq!(bad.status.code(), Some(1));
    assert!(stderr(&bad).contains("joyful"));

    let feature = dir.path().join("f.json");
    let record: serde_json::Value =
        serde_json::from_str(fs::read_to_string(&test).unwrap().lines().nth(3).unwrap()).unwrap();
    fs::write(&feature, record["feature"].to_string()).unwrap();
    let o = sentcap(&["generate", "--checkpoint", &ckpt, "--feature", feature.to_str().unwrap(), "--label", "neu"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).lines().count(), 1);

    let corrupt = dir.path().join("bad.ckpt");
    fs::write(&corrupt, &fs::read(&ckpt).unwrap()[..40]).unwrap();
    let o = sentcap(&["generate", "--checkpoint", corrupt.to_str().unwrap(), "--feature", feature.to_str().unwrap(), "--label", "pos"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn evaluate_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_corpus(dir.path());
    let (ckpt, _) = train_small(dir.path(), &data, "m", &["--variant", "direct"]);
    let report = dir.path().join("report.json");
    let args = |pos: &str| {
        vec![
            "evaluate".to_string(),
            "--checkpoint".into(),
            ckpt.clone(),
            "--test".into(),
            format!("{data}/test.jsonl"),
            "--pos".into(),
            pos.to_string(),
            "--neg".into(),
            format!("{data}/neg.txt"),
            "--beam".into(),
            "2".into(),
            "--out".into(),
            report.to_str().unwrap().to_string(),
        ]
    };
    let o = Command::new(env!("CARGO_BIN_EXE_sentcap")).args(args(&format!("{data}/pos.txt"))).output().unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("ROUGE-L") && stdout(&o).contains("Matched (F)"));
    let rep: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(rep["captions"].as_array().unwrap().len(), 9);
    assert_eq!(rep["sentiment"]["count"], 6);

    let overlap = dir.path().join("overlap.txt");
    fs::write(&overlap, "happy\nsad\n").unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_sentcap")).args(args(overlap.to_str().unwrap())).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("sad"));
}

#[test]
fn gradcheck_passes_for_every_variant() {
    let o = sentcap(&["gradcheck", "--seed", "3"]);
    assert!(o.status.success(), "{}", stdout(&o));
    let out = stdout(&o);
    for v in ["baseline", "direct", "flow"] {
        assert!(out.lines().any(|l| l.starts_with(&format!("PASS\t{v}\t"))), "{out}");
    }
    let strict = sentcap(&["gradcheck", "--variant", "flow", "--tolerance", "0"]);
    assert_eq!(strict.status.code(), Some(2));
    assert!(stdout(&strict).starts_with("FAIL\tflow"));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(sentcap(&[]).status.code(), Some(1));
    assert_eq!(sentcap(&["train"]).status.code(), Some(1));
    assert_eq!(sentcap(&["gradcheck", "--variant", "gru"]).status.code(), Some(1));
    assert_eq!(sentcap(&["--help"]).status.code(), Some(0));
}
