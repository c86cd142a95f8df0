use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn kgqa(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kgqa"))
        .args(args)
        .current_dir(dir)
        .env_remove("KGQA_CONFIG")
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = kgqa(dir, args);
    assert!(
        out.status.success(),
        "kgqa {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

const CONFIG: &str = r#"
seed = 7

[pipeline]
triples = "kg/triples.tsv"
nodes = "kg/nodes.tsv"
kge = "model/kge.bin"
classifier = "model/classifier.bin"
encoders = { 1 = "model/enc1.bin", 2 = "model/enc2.bin", 3 = "model/enc3.bin" }

[kge]
epochs = 60

[qa]
epochs = 40
"#;

#[test]
fn full_pipeline_through_the_binary() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    std::fs::write(dir.join("kgqa.toml"), CONFIG).unwrap();
    let cfg = ["--config", "kgqa.toml"];
    let with = |extra: &[&'static str]| -> Vec<&str> { cfg.iter().copied().chain(extra.iter().copied()).collect() };

    let out = ok(dir, &["synth-kg", "--out-dir", "kg", "--seed", "7"]);
    assert!(out.contains("triples: 3000"), "{out}");

    let out = ok(dir, &with(&["ingest", "--split-dir", "split"]));
    assert!(out.contains("entities: 200"), "{out}");
    assert!(out.contains("train: 2400"), "{out}");

    ok(dir, &with(&["train-kge", "--train", "split/train.tsv", "--valid", "split/valid.tsv"]));
    let out = ok(dir, &with(&["eval-kge", "--test", "split/test.tsv"]));
    for key in ["amr=", "aamr=", "aamri=", "hits@10="] {
        assert!(out.contains(key), "{out}");
    }
    let report: Value =
        serde_json::from_str(&ok(dir, &with(&["eval-kge", "--test", "split/test.tsv", "--json"]))).unwrap();
    assert!(report["hits_at"]["10"].as_f64().unwrap() >= 0.9, "{report}");
    assert_eq!(report["num_queries"], 600);

    let gen = ["gen-qa", "--templates", "kg/templates.tsv", "--seed", "7"];
    ok(dir, &with(&[&gen[..], &["--out", "qa_a.tsv", "--split-dir", "qa"]].concat()));
    ok(dir, &with(&[&gen[..], &["--out", "qa_b.tsv"]].concat()));
    assert_eq!(
        std::fs::read(dir.join("qa_a.tsv")).unwrap(),
        std::fs::read(dir.join("qa_b.tsv")).unwrap()
    );

    let out = ok(dir, &with(&["train-classifier", "--train-qa", "qa/train.tsv", "--valid-qa", "qa/valid.tsv"]));
    assert!(out.contains("valid_accuracy"), "{out}");
    for hops in ["1", "2", "3"] {
        ok(dir, &with(&["train-qa", "--hops", hops, "--train-qa", "qa/train.tsv", "--valid-qa", "qa/valid.tsv"]));
    }

    let table = ok(dir, &with(&["eval-qa", "--test-qa", "qa/test.tsv"]));
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0].split('\t').skip(1).collect::<Vec<_>>(), ["1-hop", "2-hop", "3-hop"]);
    assert!(lines[1].starts_with("hits@10"));
    let scores: Vec<f64> = lines[1].split('\t').skip(1).map(|v| v.parse().unwrap()).collect();
    assert!(scores.iter().all(|&s| s >= 0.5), "{table}");
    let json: Value = serde_json::from_str(&ok(dir, &with(&["eval-qa", "--test-qa", "qa/test.tsv", "--json"]))).unwrap();
    assert_eq!(json["k"], 10);

    let answer = ok(dir, &with(&["ask", "--question", "what does kinase 001 activate?", "--json"]));
    let answer: Value = serde_json::from_str(&answer).unwrap();
    assert_eq!(answer["head"]["id"], "E0001");
    assert_eq!(answer["answers"].as_array().unwrap().len(), 10);
    let text = ok(dir, &with(&["ask", "--question", "what does kinase 001 activate?", "--top-k", "3"]));
    assert!(text.contains("[kinase 001]"), "{text}");
    assert_eq!(text.lines().filter(|l| l.starts_with(char::is_numeric)).count(), 3);

    let out = kgqa(dir, &with(&["ask", "--question", "what cures nothing at all?"]));
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no_entity"));
}

#[test]
fn missing_checkpoint_is_named() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    ok(dir, &["synth-kg", "--out-dir", "kg", "--clusters", "4"]);
    let out = kgqa(
        dir,
        &[
            "ask",
            "--question",
            "what does kinase 001 activate?",
            "--triples",
            "kg/triples.tsv",
            "--kge",
            "absent/kge.bin",
            "--classifier",
            "absent/classifier.bin",
            "--encoder-1",
            "absent/enc1.bin",
        ],
    );
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("absent/kge.bin"), "{stderr}");
}

#[test]
fn environment_overrides_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    ok(dir, &["synth-kg", "--out-dir", "kg", "--clusters", "3"]);
    std::fs::write(dir.join("c.toml"), "[pipeline]\ntriples = \"missing.tsv\"\n").unwrap();
    let out = kgqa(dir, &["--config", "c.toml", "ingest"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.tsv"));

    let out = Command::new(env!("CARGO_BIN_EXE_kgqa"))
        .args(["--config", "c.toml", "ingest"])
        .env("KGQA_TRIPLES", "kg/triples.tsv")
        .current_dir(dir)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("entities: 30"));

    let out = Command::new(env!("CARGO_BIN_EXE_kgqa"))
        .args(["--config", "c.toml", "ingest", "--triples", "nowhere.tsv"])
        .env("KGQA_TRIPLES", "kg/triples.tsv")
        .current_dir(dir)
        .output()
        .unwrap();
    assert!(String::from_utf8_lossy(&out.stderr).contains("nowhere.tsv"));
}

#[test]
fn usage_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    for args in [&["frobnicate"][..], &["ingest", "--bogus"], &["train-qa", "--hops", "4", "--train-qa", "x"], &[]] {
        assert_eq!(kgqa(tmp.path(), args).status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn every_subcommand_documents_its_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let cases: &[(&str, &[&str])] = &[
        ("synth-kg", &["--out-dir", "--seed", "--fanout"]),
        ("ingest", &["--triples", "--nodes", "--split-dir", "--seed"]),
        ("train-kge", &["--dim", "--epochs", "--negatives", "--patience", "--seed", "--out"]),
        ("eval-kge", &["--kge", "--test", "--json", "--raw"]),
        ("gen-qa", &["--templates", "--out", "--split-dir", "--seed"]),
        ("train-classifier", &["--train-qa", "--valid-qa", "--seed"]),
        ("train-qa", &["--hops", "--kge", "--train-qa", "--seed"]),
        ("eval-qa", &["--test-qa", "--encoder-1", "--json"]),
        ("ask", &["--question", "--top-k", "--classifier"]),
        ("serve", &["--bind", "--top-k-cap", "--encoder-3"]),
    ];
    for (cmd, flags) in cases {
        let help = ok(tmp.path(), &[cmd, "--help"]);
        for flag in *flags {
            assert!(help.contains(flag), "{cmd} --help lacks {flag}");
        }
        assert!(help.contains("--config"), "{cmd}");
    }
}
