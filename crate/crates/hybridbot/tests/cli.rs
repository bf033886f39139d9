use std::path::Path;
use std::process::{Command, Output};

fn run(bin: &str, args: &[&str], dir: &Path) -> Output {
    let out = Command::new(bin).args(args).current_dir(dir).output().unwrap();
    assert!(
        out.status.success(),
        "{bin} {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

#[test]
fn corpus_train_decode_compare_score() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let corpusctl = env!("CARGO_BIN_EXE_corpusctl");
    let seq2seqctl = env!("CARGO_BIN_EXE_seq2seqctl");
    let evalctl = env!("CARGO_BIN_EXE_evalctl");
    let graphctl = env!("CARGO_BIN_EXE_graphctl");

    run(corpusctl, &["simulate", "--n", "120", "--seed", "2", "--out", "raw.jsonl"], d);
    run(
        corpusctl,
        &["run", "--steps", "1-5", "--in", "raw.jsonl", "--out", "pairs.tsv", "--stats", "stats.json"],
        d,
    );
    let pairs = std::fs::read_to_string(d.join("pairs.tsv")).unwrap();
    assert!(pairs.lines().all(|l| l.split('\t').count() == 3));
    let stats: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("stats.json")).unwrap()).unwrap();
    assert_eq!(stats["stats"]["pair_count"].as_u64().unwrap() as usize, pairs.lines().count());
    assert_eq!(stats["steps"].as_array().unwrap().len(), 5);

    run(corpusctl, &["split", "--pairs", "pairs.tsv", "--train", "tr.tsv", "--test", "te.tsv"], d);
    let n_tr = std::fs::read_to_string(d.join("tr.tsv")).unwrap().lines().count();
    let n = pairs.lines().count();
    assert_eq!(n_tr, (4 * n + 2) / 5);

    std::fs::write(
        d.join("train.json"),
        r#"{"model":{"hidden":16,"embed":8},"train":{"epochs":1,"batch_size":16},"min_count":2,"buffer":4}"#,
    )
    .unwrap();
    run(
        seq2seqctl,
        &["train", "--pairs", "tr.tsv", "--config", "train.json", "--out", "m.ckpt"],
        d,
    );
    run(
        seq2seqctl,
        &["add-token", "--model", "m.ckpt", "--token", "_api_modify_reminder_", "--out", "m2.ckpt"],
        d,
    );
    let out = run(seq2seqctl, &["decode", "--model", "m2.ckpt", "--context", "wake me up"], d);
    assert!(out.stdout.ends_with(b"\n"));

    run(evalctl, &["scripts", "--n", "20", "--out", "scripts.jsonl"], d);
    let g = run(graphctl, &["dump"], d);
    std::fs::write(d.join("g.json"), g.stdout).unwrap();
    run(graphctl, &["validate", "g.json"], d);
    let m = run(graphctl, &["match", "g.json", "show my reminders"], d);
    assert!(String::from_utf8(m.stdout).unwrap().lines().next().unwrap().contains("view_reminders"));
    run(
        evalctl,
        &[
            "compare", "--graph", "g.json", "--model", "m2.ckpt", "--scripts", "scripts.jsonl", "--noise", "0.2", "--seed",
            "7", "--out", "report.json",
        ],
        d,
    );
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["hybrid"]["records"], 20);
    let s = run(evalctl, &["score", "--log", "raw.jsonl"], d);
    let score: serde_json::Value = serde_json::from_slice(&s.stdout).unwrap();
    assert_eq!(score["records"], 120);
}

#[test]
fn graphctl_rejects_bad_graph() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.json"), r#"{"states": [], "edges": []}"#).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_graphctl"))
        .args(["validate", "bad.json"])
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert!(!out.status.success());
}
