//! Runs the documented pipeline in a scratch directory.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn repo_fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn curation(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_curation"))
        .args(args)
        .current_dir(dir)
        .env("SOURCE_DATE_EPOCH", "1700000000")
        .output()
        .expect("binary runs")
}

/// Copies the fixtures the pipeline reads into `dir/fixtures`.
pub fn stage(dir: &Path) {
    let src = repo_fixtures();
    let dst = dir.join("fixtures");
    std::fs::create_dir_all(dst.join("brat")).unwrap();
    for name in ["config.toml", "tickets_small.jsonl", "names.txt", "labels_synth.jsonl", "brat/synth50.ann", "brat/synth50.txt"] {
        std::fs::copy(src.join(name), dst.join(name)).unwrap();
    }
}

/// The command sequence from docs/cli.md, with paths relative to `dir`.
pub const PIPELINE: &[&[&str]] = &[
    &["ingest", "--input", "fixtures/tickets_small.jsonl", "--out", "corpus.jsonl", "--errors", "rejected.jsonl"],
    &["deidentify", "--corpus", "corpus.jsonl", "--names", "fixtures/names.txt", "--out", "corpus.deid.jsonl", "--map", "pseudonyms.csv"],
    &["segment", "--corpus", "corpus.deid.jsonl", "--out", "fragments.jsonl"],
    &["import-labels", "--brat-dir", "fixtures/brat", "--out", "brat_labels.jsonl"],
    &["split", "--labels", "fixtures/labels_synth.jsonl", "--train", "train.jsonl", "--test", "test.jsonl"],
    &["train", "--model", "dummy", "--labels", "train.jsonl", "--out", "dummy.model"],
    &["train", "--model", "cnb", "--labels", "train.jsonl", "--out", "cnb.model", "--features-out", "features.txt"],
    &["train", "--model", "sgd", "--labels", "train.jsonl", "--out", "sgd.model"],
    &["evaluate", "--model", "dummy.model", "--model", "cnb.model", "--model", "sgd.model", "--labels", "test.jsonl",
      "--out", "metrics.json", "--table", "table2.csv", "--confusion-dir", "confusion"],
    &["predict", "--model", "cnb.model", "--fragments", "fragments.jsonl", "--out", "predictions.jsonl"],
    &["report", "--kind", "table3", "--corpus", "corpus.deid.jsonl", "--predictions", "predictions.jsonl", "--out", "table3.csv"],
    &["report", "--kind", "table4", "--corpus", "corpus.deid.jsonl", "--predictions", "predictions.jsonl", "--out", "table4.csv",
      "--json", "table4.json", "--svg", "table4.svg"],
    &["report", "--kind", "fig4", "--corpus", "corpus.deid.jsonl", "--predictions", "predictions.jsonl", "--by", "level",
      "--out", "fig4.csv", "--svg", "fig4.svg"],
    &["report", "--kind", "fig2", "--labels", "fixtures/labels_synth.jsonl", "--out", "fig2.csv", "--svg", "fig2.svg"],
];

/// Runs every step with the shared config; returns the first failure.
pub fn run_pipeline(dir: &Path) -> Result<(), String> {
    for step in PIPELINE {
        let mut args = vec!["--config", "fixtures/config.toml"];
        args.extend_from_slice(step);
        let out = curation(dir, &args);
        if !out.status.success() {
            return Err(format!("`{}` failed: {}", step.join(" "), String::from_utf8_lossy(&out.stderr).trim()));
        }
    }
    Ok(())
}

/// Every file under `dir` except the staged inputs, keyed by relative path.
pub fn artifacts(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
            if rel == "fixtures" {
                continue;
            }
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}
