#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_convsafe"));
    c.env("RUST_LOG", "error");
    c
}

pub fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/synthetic")
}

pub fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().expect("spawn convsafe")
}

/// Runs and panics with stderr on a non-zero exit.
pub fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "convsafe {args:?} exited {:?}\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// Bundled-corpus pipeline up to the pseudo labels, with small models.
pub const PIPELINE: &[&[&str]] = &[
    &["ingest", "--input", "@/threads.jsonl", "--output", "threads.jsonl"],
    &["aggregate", "--input", "@/annotations.jsonl", "--output", "gold.jsonl", "--format", "csv", "--report", "agreement.csv"],
    &["split", "--input", "threads.jsonl", "--output", "splits"],
    &[
        "train", "--task", "offensive", "--loss", "ce", "--train", "splits/train.jsonl", "--dev", "splits/dev.jsonl",
        "--gold", "gold.jsonl", "--dim", "16", "--hidden", "16,8", "--lr", "0.005", "--epochs", "15", "--output",
        "models/offensive.model.json",
    ],
    &[
        "train", "--task", "stance", "--loss", "ce", "--train", "splits/train.jsonl", "--dev", "splits/dev.jsonl",
        "--gold", "gold.jsonl", "--dim", "16", "--hidden", "16,8", "--lr", "0.005", "--epochs", "15", "--output",
        "models/stance.model.json",
    ],
    &[
        "calibrate", "--task", "offensive", "--input", "splits/dev.jsonl", "--gold", "gold.jsonl", "--scorer",
        "builtin:models", "--output", "offensive.thresholds.json",
    ],
    &[
        "calibrate", "--task", "stance", "--input", "splits/dev.jsonl", "--gold", "gold.jsonl", "--scorer",
        "builtin:models", "--output", "stance.thresholds.json",
    ],
    &[
        "pseudolabel", "--input", "threads.jsonl", "--scorer", "builtin:models", "--offensive-thresholds",
        "offensive.thresholds.json", "--stance-thresholds", "stance.thresholds.json", "--output", "pseudo.jsonl",
    ],
    &["ctg-build", "--input", "pseudo.jsonl", "--size", "1000", "--output", "ctg"],
    &["autoeval", "--input", "threads.jsonl", "--scorer", "builtin:models", "--format", "csv", "--output", "autoeval.csv"],
];

/// Runs [`PIPELINE`] in `dir` with `--seed seed`; `@` expands to the bundled data directory.
pub fn run_pipeline(dir: &Path, seed: u64) {
    let data = data_dir();
    let seed = seed.to_string();
    for step in PIPELINE {
        let mut args: Vec<String> =
            step.iter().map(|a| a.replace('@', data.to_str().expect("utf-8 path"))).collect();
        args.extend(["--seed".to_string(), seed.clone()]);
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        ok(dir, &refs);
    }
}

/// Every regular file under `dir`, relative path to contents, sorted.
pub fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.push((rel, std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}
