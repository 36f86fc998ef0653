//! Runs every CLI subcommand on a small generated corpus.
#![allow(dead_code)]

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use rand::Rng;
use sparseforge::synth;
use sparseforge::HeadMatrix;

pub const BIN: &str = env!("CARGO_BIN_EXE_sparseforge");

pub struct Step {
    pub name: &'static str,
    pub args: Vec<String>,
    pub outputs: Vec<&'static str>,
}

/// Writes subvocab, base head, titles, queries and qrels into `dir`.
pub fn write_inputs(dir: &Path) {
    let mut pieces = vec!["[PAD]".to_string(), "[UNK]".into(), "[MASK]".into(), "w".into()];
    pieces.extend((0..10).map(|d| format!("##{d}")));
    pieces.extend((1..10).map(|d| format!("w{d}")));
    fs::write(dir.join("subvocab.txt"), pieces.join("\n") + "\n").unwrap();

    let cols = 16;
    let mut rng = synth::rng(99);
    let weights: Vec<f64> = (0..pieces.len() * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
    let bias: Vec<f64> = (0..pieces.len()).map(|_| rng.random_range(-0.5..0.5)).collect();
    let head = HeadMatrix::new(pieces.len(), cols, weights, bias).unwrap();
    head.write(fs::File::create(dir.join("base.head")).unwrap()).unwrap();

    let mut titles = synth::zipf_titles(3, 400, 300, 3..=12);
    titles.push("zz qq".into());
    fs::write(dir.join("titles.txt"), titles.join("\n") + "\n").unwrap();

    let mut docs = String::new();
    for (i, t) in titles.iter().enumerate() {
        writeln!(docs, "d{i}\t{t}").unwrap();
    }
    fs::write(dir.join("docs.tsv"), docs).unwrap();

    let mut queries = String::new();
    let mut qrels = String::new();
    for (i, t) in synth::zipf_titles(4, 40, 300, 2..=5).iter().enumerate() {
        writeln!(queries, "q{i}\t{t}").unwrap();
        writeln!(qrels, "q{i}\td{}\t1", (i * 7) % titles.len()).unwrap();
        writeln!(qrels, "q{i}\td{}\t-1", (i * 13 + 1) % titles.len()).unwrap();
    }
    fs::write(dir.join("queries.tsv"), queries).unwrap();
    fs::write(dir.join("qrels.tsv"), qrels).unwrap();
}

fn args(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}

pub fn steps() -> Vec<Step> {
    vec![
        Step {
            name: "vocab-build",
            args: args(&[
                "--in",
                "titles.txt",
                "--subvocab",
                "subvocab.txt",
                "--size",
                "200",
                "--out",
                "vocab.tsv",
            ]),
            outputs: vec!["vocab.tsv"],
        },
        Step {
            name: "head-expand",
            args: args(&["--base", "base.head", "--vocab", "vocab.tsv", "--out", "u.head"]),
            outputs: vec!["u.head"],
        },
        Step {
            name: "mask-gen",
            args: args(&[
                "--vocab",
                "vocab.tsv",
                "--subvocab",
                "subvocab.txt",
                "--seed",
                "7",
                "--in",
                "titles.txt",
                "--out",
                "masked.jsonl",
            ]),
            outputs: vec!["masked.jsonl"],
        },
        Step {
            name: "encode",
            args: args(&[
                "--vocab",
                "vocab.tsv",
                "--head",
                "u.head",
                "--in",
                "docs.tsv",
                "--out",
                "docs.jsonl",
                "--logits-out",
                "logits.jsonl",
            ]),
            outputs: vec!["docs.jsonl", "logits.jsonl"],
        },
        Step {
            name: "encode",
            args: args(&[
                "--vocab",
                "vocab.tsv",
                "--head",
                "u.head",
                "--style",
                "head",
                "--top-k",
                "32",
                "--in",
                "queries.tsv",
                "--out",
                "queries.jsonl",
            ]),
            outputs: vec!["queries.jsonl"],
        },
        Step {
            name: "prune",
            args: args(&[
                "--k",
                "20",
                "--in",
                "docs.jsonl",
                "--out",
                "docs.k20.jsonl",
                "--summary",
                "prune.json",
            ]),
            outputs: vec!["docs.k20.jsonl", "prune.json"],
        },
        Step {
            name: "index-build",
            args: args(&[
                "--dk",
                "30",
                "--in",
                "docs.jsonl",
                "--out",
                "docs.idx",
                "--vocab",
                "vocab.tsv",
            ]),
            outputs: vec!["docs.idx"],
        },
        Step {
            name: "search",
            args: args(&[
                "--qk",
                "10",
                "--queries",
                "queries.jsonl",
                "--index",
                "docs.idx",
                "--out",
                "dot.run",
                "--vocab",
                "vocab.tsv",
            ]),
            outputs: vec!["dot.run"],
        },
        Step {
            name: "search",
            args: args(&[
                "--mode",
                "overlap",
                "--theta",
                "0.5",
                "--queries",
                "queries.jsonl",
                "--index",
                "docs.idx",
                "--out",
                "overlap.run",
            ]),
            outputs: vec!["overlap.run"],
        },
        Step {
            name: "eval",
            args: args(&[
                "--index",
                "docs.idx",
                "--queries",
                "queries.jsonl",
                "--qrels",
                "qrels.tsv",
                "--qk",
                "10",
                "--report",
                "eval.json",
            ]),
            outputs: vec!["eval.json"],
        },
        Step {
            name: "stats",
            args: args(&[
                "--in",
                "logits.jsonl",
                "--kind",
                "logit",
                "--threshold",
                "5",
                "--report",
                "stats.logit.json",
            ]),
            outputs: vec!["stats.logit.json"],
        },
        Step {
            name: "stats",
            args: args(&[
                "--in",
                "docs.jsonl",
                "--kind",
                "sparse",
                "--threshold",
                "5",
                "--report",
                "stats.sparse.json",
            ]),
            outputs: vec!["stats.sparse.json"],
        },
        Step {
            name: "gradcheck",
            args: args(&["--loss", "combined", "--batches", "4"]),
            outputs: vec![],
        },
    ]
}

pub struct StepOutput {
    pub name: &'static str,
    pub success: bool,
    pub stdout: Vec<u8>,
    pub files: Vec<(&'static str, Vec<u8>)>,
}

pub fn run_step(dir: &Path, step: &Step, threads: Option<usize>) -> StepOutput {
    let mut cmd = Command::new(BIN);
    cmd.current_dir(dir).arg(step.name).args(&step.args);
    if let Some(n) = threads {
        cmd.args(["--threads", &n.to_string()]);
    }
    let out = cmd.output().unwrap();
    if !out.status.success() {
        eprintln!("{} failed: {}", step.name, String::from_utf8_lossy(&out.stderr));
    }
    StepOutput {
        name: step.name,
        success: out.status.success(),
        stdout: out.stdout,
        files: step
            .outputs
            .iter()
            .map(|f| (*f, fs::read(dir.join(f)).unwrap_or_default()))
            .collect(),
    }
}

/// Fresh directory with inputs, all steps run in order.
pub fn run_all(root: &Path, label: &str, threads: Option<usize>) -> (PathBuf, Vec<StepOutput>) {
    let dir = root.join(label);
    fs::create_dir_all(&dir).unwrap();
    write_inputs(&dir);
    let outs = steps().iter().map(|s| run_step(&dir, s, threads)).collect();
    (dir, outs)
}
