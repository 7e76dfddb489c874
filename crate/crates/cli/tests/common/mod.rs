#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fsbench::{EmbeddingSource, RunConfig};

pub fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_fsbench"));
    c.env_remove("FSB_SEED").env_remove("RUST_LOG");
    c
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

/// Writes a Gaussian stand-in shaped like `like` and returns its path.
pub fn synth(dir: &Path, like: &str, backbone: &str, seed: u64) -> PathBuf {
    let path = dir.join(format!("{like}_{backbone}.fseb"));
    fsbench::cmd_synth(like, backbone, 16, 3.0, seed, &path).unwrap();
    path
}

pub fn config(sources: &[(&str, &Path)], out: &Path) -> RunConfig {
    RunConfig {
        embeddings: sources
            .iter()
            .map(|(d, p)| EmbeddingSource {
                dataset: d.to_string(),
                path: p.to_path_buf(),
            })
            .collect(),
        out: Some(out.to_path_buf()),
        ..RunConfig::default()
    }
}

/// Every file under `dir`, keyed by relative path.
pub fn tree(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(
                    p.strip_prefix(dir).unwrap().to_path_buf(),
                    std::fs::read(&p).unwrap(),
                );
            }
        }
    }
    out
}

pub fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let mut rows = vec![r.headers().unwrap().iter().map(String::from).collect()];
    rows.extend(
        r.records()
            .map(|rec| rec.unwrap().iter().map(String::from).collect()),
    );
    rows
}
