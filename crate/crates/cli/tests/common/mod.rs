#![allow(dead_code)]

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

/// A network small enough for end-to-end runs in seconds.
pub const SMALL_NET: [&str; 8] = [
    "net.height=16",
    "net.width=16",
    "net.embed_dim=8",
    "net.c2=4",
    "net.c4=4",
    "net.c8=4",
    "net.decoder_width=4",
    "net.mlp_ratio=2",
];

/// Runs `maga <command> --out <out>` with `--set` pairs and extra arguments.
pub fn maga(command: &str, out: &Path, sets: &[&str], extra: &[&str]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_maga"));
    cmd.arg(command).arg("--out").arg(out).env("RUST_LOG", "warn");
    for s in sets {
        cmd.arg("--set").arg(s);
    }
    cmd.args(extra).output().expect("spawn maga")
}

pub fn small(sets: &[&str]) -> Vec<String> {
    SMALL_NET.iter().chain(sets).map(|s| s.to_string()).collect()
}

pub fn maga_small(command: &str, out: &Path, sets: &[&str]) -> Output {
    let all = small(sets);
    let refs: Vec<&str> = all.iter().map(String::as_str).collect();
    maga(command, out, &refs, &[])
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

pub fn assert_ok(o: &Output) {
    assert!(o.status.success(), "exit {:?}\n{}", o.status.code(), stderr(o));
}

/// Data rows of a CSV file with its header removed.
pub fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(|rec| rec.unwrap().iter().map(str::to_string).collect()).collect()
}

/// Every file under `dir`, relative path to bytes, sorted by path.
pub fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<(String, Vec<u8>)>) {
        for e in fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.push((rel, fs::read(&p).unwrap()));
            }
        }
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out);
    out.sort();
    out
}
