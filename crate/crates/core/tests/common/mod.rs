#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn bin() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_longlens"))
}

pub fn run(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .output()
        .expect("spawn longlens")
}

pub fn run_in(out: &Path, args: &[&str]) -> Output {
    let mut full = vec!["--out", out.to_str().expect("utf-8 path")];
    full.extend_from_slice(args);
    run(&full)
}

pub fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

/// Relative path to file bytes, recursively.
pub fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for entry in std::fs::read_dir(dir).expect("read dir") {
            let p = entry.expect("dir entry").path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                let rel = p.strip_prefix(root).expect("prefix").display().to_string();
                out.insert(rel, std::fs::read(&p).expect("read file"));
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

/// Phantom dataset with keypoints written by the CLI.
pub fn phantom(dir: &Path, n_eyes: usize, frames: usize, size: usize) {
    let o = run_in(
        dir,
        &[
            "phantom",
            "--n-eyes",
            &n_eyes.to_string(),
            "--frames",
            &frames.to_string(),
            "--size",
            &size.to_string(),
            "--keypoints",
        ],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}
