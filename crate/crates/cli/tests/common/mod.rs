#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub const BIN: &str = env!("CARGO_BIN_EXE_ctgca");

pub fn ctgca(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("spawn ctgca")
}

pub fn ok(args: &[&str]) -> Output {
    let out = ctgca(args);
    assert!(
        out.status.success(),
        "ctgca {args:?} failed ({:?}):\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Every file under `root` keyed by relative path.
pub fn tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(dir: &Path, root: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)
            .unwrap()
            .map(|e| e.unwrap().path())
            .collect();
        entries.sort();
        for path in entries {
            if path.is_dir() {
                walk(&path, root, out);
            } else {
                let rel = path
                    .strip_prefix(root)
                    .unwrap()
                    .to_string_lossy()
                    .into_owned();
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

/// Compare two output directories byte for byte. Manifests are compared
/// with their wall-clock fields cleared.
pub fn same_outputs(a: &Path, b: &Path) -> Result<(), String> {
    let (ta, tb) = (tree(a), tree(b));
    if ta.keys().ne(tb.keys()) {
        return Err(format!(
            "file sets differ: {:?} vs {:?}",
            ta.keys(),
            tb.keys()
        ));
    }
    for (rel, bytes) in &ta {
        if rel.ends_with("manifest.json") {
            let ma: ctgca_cli::RunManifest = serde_json::from_slice(bytes).unwrap();
            let mb: ctgca_cli::RunManifest = serde_json::from_slice(&tb[rel]).unwrap();
            if ma.without_timings() != mb.without_timings() {
                return Err(format!("{rel}: manifests differ beyond timings"));
            }
        } else if bytes != &tb[rel] {
            return Err(format!("{rel}: bytes differ"));
        }
    }
    Ok(())
}
