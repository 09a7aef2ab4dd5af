//! Shared helpers for the end-to-end tests of the `wsnm` binary.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::ffi::OsStr;
use std::path::Path;
use std::process::{Command, Output};

/// Path of the compiled `wsnm` binary under test.
pub fn wsnm_bin() -> &'static str {
    env!("CARGO_BIN_EXE_wsnm")
}

/// Runs the binary with the given arguments and captures its output.
pub fn run_wsnm<S: AsRef<OsStr>>(args: &[S]) -> Output {
    Command::new(wsnm_bin())
        .args(args)
        .output()
        .expect("failed to spawn wsnm binary")
}

/// Runs the binary, asserts success, and returns captured stdout.
pub fn run_wsnm_ok<S: AsRef<OsStr>>(args: &[S]) -> String {
    let out = run_wsnm(args);
    assert!(
        out.status.success(),
        "wsnm failed (status {:?})\nstdout:\n{}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr),
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

/// Parses a JSON file, panicking with the path on any failure.
pub fn read_json(path: &Path) -> serde_json::Value {
    let text = std::fs::read_to_string(path)
        .unwrap_or_else(|e| panic!("cannot read {}: {e}", path.display()));
    serde_json::from_str(&text)
        .unwrap_or_else(|e| panic!("{} is not valid JSON: {e}", path.display()))
}

/// Snapshot of a run directory: file name → bytes. Excludes `timings.json`,
/// which records volatile wall-clock measurements by design; everything else
/// a run writes must be a pure function of its config.
pub fn snapshot_dir(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut map = BTreeMap::new();
    for entry in std::fs::read_dir(dir).expect("read_dir") {
        let entry = entry.expect("dir entry");
        if !entry.file_type().expect("file type").is_file() {
            continue;
        }
        let name = entry.file_name().to_string_lossy().into_owned();
        if name == "timings.json" {
            continue;
        }
        map.insert(name, std::fs::read(entry.path()).expect("read file"));
    }
    assert!(!map.is_empty(), "no output files in {}", dir.display());
    map
}

/// The output-file names recorded in a manifest.
pub fn manifest_output_names(manifest: &serde_json::Value) -> Vec<String> {
    manifest["outputs"]
        .as_array()
        .expect("manifest outputs array")
        .iter()
        .map(|o| o["path"].as_str().expect("output path").to_string())
        .collect()
}
