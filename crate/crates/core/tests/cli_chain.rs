mod common;

use common::{full_chain, hrl};
use hindsight::cli::Manifest;
use std::process::Command;

#[test]
fn chain_writes_outputs_and_consistent_manifests() {
    let dir = tempfile::tempdir().unwrap();
    let manifests = full_chain(dir.path(), 7);
    for m in &manifests {
        assert_eq!(m.hash, m.compute_hash());
        for (path, hash) in &m.outputs {
            let bytes = std::fs::read(dir.path().join(path)).unwrap();
            assert_eq!(&hindsight::hashing::git_blob_hash(&bytes), hash, "{path}");
        }
        let stored = Manifest::load(&dir.path().join("manifests").join(format!("{}.json", m.command.replace(' ', "-"))));
        assert_eq!(stored.unwrap().hash, m.hash);
    }
    // Each stage's inputs are the outputs an earlier stage recorded.
    let regen = &manifests[1];
    assert_eq!(regen.inputs.get("data/orig.jsonl"), manifests[0].outputs.get("data/orig.jsonl"));
    assert!(dir.path().join("eval/table.txt").exists());
    assert!(dir.path().join("checkpoints/ilql.json").exists());
}

#[test]
fn same_seed_gives_identical_manifests() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (ma, mb) = (full_chain(a.path(), 3), full_chain(b.path(), 3));
    for (x, y) in ma.iter().zip(&mb) {
        assert_eq!(x.hash, y.hash, "{}", x.command);
    }
    let c = tempfile::tempdir().unwrap();
    let mc = hrl(c.path(), 4, &["gen-data"]).unwrap().unwrap();
    assert_ne!(mc.outputs, ma[0].outputs);
}

#[test]
fn missing_input_and_bad_config_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_hrl");
    let out = Command::new(bin).args(["--seed", "1", "--out"]).arg(dir.path()).arg("regen").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("hrl gen-data"));

    let out = Command::new(bin).args(["--out"]).arg(dir.path()).arg("gen-data").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("seed"));

    let out = Command::new(bin)
        .args(["--seed", "1", "--set", "train.tua=2", "--set", "pipeline.p_hard=3", "--out"])
        .arg(dir.path())
        .arg("show-config")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
