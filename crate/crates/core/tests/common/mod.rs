use clap::Parser;
use hindsight::cli::{run, Cli, Manifest};
use std::path::Path;

/// Small-scale settings so a full chain runs in seconds.
pub const SMALL: &[&str] = &[
    "sim.orig_dialogues=120",
    "train.iterations=4",
    "train.bc_iterations=4",
    "eval.episodes=40",
    "eval.probe_states=20",
];

pub fn hrl(out: &Path, seed: u64, args: &[&str]) -> Result<Option<Manifest>, hindsight::cli::CliError> {
    let mut argv = vec!["hrl".to_string(), "--seed".into(), seed.to_string(), "--out".into(), out.display().to_string()];
    for s in SMALL {
        argv.push("--set".into());
        argv.push(s.to_string());
    }
    argv.extend(args.iter().map(|s| s.to_string()));
    run(&Cli::try_parse_from(argv).expect("valid arguments"))
}

/// Every stage in order; returns each stage's manifest.
pub fn full_chain(out: &Path, seed: u64) -> Vec<Manifest> {
    let stages: &[&[&str]] = &[
        &["gen-data"],
        &["regen"],
        &["train", "ilql"],
        &["train", "sft"],
        &["train", "rft"],
        &["train", "zeroshot"],
        &["eval"],
        &["probe"],
        &["oracle"],
        &["gradcheck", "--instances", "10"],
    ];
    stages
        .iter()
        .map(|args| hrl(out, seed, args).unwrap_or_else(|e| panic!("{args:?}: {e}")).expect("stage writes a manifest"))
        .collect()
}
