#![allow(dead_code)]

use std::path::{Path, PathBuf};

use twinfuse::config::{RunConfig, SynthConfig};
use twinfuse::synth::generate_synthetic;

/// Four twin pairs with short takes: enough for every scorer, fast to run.
pub fn small_synth() -> SynthConfig {
    SynthConfig {
        n_pairs: 4,
        seed: 5,
        duration_s: 0.3,
        ..SynthConfig::default()
    }
}

pub fn dataset(dir: &Path) -> PathBuf {
    generate_synthetic(&small_synth(), dir).unwrap().manifest
}

pub fn quick_config(data: &Path) -> RunConfig {
    let mut cfg = RunConfig {
        manifest: Some(data.join("manifest.json")),
        embeddings: Some(data.join("embeddings.csv")),
        ..RunConfig::default()
    };
    cfg.lstm.epochs = 3;
    cfg.lstm.seq_len = 20;
    cfg
}

pub fn names(report: &twinfuse::report::Report) -> Vec<&str> {
    report.rows.iter().map(|r| r.name.as_str()).collect()
}
