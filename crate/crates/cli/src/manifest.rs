//! Run manifest: the effective config, input fingerprints, tool version,
//! and seed. Deliberately no timestamps or hostnames — two runs with the
//! same manifest must be indistinguishable.

use std::collections::BTreeMap;
use std::io::BufWriter;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    seed: u64,
    config: &'a RunConfig,
    /// SHA-256 of every input file, keyed by path as given.
    inputs: BTreeMap<String, String>,
}

fn sha256_hex(path: &Path) -> Result<String> {
    let bytes =
        std::fs::read(path).with_context(|| format!("reading input {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Write `manifest.json` into the output directory.
pub fn write(out_dir: &Path, command: &str, config: &RunConfig, inputs: &[&Path]) -> Result<()> {
    let mut fingerprints = BTreeMap::new();
    for p in inputs {
        fingerprints.insert(p.display().to_string(), sha256_hex(p)?);
    }
    let manifest = Manifest {
        command,
        version: env!("CARGO_PKG_VERSION"),
        seed: config.seed,
        config,
        inputs: fingerprints,
    };
    let path = out_dir.join("manifest.json");
    let file = std::fs::File::create(&path)
        .with_context(|| format!("creating {}", path.display()))?;
    serde_json::to_writer_pretty(BufWriter::new(file), &manifest)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}
