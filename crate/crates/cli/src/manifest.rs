//! Run manifests: the command, its configuration, and content hashes of
//! every input and output file. No timestamps or absolute output paths are
//! recorded, so equal runs produce equal manifests.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn hash_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(sha256_hex(&bytes))
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub config: serde_json::Value,
    pub config_hash: String,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

impl Manifest {
    pub fn new<C: Serialize>(command: &str, config: &C) -> Result<Self> {
        let config = serde_json::to_value(config)?;
        let config_hash = sha256_hex(serde_json::to_string(&config)?.as_bytes());
        Ok(Manifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config,
            config_hash,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        })
    }

    /// Records `path` under its file name; the hash identifies the content.
    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned());
        let name = name.unwrap_or_else(|| path.display().to_string());
        self.inputs.insert(name, hash_file(path)?);
        Ok(())
    }

    /// Records `path` under its name relative to `out`.
    pub fn add_output(&mut self, out: &Path, path: &Path) -> Result<()> {
        let rel = path.strip_prefix(out).unwrap_or(path);
        self.outputs.insert(rel.display().to_string(), hash_file(path)?);
        Ok(())
    }

    pub fn write(&self, out: &Path) -> Result<()> {
        let path = out.join("manifest.json");
        fs::write(&path, serde_json::to_string_pretty(self)? + "\n")
            .with_context(|| format!("writing {}", path.display()))
    }
}
