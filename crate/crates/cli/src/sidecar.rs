//! `<file>.meta.json` records written beside every output.
//!
//! A command whose inputs hash to the value already recorded beside each of
//! its outputs, and whose outputs still match their recorded hashes, is
//! skipped.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use blm_core::hash::{hex64, Fnv1a};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Meta {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub inputs_hash: String,
    pub output_hash: String,
}

pub fn meta_path(file: &Path) -> PathBuf {
    let mut name = file.file_name().unwrap_or_default().to_os_string();
    name.push(".meta.json");
    file.with_file_name(name)
}

fn hash_file(path: &Path) -> anyhow::Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let mut h = Fnv1a::default();
    h.update(&bytes);
    Ok(hex64(h.finish()))
}

/// One invocation: its effective parameters, seeds and input files.
pub struct Job {
    pub command: &'static str,
    pub params: serde_json::Value,
    pub seeds: Vec<u64>,
    pub inputs: Vec<PathBuf>,
}

impl Job {
    pub fn new(command: &'static str, params: impl Serialize, seeds: Vec<u64>, inputs: Vec<PathBuf>) -> Self {
        Job {
            command,
            params: serde_json::to_value(params).expect("parameters serialize"),
            seeds,
            inputs,
        }
    }

    pub fn config_hash(&self) -> String {
        let mut h = Fnv1a::default();
        h.update(self.command.as_bytes());
        h.update(&[0]);
        h.update(self.params.to_string().as_bytes());
        hex64(h.finish())
    }

    /// Hash over the parameters and the bytes of every input, in order.
    pub fn inputs_hash(&self) -> anyhow::Result<String> {
        let mut h = Fnv1a::default();
        h.update(self.config_hash().as_bytes());
        for p in &self.inputs {
            let bytes = fs::read(p).with_context(|| format!("reading {}", p.display()))?;
            h.update(&(bytes.len() as u64).to_le_bytes());
            h.update(&bytes);
        }
        Ok(hex64(h.finish()))
    }

    pub fn up_to_date(&self, outputs: &[PathBuf]) -> anyhow::Result<bool> {
        if outputs.is_empty() {
            return Ok(false);
        }
        let inputs = self.inputs_hash()?;
        for out in outputs {
            let Ok(text) = fs::read_to_string(meta_path(out)) else {
                return Ok(false);
            };
            let Ok(meta) = serde_json::from_str::<Meta>(&text) else {
                return Ok(false);
            };
            if meta.inputs_hash != inputs || meta.version != env!("CARGO_PKG_VERSION") {
                return Ok(false);
            }
            if !out.exists() || hash_file(out)? != meta.output_hash {
                return Ok(false);
            }
        }
        Ok(true)
    }

    pub fn record(&self, outputs: &[PathBuf]) -> anyhow::Result<()> {
        let inputs_hash = self.inputs_hash()?;
        for out in outputs {
            let meta = Meta {
                tool: "blm".into(),
                version: env!("CARGO_PKG_VERSION").into(),
                command: self.command.into(),
                config_hash: self.config_hash(),
                seeds: self.seeds.clone(),
                inputs_hash: inputs_hash.clone(),
                output_hash: hash_file(out)?,
            };
            let path = meta_path(out);
            fs::write(&path, serde_json::to_string_pretty(&meta)? + "\n")
                .with_context(|| format!("writing {}", path.display()))?;
        }
        Ok(())
    }
}
