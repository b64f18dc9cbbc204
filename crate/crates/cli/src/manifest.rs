use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use poe_rank::io::to_json_string;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::args::Invocation;
use crate::run::RunOutput;

/// Record of one run, written next to its outputs. Holds no timestamps or
/// host details, so replaying it rewrites identical bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub seed: Option<u64>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub config: Value,
    pub result: Value,
    pub invocation: Invocation,
}

impl RunManifest {
    pub fn new(invocation: &Invocation, run: &RunOutput) -> Self {
        Self {
            command: invocation.name().to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: run.seed,
            inputs: run.inputs.clone(),
            outputs: run.artifacts.iter().filter_map(|a| a.path.clone()).collect(),
            config: run.config.clone(),
            result: run.result.clone(),
            invocation: invocation.clone(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut bytes = to_json_string(self, true).into_bytes();
        bytes.push(b'\n');
        bytes
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing manifest {}", path.display()))
    }
}

/// Where the manifest goes: the explicit path, else next to the primary
/// output, else `None` (stderr).
pub fn manifest_path(invocation: &Invocation) -> Option<PathBuf> {
    let (out, manifest) = invocation.output_paths();
    manifest.cloned().or_else(|| {
        out.map(|o| {
            let mut s = o.as_os_str().to_owned();
            s.push(".manifest.json");
            PathBuf::from(s)
        })
    })
}
