//! Run manifests: resolved configuration, input and output checksums.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Result;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(sha256_hex(&std::fs::read(path)?))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

impl FileDigest {
    pub fn of(path: &Path) -> Result<Self> {
        Ok(Self {
            path: path.display().to_string(),
            sha256: sha256_file(path)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: Vec<String>,
    pub config_sha256: String,
    pub wall_clock_s: f64,
    /// Canonical text of the resolved configuration.
    pub config: String,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

impl RunManifest {
    pub fn new(command: Vec<String>, canonical_config: String) -> Self {
        Self {
            tool: "spinpol".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command,
            config_sha256: sha256_hex(canonical_config.as_bytes()),
            wall_clock_s: 0.0,
            config: canonical_config,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).unwrap_or_default()
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text)
            .map_err(|e| crate::error::Error::Config(vec![format!("manifest: {}", e.message())]))
    }
}
