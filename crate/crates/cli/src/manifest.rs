//! Per-command JSON manifests.
//!
//! `digest` is the SHA-256 of the manifest serialized without `digest` and
//! `timestamp`, so two runs over identical inputs share a digest.

use std::fs;
use std::path::{Path, PathBuf};

use hedonic::{Error, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

impl FileDigest {
    pub fn of(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok(FileDigest {
            path: path.display().to_string(),
            sha256: sha256_hex(&bytes),
        })
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

#[derive(Debug, Clone, Serialize)]
struct Body<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    settings: &'a serde_json::Value,
    inputs: &'a [FileDigest],
    outputs: &'a [FileDigest],
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub settings: serde_json::Value,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub digest: String,
    pub timestamp: String,
}

impl Manifest {
    pub fn new(
        command: &str,
        settings: serde_json::Value,
        inputs: &[PathBuf],
        outputs: &[PathBuf],
    ) -> Result<Self> {
        let inputs = inputs.iter().map(|p| FileDigest::of(p)).collect::<Result<Vec<_>>>()?;
        let outputs = outputs.iter().map(|p| FileDigest::of(p)).collect::<Result<Vec<_>>>()?;
        let body = Body {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            settings: &settings,
            inputs: &inputs,
            outputs: &outputs,
        };
        let digest = sha256_hex(serde_json::to_string(&body)?.as_bytes());
        Ok(Manifest {
            tool: body.tool,
            version: body.version,
            command: command.to_string(),
            settings,
            inputs,
            outputs,
            digest,
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}
