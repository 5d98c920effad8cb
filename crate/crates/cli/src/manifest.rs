//! `<output>.manifest.json`: what it takes to reproduce an output file.

use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: Vec<String>,
    pub seed: u64,
    pub inputs: Vec<InputDigest>,
    pub config: Value,
    pub output: String,
    pub output_sha256: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes).as_slice())
}

pub fn digest_file(path: &Path) -> Result<InputDigest, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(InputDigest {
        path: path.display().to_string(),
        sha256: sha256_hex(&bytes),
    })
}

pub fn manifest_path(output: &Path) -> PathBuf {
    let mut name = output.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    output.with_file_name(name)
}

/// Writes `output` and then its manifest, both atomically.
pub struct Recorder<'a> {
    pub argv: &'a [String],
    pub seed: u64,
}

impl Recorder<'_> {
    pub fn write(
        &self,
        output: &Path,
        bytes: &[u8],
        inputs: &[&Path],
        config: Value,
    ) -> Result<(), CliError> {
        qmatch_core::fsutil::write_atomic(output, bytes)?;
        self.record(output, bytes, inputs, config)
    }

    /// Manifest for an output some other component already wrote.
    pub fn record(
        &self,
        output: &Path,
        bytes: &[u8],
        inputs: &[&Path],
        config: Value,
    ) -> Result<(), CliError> {
        let manifest = RunManifest {
            tool: "qmatch",
            version: env!("CARGO_PKG_VERSION"),
            command: std::iter::once("qmatch".to_string())
                .chain(self.argv.iter().skip(1).cloned())
                .collect(),
            seed: self.seed,
            inputs: inputs.iter().map(|p| digest_file(p)).collect::<Result<_, _>>()?,
            config,
            output: output.display().to_string(),
            output_sha256: sha256_hex(bytes),
        };
        let mut json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
        json.push(b'\n');
        qmatch_core::fsutil::write_atomic(&manifest_path(output), &json)?;
        Ok(())
    }
}
