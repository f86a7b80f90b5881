//! Run manifests: what was run, on which data, producing which files.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use scrnn::datamodel::write_atomic;
use scrnn::training::TrainConfig;
use scrnn::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const FORMAT: &str = "scrnn-manifest/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format: String,
    pub command: String,
    pub tool_version: String,
    pub config: TrainConfig,
    pub seed: u64,
    pub threads: usize,
    pub deterministic: bool,
    /// Hash over the input files, see [`hash_files`].
    pub data_hash: String,
    pub data_files: Vec<String>,
    pub started_unix_ms: u128,
    pub outputs: Vec<PathBuf>,
}

impl RunManifest {
    pub fn new(command: &str, config: &TrainConfig, deterministic: bool, data: &[PathBuf]) -> Result<RunManifest> {
        let started = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis())
            .unwrap_or(0);
        Ok(RunManifest {
            format: FORMAT.into(),
            command: command.into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            config: config.clone(),
            seed: config.seed,
            threads: config.threads,
            deterministic,
            data_hash: hash_files(data)?,
            data_files: data
                .iter()
                .map(|p| p.file_name().unwrap_or_default().to_string_lossy().into_owned())
                .collect(),
            started_unix_ms: started,
            outputs: Vec::new(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text =
            serde_json::to_string_pretty(self).map_err(|e| Error::Internal(format!("manifest encoding: {e}")))?;
        write_atomic(path, (text + "\n").as_bytes())
    }

    pub fn load(path: &Path) -> Result<RunManifest> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let manifest: RunManifest = serde_json::from_str(&text).map_err(|e| Error::Config {
            key: "manifest".into(),
            message: format!("{}: {e}", path.display()),
        })?;
        if manifest.format != FORMAT {
            return Err(Error::Config {
                key: "manifest".into(),
                message: format!("unsupported format `{}`, expected `{FORMAT}`", manifest.format),
            });
        }
        Ok(manifest)
    }
}

/// SHA-256 over `name NUL length NUL content` of each file, in the given
/// order, as lowercase hex.
pub fn hash_files(paths: &[PathBuf]) -> Result<String> {
    let mut hasher = Sha256::new();
    for path in paths {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let name = path.file_name().unwrap_or_default().to_string_lossy();
        hasher.update(name.as_bytes());
        hasher.update([0]);
        hasher.update(bytes.len().to_string().as_bytes());
        hasher.update([0]);
        hasher.update(&bytes);
    }
    Ok(hex::encode(hasher.finalize()))
}
