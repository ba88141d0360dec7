//! Run manifests written next to every output file.
//!
//! The manifest lives in `<output>.manifest.json`; the output itself only
//! carries a reference (file name plus a digest of the manifest with its
//! timestamp removed), so reruns with the same inputs and flags produce
//! byte-identical outputs.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const TOOL_NAME: &str = "cobranch";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    pub flags: BTreeMap<String, Value>,
    pub inputs: BTreeMap<String, InputDigest>,
    pub seeds: BTreeMap<String, u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp_unix: Option<u64>,
}

/// Reference embedded into an output file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRef {
    pub file: String,
    pub digest: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn file_digest(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

impl RunManifest {
    pub fn new(subcommand: &str) -> Self {
        Self {
            tool: TOOL_NAME.into(),
            version: TOOL_VERSION.into(),
            subcommand: subcommand.into(),
            flags: BTreeMap::new(),
            inputs: BTreeMap::new(),
            seeds: BTreeMap::new(),
            timestamp_unix: None,
        }
    }

    pub fn with_flags(mut self, flags: &Value) -> Self {
        if let Value::Object(map) = flags {
            for (k, v) in map {
                if !v.is_null() {
                    self.flags.insert(k.clone(), v.clone());
                }
            }
        }
        self
    }

    pub fn add_input(&mut self, role: &str, path: &Path) -> Result<()> {
        self.inputs.insert(
            role.into(),
            InputDigest {
                path: path.display().to_string(),
                sha256: file_digest(path)?,
            },
        );
        Ok(())
    }

    pub fn add_seed(&mut self, name: &str, seed: u64) {
        self.seeds.insert(name.into(), seed);
    }

    /// Digest of the manifest without its timestamp.
    pub fn digest(&self) -> String {
        let mut stable = self.clone();
        stable.timestamp_unix = None;
        sha256_hex(
            serde_json::to_string(&stable)
                .expect("manifest serializes")
                .as_bytes(),
        )
    }

    pub fn sidecar_path(output: &Path) -> PathBuf {
        let mut name = output
            .file_name()
            .map(|n| n.to_os_string())
            .unwrap_or_default();
        name.push(".manifest.json");
        output.with_file_name(name)
    }

    /// Stamps the current time, writes the sidecar and returns the reference
    /// to embed in `output`.
    pub fn write_for(&self, output: &Path) -> Result<ManifestRef> {
        let mut stamped = self.clone();
        stamped.timestamp_unix = Some(
            SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        );
        let sidecar = Self::sidecar_path(output);
        if let Some(dir) = sidecar.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let mut text = serde_json::to_string_pretty(&stamped)?;
        text.push('\n');
        fs::write(&sidecar, text).map_err(|e| Error::io(&sidecar, e))?;
        Ok(ManifestRef {
            file: sidecar
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default(),
            digest: self.digest(),
        })
    }
}
