//! Per-run provenance: command, resolved settings and file hashes.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
struct FileEntry {
    path: String,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    settings: &'a BTreeMap<String, String>,
    inputs: Vec<FileEntry>,
    outputs: Vec<FileEntry>,
}

/// Files touched by one invocation.
#[derive(Debug, Default)]
pub struct Run {
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

impl Run {
    pub fn read(&mut self, path: &Path) {
        self.inputs.push(path.to_path_buf());
    }

    pub fn wrote(&mut self, path: &Path) {
        self.outputs.push(path.to_path_buf());
    }

    pub fn absorb(&mut self, other: Run) {
        self.inputs.extend(other.inputs);
        self.outputs.extend(other.outputs);
    }

    /// Writes `manifest_path`. Outputs are listed relative to the manifest's
    /// directory; inputs produced by the same run are not repeated.
    pub fn write_manifest(
        &self,
        manifest_path: &Path,
        command: &str,
        settings: &BTreeMap<String, String>,
    ) -> Result<()> {
        let base = manifest_path.parent().unwrap_or(Path::new(""));
        let mut outputs: Vec<&PathBuf> = self.outputs.iter().collect();
        outputs.sort();
        outputs.dedup();
        let mut inputs: Vec<&PathBuf> = self.inputs.iter().filter(|p| !self.outputs.contains(p)).collect();
        inputs.sort();
        inputs.dedup();
        let entry = |p: &PathBuf, relative: bool| -> Result<FileEntry> {
            let shown = if relative {
                p.strip_prefix(base).unwrap_or(p)
            } else {
                p.as_path()
            };
            Ok(FileEntry {
                path: shown.to_string_lossy().replace('\\', "/"),
                sha256: sha256_file(p)?,
            })
        };
        let manifest = Manifest {
            tool: "cotrade",
            version: env!("CARGO_PKG_VERSION"),
            command,
            settings,
            inputs: inputs.into_iter().map(|p| entry(p, false)).collect::<Result<_>>()?,
            outputs: outputs.into_iter().map(|p| entry(p, true)).collect::<Result<_>>()?,
        };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        fs::write(manifest_path, text).with_context(|| format!("writing {}", manifest_path.display()))
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("hashing {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}
