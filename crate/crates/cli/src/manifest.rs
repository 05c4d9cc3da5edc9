//! Run manifests: the validated config, digests of every input and output
//! file, and the LLM usage summary. Paths are stored relative to the
//! manifest's directory so a run directory can be moved or diffed.

use std::io;
use std::path::{Path, PathBuf};

use advneg_core::llm::LedgerSummary;
use advneg_core::seed::{json_digest, sha256_hex};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub outputs: Vec<FileDigest>,
    /// Records the stage could not serve.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub skipped: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    pub config_hash: String,
    pub config: RunConfig,
    pub inputs: Vec<FileDigest>,
    pub stages: Vec<StageRecord>,
    pub ledger: Option<LedgerSummary>,
}

impl RunManifest {
    pub fn skipped_count(&self) -> usize {
        self.stages.iter().map(|s| s.skipped.len()).sum()
    }
}

/// Accumulates a manifest while a command runs.
#[derive(Debug)]
pub struct ManifestBuilder {
    root: PathBuf,
    manifest: RunManifest,
}

fn relative_to(path: &Path, root: &Path) -> String {
    let abs = |p: &Path| std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf());
    pathdiff::diff_paths(abs(path), abs(root))
        .unwrap_or_else(|| path.to_path_buf())
        .to_string_lossy()
        .replace('\\', "/")
}

pub fn digest_file(path: &Path, root: &Path) -> io::Result<FileDigest> {
    let bytes = std::fs::read(path)?;
    Ok(FileDigest {
        path: relative_to(path, root),
        sha256: sha256_hex(&bytes),
        bytes: bytes.len() as u64,
    })
}

impl ManifestBuilder {
    /// `root` is the directory the manifest will be written into.
    pub fn new(command: &str, config: &RunConfig, root: impl Into<PathBuf>) -> Self {
        Self {
            root: root.into(),
            manifest: RunManifest {
                tool_version: TOOL_VERSION.to_string(),
                command: command.to_string(),
                config_hash: json_digest(config),
                config: config.clone(),
                inputs: Vec::new(),
                stages: Vec::new(),
                ledger: None,
            },
        }
    }

    pub fn input(&mut self, path: &Path) -> io::Result<()> {
        let d = digest_file(path, &self.root)?;
        if !self.manifest.inputs.contains(&d) {
            self.manifest.inputs.push(d);
        }
        Ok(())
    }

    pub fn stage(&mut self, name: &str, outputs: &[&Path], skipped: Vec<String>) -> io::Result<()> {
        let outputs = outputs
            .iter()
            .map(|p| digest_file(p, &self.root))
            .collect::<io::Result<Vec<_>>>()?;
        self.manifest.stages.push(StageRecord {
            stage: name.to_string(),
            outputs,
            skipped,
        });
        Ok(())
    }

    pub fn ledger(&mut self, summary: LedgerSummary) {
        self.manifest.ledger = Some(summary);
    }

    pub fn finish(self, path: &Path) -> io::Result<RunManifest> {
        let mut text = serde_json::to_string_pretty(&self.manifest)?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(self.manifest)
    }
}

/// Re-hash every file a manifest lists and return the paths whose digest changed.
pub fn verify(manifest: &RunManifest, root: &Path) -> io::Result<Vec<String>> {
    let mut changed = Vec::new();
    let listed = manifest
        .inputs
        .iter()
        .chain(manifest.stages.iter().flat_map(|s| s.outputs.iter()));
    for d in listed {
        let bytes = std::fs::read(root.join(&d.path))?;
        if sha256_hex(&bytes) != d.sha256 {
            changed.push(d.path.clone());
        }
    }
    Ok(changed)
}
