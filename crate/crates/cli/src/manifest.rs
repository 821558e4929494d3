//! Run manifests: what a command read, what it wrote, and under which settings.

use std::path::{Path, PathBuf};

use anyhow::Context;
use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// Effective arguments after config merging.
    pub args: Vec<String>,
    /// SHA-256 over `args` minus `--config`, `--output` and `--threads`.
    pub config_hash: String,
    pub seed: u64,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub started_at: String,
    pub finished_at: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

/// Arguments that do not change what gets computed.
const UNHASHED: [&str; 3] = ["--config", "--output", "--threads"];

pub fn config_hash(args: &[String]) -> String {
    let mut kept = Vec::with_capacity(args.len());
    let mut skip_next = false;
    for a in args.iter().skip(1) {
        if std::mem::take(&mut skip_next) {
            continue;
        }
        if UNHASHED.contains(&a.as_str()) {
            skip_next = true;
            continue;
        }
        if UNHASHED.iter().any(|u| a.starts_with(&format!("{u}="))) {
            continue;
        }
        kept.push(a.as_str());
    }
    sha256_hex(kept.join("\0").as_bytes())
}

/// Tracks the files one invocation touches. Inputs are hashed as they are
/// read; outputs are written whole and hashed.
pub struct Run {
    command: String,
    args: Vec<String>,
    seed: u64,
    started: DateTime<Utc>,
    inputs: Vec<FileDigest>,
    outputs: Vec<FileDigest>,
}

impl Run {
    pub fn new(command: &str, args: Vec<String>, seed: u64) -> Self {
        Self { command: command.into(), args, seed, started: Utc::now(), inputs: Vec::new(), outputs: Vec::new() }
    }

    pub fn read(&mut self, path: &Path) -> anyhow::Result<Vec<u8>> {
        let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        if !self.inputs.iter().any(|d| Path::new(&d.path) == path) {
            self.inputs.push(digest(path, &bytes));
        }
        Ok(bytes)
    }

    pub fn read_string(&mut self, path: &Path) -> anyhow::Result<String> {
        String::from_utf8(self.read(path)?).with_context(|| format!("{} is not valid UTF-8", path.display()))
    }

    /// Records a file read by someone else (e.g. a model directory member).
    pub fn note_input(&mut self, path: &Path) -> anyhow::Result<()> {
        self.read(path).map(|_| ())
    }

    pub fn write(&mut self, path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
        std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))?;
        self.outputs.push(digest(path, bytes));
        Ok(())
    }

    pub fn manifest(&self) -> RunManifest {
        RunManifest {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: self.command.clone(),
            args: self.args.clone(),
            config_hash: config_hash(&self.args),
            seed: self.seed,
            inputs: self.inputs.clone(),
            outputs: self.outputs.clone(),
            started_at: self.started.to_rfc3339_opts(SecondsFormat::Millis, true),
            finished_at: Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true),
        }
    }

    /// Writes `<artifact>.manifest.json` next to the primary artifact. Does
    /// nothing when the command produced no files.
    pub fn finish(self, artifact: Option<&Path>) -> anyhow::Result<Option<PathBuf>> {
        let Some(artifact) = artifact else { return Ok(None) };
        if self.outputs.is_empty() {
            return Ok(None);
        }
        let path = manifest_path(artifact);
        let json = serde_json::to_string_pretty(&self.manifest())? + "\n";
        std::fs::write(&path, json).with_context(|| format!("writing {}", path.display()))?;
        Ok(Some(path))
    }
}

pub fn manifest_path(artifact: &Path) -> PathBuf {
    let mut name = artifact.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    artifact.with_file_name(name)
}

fn digest(path: &Path, bytes: &[u8]) -> FileDigest {
    FileDigest { path: path.display().to_string(), sha256: sha256_hex(bytes), bytes: bytes.len() as u64 }
}
