//! Atomic output files and reproduction manifests.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{run, CliError, Command, RunConfig};

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Relative to the output directory.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub tool: String,
    pub version: String,
    pub command: Command,
    pub config_hash: String,
    pub seed: u64,
    pub config: RunConfig,
    pub files: Vec<FileEntry>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn config_hash(config: &RunConfig) -> String {
    sha256_hex(config.hashed_value().to_string().as_bytes())
}

pub fn manifest_name(command: Command) -> String {
    format!("manifest-{}.json", command.name())
}

fn runtime(path: &Path, e: std::io::Error) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

/// Writes files as temp + rename and records their hashes.
#[derive(Debug)]
pub struct Outputs {
    dir: PathBuf,
    files: Vec<FileEntry>,
}

impl Outputs {
    pub fn new(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| runtime(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        let path = self.dir.join(name);
        write_atomic(&path, bytes)?;
        self.files.retain(|f| f.path != name);
        self.files.push(FileEntry {
            path: name.to_string(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len() as u64,
        });
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    pub fn finish(self, command: Command, config: &RunConfig) -> Result<Manifest, CliError> {
        let manifest = Manifest {
            schema_version: MANIFEST_SCHEMA_VERSION,
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command,
            config_hash: config_hash(config),
            seed: config.seed,
            config: config.clone(),
            files: self.files,
        };
        let mut text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Runtime(e.to_string()))?;
        text.push('\n');
        write_atomic(&self.dir.join(manifest_name(command)), text.as_bytes())?;
        Ok(manifest)
    }
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = path.with_file_name(format!(".{name}.tmp-{}", std::process::id()));
    fs::write(&tmp, bytes).map_err(|e| runtime(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| runtime(path, e))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplayReport {
    pub matched: Vec<String>,
    /// Files whose regenerated hash differs or that were not produced.
    pub mismatched: Vec<String>,
}

/// Reruns the manifest's command with its stored config, writing into
/// `output_dir` (default: the manifest's own), and compares file hashes.
pub fn replay(manifest_path: &Path, output_dir: Option<&Path>) -> Result<ReplayReport, CliError> {
    let text = fs::read_to_string(manifest_path).map_err(|e| CliError::Validation(format!("{}: {e}", manifest_path.display())))?;
    let m: Manifest = serde_json::from_str(&text)
        .map_err(|e| CliError::Validation(format!("{}: {e}", manifest_path.display())))?;
    if m.schema_version != MANIFEST_SCHEMA_VERSION {
        return Err(CliError::Validation(format!("unsupported manifest schema_version {}", m.schema_version)));
    }
    if config_hash(&m.config) != m.config_hash {
        return Err(CliError::Validation("manifest config does not match its config_hash".into()));
    }
    let mut config = m.config.clone();
    if let Some(dir) = output_dir {
        config.output_dir = dir.to_path_buf();
    }
    let fresh = run(m.command, &config)?;
    let mut report = ReplayReport {
        matched: Vec::new(),
        mismatched: Vec::new(),
    };
    for f in &m.files {
        match fresh.files.iter().find(|g| g.path == f.path) {
            Some(g) if g.sha256 == f.sha256 => report.matched.push(f.path.clone()),
            _ => report.mismatched.push(f.path.clone()),
        }
    }
    Ok(report)
}
