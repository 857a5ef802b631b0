//! Run manifests: what was run, on which inputs, and what it produced.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::CliConfig;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// Command-line arguments after the binary name.
    pub args: Vec<String>,
    /// Fully resolved configuration, flags applied.
    pub config: CliConfig,
    pub inputs: Vec<FileDigest>,
    pub seeds: Vec<u64>,
    /// Output paths are relative to the output directory.
    pub outputs: Vec<FileDigest>,
}

pub fn sha256_file(path: &Path) -> anyhow::Result<String> {
    let mut file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 64 * 1024];
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

/// Collects the files a command writes and records their digests.
pub struct Outputs {
    dir: PathBuf,
    files: Vec<String>,
}

impl Outputs {
    pub fn new(dir: &Path) -> anyhow::Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self { dir: dir.to_path_buf(), files: Vec::new() })
    }

    pub fn path(&mut self, name: &str) -> PathBuf {
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.to_string());
        }
        self.dir.join(name)
    }

    pub fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> anyhow::Result<()> {
        let path = self.path(name);
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
    }

    pub fn create(&mut self, name: &str) -> anyhow::Result<fs::File> {
        let path = self.path(name);
        fs::File::create(&path).with_context(|| format!("creating {}", path.display()))
    }

    /// Digests every recorded output and writes the manifest next to them.
    pub fn finish(
        self,
        command: &str,
        args: Vec<String>,
        config: &CliConfig,
        inputs: &[&Path],
        seeds: Vec<u64>,
    ) -> anyhow::Result<RunManifest> {
        let inputs = inputs
            .iter()
            .map(|p| Ok(FileDigest { path: p.display().to_string(), sha256: sha256_file(p)? }))
            .collect::<anyhow::Result<Vec<_>>>()?;
        let outputs = self
            .files
            .iter()
            .map(|f| Ok(FileDigest { path: f.clone(), sha256: sha256_file(&self.dir.join(f))? }))
            .collect::<anyhow::Result<Vec<_>>>()?;
        let manifest = RunManifest {
            tool: env!("CARGO_BIN_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            args,
            config: config.clone(),
            inputs,
            seeds,
            outputs,
        };
        let path = self.dir.join(MANIFEST_FILE);
        fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
        Ok(manifest)
    }
}

pub fn load_manifest(path: &Path) -> anyhow::Result<RunManifest> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| crate::CliError::new("format", format!("{}: {e}", path.display())).into())
}
