use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::CliError;

#[derive(Debug, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

/// Record of one subcommand run. Output paths are relative to the output
/// directory, so manifests from different directories compare equal.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub seed: u64,
    pub threads: Option<usize>,
    pub status: String,
    pub config: RunConfig,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::Io(path.to_path_buf(), e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Digests of a file or every file below a directory, sorted by path.
fn digests(path: &Path, label: &str, out: &mut Vec<FileDigest>) -> Result<(), CliError> {
    if path.is_dir() {
        let mut entries: Vec<PathBuf> = fs::read_dir(path)
            .map_err(|e| CliError::Io(path.to_path_buf(), e))?
            .map(|e| e.map(|e| e.path()))
            .collect::<Result<_, _>>()
            .map_err(|e| CliError::Io(path.to_path_buf(), e))?;
        entries.sort();
        for p in entries {
            let name = p.file_name().unwrap_or_default().to_string_lossy().into_owned();
            digests(&p, &format!("{label}/{name}"), out)?;
        }
    } else {
        out.push(FileDigest {
            path: label.to_string(),
            sha256: sha256_file(path)?,
        });
    }
    Ok(())
}

pub struct Recorder {
    inputs: Vec<PathBuf>,
    outputs: Vec<String>,
}

impl Recorder {
    pub fn new() -> Self {
        Self {
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn input(&mut self, path: &Path) {
        self.inputs.push(path.to_path_buf());
    }

    /// `name` is relative to the output directory.
    pub fn output(&mut self, name: impl Into<String>) {
        self.outputs.push(name.into());
    }

    /// Writes `<command>.manifest.json` into the output directory.
    pub fn finish(self, cfg: &RunConfig, command: &str, threads: Option<usize>, status: &str) -> Result<PathBuf, CliError> {
        let mut inputs = Vec::new();
        for p in &self.inputs {
            digests(p, &p.display().to_string(), &mut inputs)?;
        }
        let mut outputs = Vec::new();
        for name in &self.outputs {
            digests(&cfg.output_dir.join(name), name, &mut outputs)?;
        }
        let manifest = Manifest {
            tool: "vaxmap",
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            seed: cfg.seed(),
            threads,
            status: status.to_string(),
            config: cfg.clone(),
            inputs,
            outputs,
        };
        let path = cfg.output_dir.join(format!("{command}.manifest.json"));
        let json = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Validation(e.to_string()))?;
        fs::write(&path, json + "\n").map_err(|e| CliError::Io(path.clone(), e))?;
        Ok(path)
    }
}
