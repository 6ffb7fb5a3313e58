//! `<output>.manifest.json`, written beside the primary output of every run.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Serialize;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FileRecord {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub args: Vec<String>,
    /// SHA-256 of each configuration read, by flag name.
    pub config_sha256: Vec<(String, String)>,
    pub inputs: Vec<FileRecord>,
    pub outputs: Vec<FileRecord>,
    pub threads: usize,
    pub wall_time_s: f64,
}

impl RunManifest {
    pub fn new(command: &str, args: Vec<String>) -> Self {
        RunManifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_owned(),
            args,
            config_sha256: Vec::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            threads: rayon::current_num_threads(),
            wall_time_s: 0.0,
        }
    }

    fn record(path: &Path) -> Result<FileRecord, CliError> {
        let bytes = crate::error::read(path)?;
        Ok(FileRecord { path: path.display().to_string(), sha256: crate::config::sha256_hex(&bytes) })
    }

    pub fn config(&mut self, flag: &str, sha: &str) {
        self.config_sha256.push((flag.to_owned(), sha.to_owned()));
    }

    pub fn input(&mut self, path: &Path) -> Result<(), CliError> {
        self.inputs.push(Self::record(path)?);
        Ok(())
    }

    pub fn output(&mut self, path: &Path) -> Result<(), CliError> {
        self.outputs.push(Self::record(path)?);
        Ok(())
    }

    /// Write the manifest beside the first output.
    pub fn finish(mut self, elapsed: Duration) -> Result<PathBuf, CliError> {
        self.wall_time_s = elapsed.as_secs_f64();
        let first = self.outputs.first().ok_or_else(|| CliError::Format("run produced no outputs".into()))?;
        let path = manifest_path(Path::new(&first.path));
        let mut text = serde_json::to_string_pretty(&self).map_err(|e| CliError::Format(e.to_string()))?;
        text.push('\n');
        crate::error::write(&path, text.as_bytes())?;
        Ok(path)
    }
}

pub fn manifest_path(output: &Path) -> PathBuf {
    let mut name = output.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    output.with_file_name(name)
}
