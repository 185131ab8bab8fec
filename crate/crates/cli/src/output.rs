use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{CliError, CliResult};

/// Output directory that remembers what was written to it.
pub struct OutputDir {
    root: PathBuf,
    written: Vec<String>,
}

impl OutputDir {
    pub fn create(root: &Path) -> CliResult<Self> {
        fs::create_dir_all(root).map_err(|source| CliError::Io {
            path: root.to_path_buf(),
            source,
        })?;
        Ok(OutputDir {
            root: root.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> CliResult<()> {
        let path = self.root.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|source| CliError::Io {
                path: parent.to_path_buf(),
                source,
            })?;
        }
        fs::write(&path, bytes).map_err(|source| CliError::Io { path, source })?;
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<()> {
        let mut text = serde_json::to_string_pretty(value).map_err(decouple_core::Error::from)?;
        text.push('\n');
        self.write_bytes(name, text.as_bytes())
    }

    /// Runs a core CSV writer into memory, then to `name`.
    pub fn write_with<F>(&mut self, name: &str, f: F) -> CliResult<()>
    where
        F: FnOnce(&mut Vec<u8>) -> decouple_core::Result<()>,
    {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.write_bytes(name, &buf)
    }

    /// `manifest.json`: the resolved configuration, seeds, outputs and the
    /// only timestamp of the run.
    pub fn finish<C: Serialize>(
        mut self,
        command: &str,
        run: &RunInfo,
        config: &C,
    ) -> CliResult<()> {
        let manifest = Manifest {
            tool: "decouple",
            version: env!("CARGO_PKG_VERSION"),
            command,
            created: chrono::Utc::now().to_rfc3339(),
            master_seed: run.seed,
            workers: run.workers,
            config,
            outputs: &self.written.clone(),
        };
        self.write_json("manifest.json", &manifest)
    }
}

#[derive(Debug, Clone)]
pub struct RunInfo {
    pub seed: u64,
    pub workers: Option<usize>,
}

#[derive(Serialize)]
struct Manifest<'a, C: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    created: String,
    master_seed: u64,
    workers: Option<usize>,
    config: &'a C,
    outputs: &'a [String],
}

/// Serializes a resolved configuration for the manifest.
pub fn to_value<T: Serialize>(value: &T) -> serde_json::Value {
    serde_json::to_value(value).expect("resolved configs serialize")
}
